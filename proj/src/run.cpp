#include "diablo/run.hpp"

#include <random>

#include <fmt/format.h>

#include "diablo/errors.hpp"
#include "diablo/ops.hpp"
#include "diablo/training.hpp"

namespace diablo {

namespace {

constexpr std::uint64_t kExtractorStream = 0xd1b54a32d192ed03ULL;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t batch_seed(std::uint64_t seed, std::size_t epoch, std::size_t batch) {
  return splitmix64(splitmix64(splitmix64(seed) ^ epoch) ^ batch);
}

}  // namespace

std::vector<Tensor> DiabloNetwork::parameters() const {
  std::vector<Tensor> out = extractor.parameters();
  for (const Tensor& t : model.parameters()) out.push_back(t);
  return out;
}

std::vector<std::string> DiabloNetwork::parameter_names() const {
  std::vector<std::string> names;
  const auto stack_names = [&](const char* prefix, const LayerStack& s) {
    for (std::size_t k = 0; k < s.weights.size(); ++k) {
      names.push_back(fmt::format("{}.{}.weight", prefix, k));
      names.push_back(fmt::format("{}.{}.bias", prefix, k));
    }
  };
  stack_names("extractor", extractor);
  stack_names("phi", model.phi);
  stack_names("psi", model.psi);
  names.emplace_back("dictionary");
  for (std::size_t b = 0; b < model.heads.size(); ++b) {
    names.push_back(fmt::format("head.{}.weight", b));
    names.push_back(fmt::format("head.{}.bias", b));
  }
  return names;
}

DiabloNetwork build_network(const RunConfig& config, std::size_t image_height,
                            std::size_t image_width) {
  const ModelSection& m = config.model;
  if (image_height % m.grid_rows != 0 || image_width % m.grid_cols != 0) {
    throw ConfigError(fmt::format("{}x{} images are not divisible by a {}x{} grid", image_height,
                                  image_width, m.grid_rows, m.grid_cols),
                      "model.grid");
  }
  const std::size_t patch = (image_height / m.grid_rows) * (image_width / m.grid_cols);
  DiabloNetwork net;
  net.grid_rows = m.grid_rows;
  net.grid_cols = m.grid_cols;
  net.extractor = init_stack({patch, m.extractor_widths, {}, config.seed ^ kExtractorStream});
  net.model = init_model(m.diablo, net.extractor.out_width(), config.seed);
  return net;
}

Tensor embed(const DiabloNetwork& network, const Image& image) {
  return diablo_forward(
      extract_features(image, network.extractor, network.grid_rows, network.grid_cols),
      network.model);
}

EmbeddingIndex embed_dataset(const DiabloNetwork& network, const Dataset& dataset) {
  NoTapeScope no_tape;
  EmbeddingIndex index;
  for (const Sample& s : dataset.samples) {
    const Tensor e = embed(network, s.image);
    index.add({e.values().begin(), e.values().end()}, s.label);
  }
  return index;
}

Dataset load_dataset(const DataSection& data) {
  if (data.source == DataSource::synthetic) return generate_synthetic(data.synthetic);
  return load_idx(data.images, data.labels);
}

ClassSplit run_split(const RunConfig& config, const Dataset& dataset) {
  return make_splits(dataset.classes(), {1, config.evaluation.train_fraction, config.seed}).front();
}

RunResult train_run(const RunConfig& config, const Dataset& dataset, const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.empty()) throw ArgumentError("cannot train on an empty dataset");
  const Image& first = dataset.samples.front().image;
  const ClassSplit split = run_split(config, dataset);
  const Dataset train = dataset.subset(split.train);
  const Dataset val = dataset.subset(split.val);

  RunResult result;
  result.network = build_network(config, first.height, first.width);
  DiabloNetwork& net = result.network;
  std::vector<Tensor> params = net.parameters();
  AdamState adam;
  adam.learning_rate = config.optimizer.learning_rate;
  adam.beta1 = config.optimizer.beta1;
  adam.beta2 = config.optimizer.beta2;
  adam.epsilon = config.optimizer.epsilon;

  const TrainingSection& t = config.training;
  for (std::size_t epoch = 1; epoch <= t.epochs; ++epoch) {
    double loss_total = 0.0;
    for (std::size_t b = 0; b < t.batches_per_epoch; ++b) {
      const std::uint64_t seed = batch_seed(config.seed, epoch, b);
      Batch batch = sample_batch(train, t.classes_per_batch, t.samples_per_class, seed);
      batch.branches = config.model.diablo.branches;
      std::mt19937_64 flip_rng(splitmix64(seed));
      std::bernoulli_distribution coin(0.5);

      Tape tape;
      TapeScope scope(tape);
      for (std::size_t i : batch.sample_indices) {
        const Image& img = train.samples[i].image;
        batch.embeddings.push_back(config.data.flip && coin(flip_rng) ? embed(net, flip_horizontal(img))
                                                                       : embed(net, img));
      }
      const Tensor loss = compute_loss(batch, config.loss);
      loss_total += loss.item();
      tape.backward(loss);
      adam_step(params, adam);
      for (Tensor& p : params) p.zero_grad();
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = loss_total / static_cast<double>(t.batches_per_epoch);
    m.recall_at_1 = recall_at_k(embed_dataset(net, val), {1}).at(1);
    result.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

std::map<std::size_t, double> evaluate_run(const RunConfig& config, const DiabloNetwork& network,
                                           const Dataset& dataset,
                                           const std::vector<std::size_t>& ks) {
  const ClassSplit split = run_split(config, dataset);
  return recall_at_k(embed_dataset(network, dataset.subset(split.val)), ks);
}

Checkpoint make_checkpoint(const RunConfig& config, const DiabloNetwork& network) {
  Checkpoint ck;
  ck.config_json = config_to_json(config).dump();
  const std::vector<Tensor> params = network.parameters();
  const std::vector<std::string> names = network.parameter_names();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ck.parameters.push_back(
        {names[i], params[i].shape(), {params[i].values().begin(), params[i].values().end()}});
  }
  return ck;
}

DiabloNetwork restore_network(const Checkpoint& checkpoint, const RunConfig& config,
                              std::size_t image_height, std::size_t image_width) {
  DiabloNetwork net = build_network(config, image_height, image_width);
  std::vector<Tensor> params = net.parameters();
  const std::vector<std::string> names = net.parameter_names();
  if (checkpoint.parameters.size() != params.size()) {
    throw FormatError(fmt::format("checkpoint holds {} parameters, network needs {}",
                                  checkpoint.parameters.size(), params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const NamedTensor& src = checkpoint.parameters[i];
    if (src.name != names[i] || src.shape != params[i].shape()) {
      throw FormatError(fmt::format("checkpoint parameter {} {} does not match {} {}", src.name,
                                    shape_string(src.shape), names[i],
                                    shape_string(params[i].shape())));
    }
    std::copy(src.values.begin(), src.values.end(), params[i].mutable_values().begin());
  }
  return net;
}

std::string metrics_csv(const std::vector<EpochMetrics>& epochs) {
  std::string out = "epoch,loss,recall_at_1\n";
  for (const EpochMetrics& m : epochs) out += fmt::format("{},{},{}\n", m.epoch, m.loss, m.recall_at_1);
  return out;
}

std::string recall_csv(const std::map<std::size_t, double>& recall) {
  std::string out = "k,recall\n";
  for (const auto& [k, r] : recall) out += fmt::format("{},{}\n", k, r);
  return out;
}

}  // namespace diablo
