#include "diablo/attention.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "diablo/errors.hpp"
#include "diablo/ops.hpp"

namespace diablo {

namespace {

// Fixed offsets so that each parameter group draws from its own stream.
constexpr std::uint64_t kPhiStream = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kPsiStream = 0xbf58476d1ce4e5b9ULL;
constexpr std::uint64_t kDictionaryStream = 0x94d049bb133111ebULL;
constexpr std::uint64_t kHeadStream = 0x2545f4914f6cdd1dULL;

void require_map(const Tensor& t, const char* what) {
  if (t.rank() != 3) {
    throw ShapeError(fmt::format("{} must be an h×w×c map, got {}", what, shape_string(t.shape())));
  }
}

void require_mode(const Dictionary& d, SelectionMode mode) {
  if (d.mode != mode) {
    throw ConfigError(mode == SelectionMode::feature_wise
                          ? "feature-wise selection needs a feature-wise dictionary"
                          : "dimension-wise selection needs a dimension-wise dictionary");
  }
}

void require_direction_width(const Tensor& phi_map, const Dictionary& d) {
  require_map(phi_map, "φ(F)");
  if (phi_map.extent(2) != d.direction_width()) {
    throw ShapeError(fmt::format("φ(F) has {} channels but dictionary directions have {}",
                                 phi_map.extent(2), d.direction_width()));
  }
}

// Cosine similarity of every location of φ(F) with every dictionary
// direction: (h·w) × (N) or (h·w) × (N·c).
Tensor similarities(const Tensor& phi_map, const Dictionary& d) {
  const std::size_t locations = phi_map.extent(0) * phi_map.extent(1);
  const std::size_t m = d.direction_width();
  const Tensor features = l2_normalize(reshape(phi_map, {locations, m}), 1);
  const Tensor directions = l2_normalize(reshape(d.entries, {d.entries.size() / m, m}), 1);
  return matmul(features, transpose(directions));
}

}  // namespace

Dictionary init_dictionary(SelectionMode mode, std::size_t branches, std::size_t width,
                           std::size_t channels, double hardness, std::uint64_t seed) {
  if (branches < 1) throw ArgumentError("dictionary needs at least one entry");
  if (width == 0) throw ArgumentError("dictionary direction width must be positive");
  if (mode == SelectionMode::dimension_wise && channels == 0) {
    throw ArgumentError("dimension-wise dictionary needs a positive channel count");
  }
  if (!(hardness > 0.0)) throw ArgumentError("hardness must be positive");
  const std::size_t directions =
      mode == SelectionMode::dimension_wise ? branches * channels : branches;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> values(directions * width);
  for (std::size_t r = 0; r < directions; ++r) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t k = 0; k < width; ++k) {
        values[r * width + k] = unit(rng);
        norm += values[r * width + k] * values[r * width + k];
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (std::size_t k = 0; k < width; ++k) values[r * width + k] /= norm;
  }
  Shape shape = mode == SelectionMode::dimension_wise ? Shape{branches, channels, width}
                                                      : Shape{branches, width};
  return Dictionary{mode, Tensor(std::move(shape), std::move(values), true), hardness};
}

AttentionTensor select_feature_wise(const Tensor& phi_map, const Dictionary& dictionary,
                                    std::size_t channels) {
  require_mode(dictionary, SelectionMode::feature_wise);
  require_direction_width(phi_map, dictionary);
  if (channels == 0) throw ShapeError("feature-wise selection needs a positive channel count");
  const std::size_t h = phi_map.extent(0), w = phi_map.extent(1);
  const std::size_t n = dictionary.branches();
  const Tensor weights = softmax_over_axis(similarities(phi_map, dictionary), 1, dictionary.hardness);
  const Tensor per_location = reshape(transpose(weights), {n, h, w, 1});
  return {broadcast_axis(per_location, 3, channels)};
}

AttentionTensor select_dimension_wise(const Tensor& phi_map, const Dictionary& dictionary) {
  require_mode(dictionary, SelectionMode::dimension_wise);
  require_direction_width(phi_map, dictionary);
  const std::size_t h = phi_map.extent(0), w = phi_map.extent(1);
  const std::size_t n = dictionary.branches(), c = dictionary.channels();
  const Tensor scores = reshape(similarities(phi_map, dictionary), {h, w, n, c});
  const Tensor weights = softmax_over_axis(scores, 2, dictionary.hardness);
  return {permute(weights, {2, 0, 1, 3})};
}

AttentionTensor select_attention(const Tensor& phi_map, const Dictionary& dictionary,
                                 std::size_t channels) {
  if (dictionary.mode == SelectionMode::feature_wise) {
    return select_feature_wise(phi_map, dictionary, channels);
  }
  if (channels != dictionary.channels()) {
    throw ShapeError(fmt::format("dimension-wise dictionary weights {} channels, map has {}",
                                 dictionary.channels(), channels));
  }
  return select_dimension_wise(phi_map, dictionary);
}

AttentionTensor hard_assign(const Tensor& phi_map, const Dictionary& dictionary,
                            std::size_t channels) {
  require_direction_width(phi_map, dictionary);
  NoTapeScope no_tape;
  const std::size_t h = phi_map.extent(0), w = phi_map.extent(1);
  const std::size_t n = dictionary.branches();
  const bool per_dimension = dictionary.mode == SelectionMode::dimension_wise;
  if (per_dimension) channels = dictionary.channels();
  if (channels == 0) throw ShapeError("hard_assign needs a positive channel count");
  const Tensor scores = similarities(phi_map, dictionary);
  const auto s = scores.values();
  const std::size_t row = scores.extent(1);

  std::vector<double> out(n * h * w * channels, 0.0);
  for (std::size_t p = 0; p < h * w; ++p) {
    for (std::size_t k = 0; k < channels; ++k) {
      std::size_t best = 0;
      double best_score = -INFINITY;
      for (std::size_t e = 0; e < n; ++e) {
        const double v = s[p * row + (per_dimension ? e * channels + k : e)];
        if (v > best_score) {
          best_score = v;
          best = e;
        }
      }
      out[(best * h * w + p) * channels + k] = 1.0;
    }
  }
  return {Tensor(Shape{n, h, w, channels}, std::move(out))};
}

std::vector<Tensor> merge(const Tensor& feature_map, const AttentionTensor& attention) {
  require_map(feature_map, "merge input");
  const Tensor& a = attention.weights;
  const std::size_t h = feature_map.extent(0), w = feature_map.extent(1), c = feature_map.extent(2);
  if (a.rank() != 4 || a.extent(1) != h || a.extent(2) != w || a.extent(3) != c) {
    throw ShapeError(fmt::format("attention {} does not match feature map {}",
                                 shape_string(a.shape()), shape_string(feature_map.shape())));
  }
  const std::size_t n = a.extent(0);
  const Tensor repeated = broadcast_axis(reshape(feature_map, {1, h, w, c}), 0, n);
  const Tensor weighted = mul(repeated, a);
  std::vector<Tensor> out;
  out.reserve(n);
  for (std::size_t b = 0; b < n; ++b) out.push_back(select(weighted, b));
  return out;
}

Tensor branch_head(const Tensor& branch_map, const BranchHead& head) {
  require_map(branch_map, "branch map");
  const Tensor pooled = spatial_mean_pool(branch_map);
  const Tensor embedded = affine(reshape(pooled, {1, pooled.size()}), head.weight, head.bias);
  return l2_normalize(reshape(embedded, {embedded.size()}), 0);
}

void DiabloConfig::validate() const {
  if (branches < 1) throw ConfigError("must be at least 1", "model.branches");
  if (embedding_size == 0) throw ConfigError("must be positive", "model.embedding_size");
  if (embedding_size % branches != 0) {
    throw ConfigError(fmt::format("embedding size {} is not divisible by {} branches",
                                  embedding_size, branches),
                      "model.branches");
  }
  if (!(hardness > 0.0) || !std::isfinite(hardness)) {
    throw ConfigError("must be positive and finite", "model.hardness");
  }
  for (std::size_t v : phi_widths) {
    if (v == 0) throw ConfigError("widths must be positive", "model.phi_widths");
  }
  for (std::size_t v : psi_widths) {
    if (v == 0) throw ConfigError("widths must be positive", "model.psi_widths");
  }
}

std::vector<Tensor> DiabloModel::parameters() const {
  std::vector<Tensor> out = phi.parameters();
  for (const Tensor& t : psi.parameters()) out.push_back(t);
  out.push_back(dictionary.entries);
  for (const BranchHead& h : heads) {
    out.push_back(h.weight);
    out.push_back(h.bias);
  }
  return out;
}

DiabloModel init_model(const DiabloConfig& config, std::size_t channels, std::uint64_t seed) {
  config.validate();
  if (channels == 0) throw ArgumentError("feature map must have at least one channel");
  DiabloModel model;
  model.config = config;
  const auto widths_or_default = [channels](const std::vector<std::size_t>& w) {
    return w.empty() ? std::vector<std::size_t>{channels, channels} : w;
  };
  model.phi = init_stack({channels, widths_or_default(config.phi_widths), {}, seed ^ kPhiStream});
  model.psi = init_stack({channels, widths_or_default(config.psi_widths), {}, seed ^ kPsiStream});

  // The dictionary weights the map that gets merged: F before ψ, or ψ(F).
  const std::size_t merged = config.strategy == Strategy::pre_attention ? channels
                                                                        : model.psi.out_width();
  if (config.strategy == Strategy::pre_attention && model.psi.in_width() != channels) {
    throw ConfigError("ψ must accept the feature map width", "model.psi_widths");
  }
  model.dictionary = init_dictionary(config.mode, config.branches, model.phi.out_width(), merged,
                                     config.hardness, seed ^ kDictionaryStream);

  std::mt19937_64 rng(seed ^ kHeadStream);
  const std::size_t in = model.psi.out_width();
  const std::size_t out = config.branch_size();
  std::normal_distribution<double> init(0.0, std::sqrt(1.0 / static_cast<double>(in)));
  for (std::size_t b = 0; b < config.branches; ++b) {
    std::vector<double> w(in * out);
    for (double& v : w) v = init(rng);
    model.heads.push_back({Tensor(Shape{in, out}, std::move(w), true), Tensor(Shape{out}, 0.0, true)});
  }
  return model;
}

AttentionTensor attention_maps(const Tensor& feature_map, const DiabloModel& model) {
  require_map(feature_map, "feature map");
  const Tensor phi_map = forward_stack(model.phi, feature_map);
  const std::size_t merged = model.config.strategy == Strategy::pre_attention
                                 ? feature_map.extent(2)
                                 : model.psi.out_width();
  return select_attention(phi_map, model.dictionary, merged);
}

std::vector<Tensor> branch_maps(const Tensor& feature_map, const DiabloModel& model) {
  const AttentionTensor attention = attention_maps(feature_map, model);
  if (model.config.strategy == Strategy::post_attention) {
    return merge(forward_stack(model.psi, feature_map), attention);
  }
  std::vector<Tensor> refined;
  for (const Tensor& g : merge(feature_map, attention)) refined.push_back(forward_stack(model.psi, g));
  return refined;
}

std::vector<Tensor> branch_embeddings(const Tensor& feature_map, const DiabloModel& model) {
  const std::vector<Tensor> maps = branch_maps(feature_map, model);
  std::vector<Tensor> out;
  out.reserve(maps.size());
  for (std::size_t b = 0; b < maps.size(); ++b) out.push_back(branch_head(maps[b], model.heads[b]));
  return out;
}

Tensor post_attention_forward(const Tensor& feature_map, const DiabloModel& model) {
  if (model.config.strategy != Strategy::post_attention) {
    throw ConfigError("model was built for pre-attention", "model.strategy");
  }
  return concat(branch_embeddings(feature_map, model));
}

Tensor pre_attention_forward(const Tensor& feature_map, const DiabloModel& model) {
  if (model.config.strategy != Strategy::pre_attention) {
    throw ConfigError("model was built for post-attention", "model.strategy");
  }
  return concat(branch_embeddings(feature_map, model));
}

Tensor diablo_forward(const Tensor& feature_map, const DiabloModel& model) {
  return concat(branch_embeddings(feature_map, model));
}

Tensor baseline_forward(const Tensor& feature_map, const LayerStack& psi, const BranchHead& head) {
  return branch_head(forward_stack(psi, feature_map), head);
}

}  // namespace diablo
