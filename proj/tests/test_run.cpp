#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "diablo/checkpoint.hpp"
#include "diablo/config.hpp"
#include "diablo/errors.hpp"
#include "diablo/run.hpp"

using namespace diablo;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("diablo_run_") + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

RunConfig small_config() {
  RunConfig cfg;
  cfg.model.diablo.branches = 2;
  cfg.model.diablo.embedding_size = 16;
  cfg.data.synthetic.classes = 8;
  cfg.data.synthetic.samples_per_class = 6;
  cfg.optimizer.learning_rate = 1e-3;
  cfg.training.epochs = 2;
  cfg.training.batches_per_epoch = 3;
  cfg.training.classes_per_batch = 2;
  cfg.training.samples_per_class = 2;
  cfg.evaluation.ks = {1, 2};
  return cfg;
}

std::string config_error_path(const json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<none>";
}

}  // namespace

TEST(Config, DefaultsMatchStatedSettings) {
  const RunConfig cfg = config_from_json(json::object());
  EXPECT_EQ(cfg.model.diablo.embedding_size, 512u);
  EXPECT_EQ(cfg.model.diablo.hardness, 5.0);
  EXPECT_EQ(cfg.loss.triplet_margin, 0.1);
  EXPECT_EQ(cfg.loss.margin, 0.5);
  EXPECT_EQ(cfg.loss.negative_weight, 25.0);
  EXPECT_EQ(cfg.optimizer.learning_rate, 1e-5);
  EXPECT_EQ(cfg.optimizer.beta1, 0.9);
  EXPECT_EQ(cfg.optimizer.beta2, 0.999);
  EXPECT_EQ(cfg.optimizer.epsilon, 1e-8);
}

TEST(Config, JsonRoundTrip) {
  RunConfig cfg = small_config();
  cfg.model.diablo.strategy = Strategy::post_attention;
  cfg.model.diablo.mode = SelectionMode::feature_wise;
  cfg.loss.kind = LossKind::triplet;
  cfg.seed = 99;
  const json j = config_to_json(cfg);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
  EXPECT_EQ(j["model"]["strategy"], "post-attention");
}

TEST(Config, UnknownKeysRejectedWithPath) {
  EXPECT_EQ(config_error_path(json{{"bogus", 1}}), "bogus");
  EXPECT_EQ(config_error_path(json{{"model", {{"branchez", 4}}}}), "model.branchez");
  EXPECT_EQ(config_error_path(json{{"data", {{"synthetic", {{"pattern_size", 4}}}}}}),
            "data.synthetic.pattern_size");
}

TEST(Config, TypeAndValueErrorsNameTheField) {
  EXPECT_EQ(config_error_path(json{{"model", {{"branches", "eight"}}}}), "model.branches");
  EXPECT_EQ(config_error_path(json{{"model", {{"branches", 3}}}}), "model.branches");
  EXPECT_EQ(config_error_path(json{{"model", {{"mode", "pixel-wise"}}}}), "model.mode");
  EXPECT_EQ(config_error_path(json{{"loss", {{"kind", "hinge"}}}}), "loss.kind");
  EXPECT_EQ(config_error_path(json{{"optimizer", {{"learning_rate", -1}}}}), "optimizer.learning_rate");
  EXPECT_EQ(config_error_path(json{{"evaluation", {{"ks", {1, -2}}}}}), "evaluation.ks[1]");
  EXPECT_EQ(config_error_path(json{{"training", {{"epochs", 2.5}}}}), "training.epochs");
}

TEST(Config, ShortNamesAccepted) {
  EXPECT_EQ(parse_strategy("pre"), Strategy::pre_attention);
  EXPECT_EQ(parse_strategy("post-attention"), Strategy::post_attention);
  EXPECT_EQ(parse_mode("feature"), SelectionMode::feature_wise);
  EXPECT_EQ(parse_mode("dimension-wise"), SelectionMode::dimension_wise);
  EXPECT_THROW(parse_mode("channel"), ConfigError);
}

TEST(Config, LoadFromFile) {
  TempDir dir;
  std::ofstream(dir / "c.json") << R"({"seed": 5, "training": {"epochs": 3}})";
  const RunConfig cfg = load_config(dir / "c.json");
  EXPECT_EQ(cfg.seed, 5u);
  EXPECT_EQ(cfg.training.epochs, 3u);
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
  EXPECT_THROW(load_config(dir / "missing.json"), IoError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  Checkpoint ck;
  ck.config_json = R"({"seed":1})";
  ck.parameters.push_back({"a", {2, 2}, {1.0 / 3.0, -0.0, 1e-300, std::nextafter(1.0, 2.0)}});
  ck.parameters.push_back({"b", {3}, {INFINITY, -2.5, 6.02e23}});
  save_checkpoint(dir / "c.bin", ck);
  const Checkpoint back = load_checkpoint(dir / "c.bin");
  EXPECT_EQ(back.version, kCheckpointVersion);
  EXPECT_EQ(back.config_json, ck.config_json);
  ASSERT_EQ(back.parameters.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.parameters[i].name, ck.parameters[i].name);
    EXPECT_EQ(back.parameters[i].shape, ck.parameters[i].shape);
    ASSERT_EQ(back.parameters[i].values.size(), ck.parameters[i].values.size());
    EXPECT_EQ(std::memcmp(back.parameters[i].values.data(), ck.parameters[i].values.data(),
                          ck.parameters[i].values.size() * sizeof(double)),
              0);
  }
}

TEST(Checkpoint, LayoutHeader) {
  TempDir dir;
  Checkpoint ck;
  ck.config_json = "{}";
  ck.parameters.push_back({"w", {1}, {1.0}});
  save_checkpoint(dir / "c.bin", ck);
  std::ifstream in(dir / "c.bin", std::ios::binary);
  std::vector<unsigned char> b{std::istreambuf_iterator<char>(in), {}};
  ASSERT_GE(b.size(), 16u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 8), "DIABLOCK");
  EXPECT_EQ(b[8], kCheckpointVersion);
  EXPECT_EQ(b[12], 1);
  // trailing float64 1.0, little-endian
  EXPECT_EQ(b.back(), 0x3f);
  EXPECT_EQ(b[b.size() - 2], 0xf0);
}

TEST(Checkpoint, CorruptFilesRaiseFormatError) {
  TempDir dir;
  Checkpoint ck;
  ck.config_json = "{}";
  ck.parameters.push_back({"w", {2}, {1.0, 2.0}});
  save_checkpoint(dir / "c.bin", ck);
  std::ifstream in(dir / "c.bin", std::ios::binary);
  std::vector<char> b{std::istreambuf_iterator<char>(in), {}};

  auto write = [&](const std::vector<char>& bytes) {
    std::ofstream(dir / "x.bin", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    return dir / "x.bin";
  };
  auto bad_magic = b;
  bad_magic[0] = 'X';
  EXPECT_THROW(load_checkpoint(write(bad_magic)), FormatError);
  auto bad_version = b;
  bad_version[8] = 9;
  EXPECT_THROW(load_checkpoint(write(bad_version)), FormatError);
  EXPECT_THROW(load_checkpoint(write({b.begin(), b.end() - 3})), FormatError);
  auto trailing = b;
  trailing.push_back(0);
  EXPECT_THROW(load_checkpoint(write(trailing)), FormatError);
  EXPECT_THROW(load_checkpoint(dir / "missing.bin"), IoError);
}

TEST(Run, SmokeTrainingIsFiniteAndDeterministic) {
  const RunConfig cfg = small_config();
  const Dataset data = load_dataset(cfg.data);
  const RunResult a = train_run(cfg, data);
  ASSERT_EQ(a.epochs.size(), 2u);
  for (const auto& e : a.epochs) {
    EXPECT_TRUE(std::isfinite(e.loss));
    EXPECT_GE(e.recall_at_1, 0.0);
    EXPECT_LE(e.recall_at_1, 1.0);
  }
  const RunResult b = train_run(cfg, data);
  EXPECT_EQ(metrics_csv(a.epochs), metrics_csv(b.epochs));
  EXPECT_EQ(metrics_csv(a.epochs).substr(0, 22), "epoch,loss,recall_at_1");
}

TEST(Run, EvaluateMatchesFinalEpoch) {
  const RunConfig cfg = small_config();
  const Dataset data = load_dataset(cfg.data);
  const RunResult r = train_run(cfg, data);
  const auto recall = evaluate_run(cfg, r.network, data, {1, 2});
  EXPECT_EQ(recall.at(1), r.epochs.back().recall_at_1);
  EXPECT_LE(recall.at(1), recall.at(2));
}

TEST(Run, SplitIsDisjointAndSeeded) {
  RunConfig cfg = small_config();
  const Dataset data = load_dataset(cfg.data);
  const ClassSplit s = run_split(cfg, data);
  EXPECT_EQ(s.train.size() + s.val.size(), 8u);
  cfg.seed = 1;
  const ClassSplit t = run_split(cfg, data);
  EXPECT_NE(s.train, t.train);
}

TEST(Run, CheckpointRestoresIdenticalEmbeddings) {
  TempDir dir;
  const RunConfig cfg = small_config();
  const Dataset data = load_dataset(cfg.data);
  const RunResult r = train_run(cfg, data);
  save_checkpoint(dir / "c.bin", make_checkpoint(cfg, r.network));
  const Checkpoint ck = load_checkpoint(dir / "c.bin");
  EXPECT_EQ(ck.parameters.size(), r.network.parameters().size());
  const DiabloNetwork restored = restore_network(ck, cfg, 16, 16);
  const auto e1 = embed_dataset(r.network, data);
  const auto e2 = embed_dataset(restored, data);
  EXPECT_EQ(e1.embeddings, e2.embeddings);

  RunConfig other = cfg;
  other.model.diablo.branches = 4;
  EXPECT_THROW(restore_network(ck, other, 16, 16), std::exception);
}

TEST(Run, ParameterNamesAlignWithParameters) {
  const RunConfig cfg = small_config();
  const DiabloNetwork net = build_network(cfg, 16, 16);
  const auto names = net.parameter_names();
  ASSERT_EQ(names.size(), net.parameters().size());
  EXPECT_EQ(names.front(), "extractor.0.weight");
  EXPECT_EQ(names.back(), "head.1.bias");
  std::set<std::string> unique(names.begin(), names.end());
  EXPECT_EQ(unique.size(), names.size());
}

TEST(Run, EmbeddingsHaveBranchNorm) {
  const RunConfig cfg = small_config();
  const DiabloNetwork net = build_network(cfg, 16, 16);
  const Dataset data = load_dataset(cfg.data);
  const Tensor e = embed(net, data.samples[0].image);
  double n = 0;
  for (double v : e.values()) n += v * v;
  EXPECT_NEAR(std::sqrt(n), std::sqrt(2.0), 1e-6);
}
