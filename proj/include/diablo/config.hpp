#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "diablo/attention.hpp"
#include "diablo/data.hpp"
#include "diablo/training.hpp"

namespace diablo {

struct ModelSection {
  DiabloConfig diablo;
  std::size_t grid_rows = 4;
  std::size_t grid_cols = 4;
  std::vector<std::size_t> extractor_widths{8};
};

enum class DataSource { synthetic, idx };

struct DataSection {
  DataSource source = DataSource::synthetic;
  SyntheticSpec synthetic;
  std::string images;
  std::string labels;
  bool flip = false;
};

struct OptimizerSection {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainingSection {
  std::size_t epochs = 10;
  std::size_t batches_per_epoch = 10;
  std::size_t classes_per_batch = 4;
  std::size_t samples_per_class = 4;
};

struct EvaluationSection {
  std::vector<std::size_t> ks{1, 2, 4, 8};
  double train_fraction = 0.5;
};

// Everything that determines a training run. Serialized as JSON; parsing is
// strict (unknown keys and wrong types raise ConfigError with a field path).
struct RunConfig {
  ModelSection model;
  LossConfig loss;
  DataSection data;
  OptimizerSection optimizer;
  TrainingSection training;
  EvaluationSection evaluation;
  std::uint64_t seed = 0;
  std::string output_dir = "run";

  void validate() const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);

// "pre-attention" / "pre", "post-attention" / "post".
Strategy parse_strategy(const std::string& text);
// "feature-wise" / "feature", "dimension-wise" / "dimension".
SelectionMode parse_mode(const std::string& text);
std::string to_string(Strategy strategy);
std::string to_string(SelectionMode mode);
std::string to_string(LossKind kind);

}  // namespace diablo
