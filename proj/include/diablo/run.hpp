#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "diablo/attention.hpp"
#include "diablo/backbone.hpp"
#include "diablo/checkpoint.hpp"
#include "diablo/config.hpp"
#include "diablo/data.hpp"
#include "diablo/evaluation.hpp"

namespace diablo {

// Patch extractor followed by the attention model.
struct DiabloNetwork {
  LayerStack extractor;
  DiabloModel model;
  std::size_t grid_rows = 4;
  std::size_t grid_cols = 4;

  std::vector<Tensor> parameters() const;
  // Same order as parameters(): "extractor.0.weight", ..., "head.7.bias".
  std::vector<std::string> parameter_names() const;
};

// Parameters are drawn from config.seed; the extractor input width is the
// patch size implied by the image extent and grid.
DiabloNetwork build_network(const RunConfig& config, std::size_t image_height,
                            std::size_t image_width);

Tensor embed(const DiabloNetwork& network, const Image& image);

// Embeddings of every sample, with no tape recording.
EmbeddingIndex embed_dataset(const DiabloNetwork& network, const Dataset& dataset);

Dataset load_dataset(const DataSection& data);

// The train/val class partition used by a run: first split of make_splits
// seeded with config.seed.
ClassSplit run_split(const RunConfig& config, const Dataset& dataset);

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  double recall_at_1 = 0.0;
};

struct RunResult {
  DiabloNetwork network;
  std::vector<EpochMetrics> epochs;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Trains on the training classes and reports validation R@1 after each
// epoch. Pure function of (config, dataset).
RunResult train_run(const RunConfig& config, const Dataset& dataset,
                    const EpochCallback& on_epoch = {});

// Recall@K of `network` on the validation classes of the run split.
std::map<std::size_t, double> evaluate_run(const RunConfig& config, const DiabloNetwork& network,
                                           const Dataset& dataset,
                                           const std::vector<std::size_t>& ks);

Checkpoint make_checkpoint(const RunConfig& config, const DiabloNetwork& network);
// Rebuilds the network for `config` and copies every parameter from the
// checkpoint, checking names and shapes.
DiabloNetwork restore_network(const Checkpoint& checkpoint, const RunConfig& config,
                              std::size_t image_height, std::size_t image_width);

// "epoch,loss,recall_at_1" header plus one row per epoch.
std::string metrics_csv(const std::vector<EpochMetrics>& epochs);
std::string recall_csv(const std::map<std::size_t, double>& recall);

}  // namespace diablo
