#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "diablo/data.hpp"
#include "diablo/tensor.hpp"

namespace diablo {

enum class LossKind { contrastive, triplet, binomial };

struct LossConfig {
  LossKind kind = LossKind::binomial;
  double triplet_margin = 0.1;   // α_t
  double margin = 0.5;           // β, contrastive and binomial
  double negative_weight = 25.0; // C, binomial
  double scale = 2.0;            // γ, binomial

  void validate() const;
};

struct IndexPair {
  std::size_t first = 0;
  std::size_t second = 0;
};

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

// A batch of samples and the tuples the losses are evaluated on. Pair and
// triplet indices refer to positions in `embeddings` / `labels`.
struct Batch {
  std::vector<std::size_t> sample_indices;  // into the source dataset
  std::vector<int> labels;
  std::vector<Tensor> embeddings;
  std::vector<IndexPair> positives;
  std::vector<IndexPair> negatives;
  std::vector<Triplet> triplets;
  // Branch count N of the embeddings; the binomial similarity is ⟨a, b⟩ / N.
  std::size_t branches = 1;
};

// Enumerates every unordered positive and negative pair and every
// (anchor, positive, negative) triplet of `labels`.
void enumerate_tuples(Batch& batch);

// Mean over all pairs of d² (positives) and max(0, β − d)² (negatives),
// d the Euclidean distance.
Tensor contrastive_loss(const Batch& batch, const LossConfig& config);

// Mean over triplets of max(0, d(a,p)² − d(a,n)² + α_t).
Tensor triplet_loss(const Batch& batch, const LossConfig& config);

// Mean over positive pairs of log(1 + e^{−γ(s−β)}) plus C times the mean over
// negative pairs of log(1 + e^{γ(s−β)}), with s = ⟨a, b⟩ / N.
Tensor binomial_deviance_loss(const Batch& batch, const LossConfig& config);

Tensor compute_loss(const Batch& batch, const LossConfig& config);

// P classes drawn at random, K random samples from each; tuples enumerated.
Batch sample_batch(const Dataset& dataset, std::size_t classes_per_batch,
                   std::size_t samples_per_class, std::uint64_t seed);

struct AdamState {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

// One bias-corrected Adam update of `params` in place. Moment buffers are
// allocated on the first call.
void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
               AdamState& state);

// Same, reading each parameter's gradient buffer (missing buffer = zero).
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace diablo
