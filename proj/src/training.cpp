#include "diablo/training.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "diablo/errors.hpp"
#include "diablo/ops.hpp"

namespace diablo {

void LossConfig::validate() const {
  if (!(triplet_margin > 0.0)) throw ConfigError("must be positive", "loss.triplet_margin");
  if (!(margin > 0.0)) throw ConfigError("must be positive", "loss.margin");
  if (!(negative_weight > 0.0)) throw ConfigError("must be positive", "loss.negative_weight");
  if (!(scale > 0.0)) throw ConfigError("must be positive", "loss.scale");
}

void enumerate_tuples(Batch& batch) {
  batch.positives.clear();
  batch.negatives.clear();
  batch.triplets.clear();
  const auto& y = batch.labels;
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = i + 1; j < y.size(); ++j) {
      (y[i] == y[j] ? batch.positives : batch.negatives).push_back({i, j});
    }
  }
  for (std::size_t a = 0; a < y.size(); ++a) {
    for (std::size_t p = 0; p < y.size(); ++p) {
      if (p == a || y[p] != y[a]) continue;
      for (std::size_t n = 0; n < y.size(); ++n) {
        if (y[n] != y[a]) batch.triplets.push_back({a, p, n});
      }
    }
  }
}

namespace {

Tensor squared_distance(const Tensor& a, const Tensor& b) {
  const Tensor d = sub(a, b);
  return dot(d, d);
}

const Tensor& embedding(const Batch& batch, std::size_t index) {
  if (index >= batch.embeddings.size()) {
    throw ArgumentError(fmt::format("tuple index {} outside batch of {} embeddings", index,
                                    batch.embeddings.size()));
  }
  return batch.embeddings[index];
}

Tensor mean_of(const std::vector<Tensor>& terms) { return mean(concat(terms)); }

}  // namespace

Tensor contrastive_loss(const Batch& batch, const LossConfig& config) {
  if (batch.positives.empty() && batch.negatives.empty()) {
    throw ArgumentError("contrastive loss needs at least one pair");
  }
  std::vector<Tensor> terms;
  for (const IndexPair& p : batch.positives) {
    terms.push_back(squared_distance(embedding(batch, p.first), embedding(batch, p.second)));
  }
  for (const IndexPair& p : batch.negatives) {
    const Tensor sq = squared_distance(embedding(batch, p.first), embedding(batch, p.second));
    // The 1e-12 guard keeps the sqrt derivative finite for coincident points.
    const Tensor distance = sqrt(add_scalar(sq, 1e-12));
    const Tensor gap = relu(add_scalar(scale(distance, -1.0), config.margin));
    terms.push_back(mul(gap, gap));
  }
  return mean_of(terms);
}

Tensor triplet_loss(const Batch& batch, const LossConfig& config) {
  if (batch.triplets.empty()) throw ArgumentError("triplet loss needs at least one triplet");
  std::vector<Tensor> terms;
  terms.reserve(batch.triplets.size());
  for (const Triplet& t : batch.triplets) {
    const Tensor& a = embedding(batch, t.anchor);
    const Tensor ap = squared_distance(a, embedding(batch, t.positive));
    const Tensor an = squared_distance(a, embedding(batch, t.negative));
    terms.push_back(relu(add_scalar(sub(ap, an), config.triplet_margin)));
  }
  return mean_of(terms);
}

Tensor binomial_deviance_loss(const Batch& batch, const LossConfig& config) {
  if (batch.positives.empty() && batch.negatives.empty()) {
    throw ArgumentError("binomial deviance loss needs at least one pair");
  }
  const double inv_branches = 1.0 / static_cast<double>(std::max<std::size_t>(batch.branches, 1));
  const auto similarity_gap = [&](const IndexPair& p) {
    const Tensor s = scale(dot(embedding(batch, p.first), embedding(batch, p.second)), inv_branches);
    return add_scalar(s, -config.margin);
  };
  std::vector<Tensor> parts;
  if (!batch.positives.empty()) {
    std::vector<Tensor> terms;
    for (const IndexPair& p : batch.positives) {
      terms.push_back(softplus(scale(similarity_gap(p), -config.scale)));
    }
    parts.push_back(mean_of(terms));
  }
  if (!batch.negatives.empty()) {
    std::vector<Tensor> terms;
    for (const IndexPair& p : batch.negatives) {
      terms.push_back(softplus(scale(similarity_gap(p), config.scale)));
    }
    parts.push_back(scale(mean_of(terms), config.negative_weight));
  }
  return sum(concat(parts));
}

Tensor compute_loss(const Batch& batch, const LossConfig& config) {
  switch (config.kind) {
    case LossKind::contrastive: return contrastive_loss(batch, config);
    case LossKind::triplet: return triplet_loss(batch, config);
    case LossKind::binomial: return binomial_deviance_loss(batch, config);
  }
  throw ArgumentError("unknown loss kind");
}

Batch sample_batch(const Dataset& dataset, std::size_t classes_per_batch,
                   std::size_t samples_per_class, std::uint64_t seed) {
  if (classes_per_batch == 0 || samples_per_class == 0) {
    throw ArgumentError("batch needs at least one class and one sample per class");
  }
  std::vector<std::pair<int, std::vector<std::size_t>>> eligible;
  for (auto& [label, indices] : dataset.indices_by_class()) {
    if (indices.size() >= samples_per_class) eligible.emplace_back(label, indices);
  }
  if (eligible.size() < classes_per_batch) {
    throw ArgumentError(fmt::format("{} classes have at least {} samples, batch needs {}",
                                    eligible.size(), samples_per_class, classes_per_batch));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(eligible.begin(), eligible.end(), rng);
  Batch batch;
  for (std::size_t c = 0; c < classes_per_batch; ++c) {
    auto& [label, indices] = eligible[c];
    std::shuffle(indices.begin(), indices.end(), rng);
    for (std::size_t k = 0; k < samples_per_class; ++k) {
      batch.sample_indices.push_back(indices[k]);
      batch.labels.push_back(label);
    }
  }
  enumerate_tuples(batch);
  return batch;
}

void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
               AdamState& state) {
  if (grads.size() != params.size()) {
    throw ShapeError(fmt::format("adam: {} gradients for {} parameters", grads.size(), params.size()));
  }
  if (state.first_moment.empty()) {
    for (const Tensor& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError(fmt::format("adam: state tracks {} parameters, got {}",
                                 state.first_moment.size(), params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].size() || state.first_moment[i].size() != params[i].size()) {
      throw ShapeError(fmt::format("adam: parameter {} has {} values, gradient {}, state {}", i,
                                   params[i].size(), grads[i].size(), state.first_moment[i].size()));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].mutable_values();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& g = grads[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      values[k] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const Tensor& p : params) {
    if (p.has_grad()) {
      grads.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      grads.emplace_back(p.size(), 0.0);
    }
  }
  adam_step(params, grads, state);
}

}  // namespace diablo
