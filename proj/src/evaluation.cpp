#include "diablo/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

#include "diablo/errors.hpp"

namespace diablo {

void EmbeddingIndex::add(const std::vector<double>& embedding, int label) {
  if (dim == 0 && labels.empty()) dim = embedding.size();
  if (embedding.size() != dim) {
    throw ShapeError(fmt::format("embedding of size {} added to index of dimension {}",
                                 embedding.size(), dim));
  }
  embeddings.insert(embeddings.end(), embedding.begin(), embedding.end());
  labels.push_back(label);
}

void EmbeddingIndex::validate() const {
  if (labels.empty()) throw ArgumentError("embedding index is empty");
  if (dim == 0 || embeddings.size() != labels.size() * dim) {
    throw ShapeError(fmt::format("index holds {} values for {} labels of dimension {}",
                                 embeddings.size(), labels.size(), dim));
  }
  if (!is_query.empty() && is_query.size() != labels.size()) {
    throw ShapeError("query mask length does not match the item count");
  }
}

std::vector<double> pairwise_distances(const EmbeddingIndex& index) {
  index.validate();
  const std::size_t n = index.count();
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* a = index.embeddings.data() + i * index.dim;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* b = index.embeddings.data() + j * index.dim;
      double sq = 0.0;
      for (std::size_t k = 0; k < index.dim; ++k) {
        const double d = a[k] - b[k];
        sq += d * d;
      }
      out[i * n + j] = out[j * n + i] = std::sqrt(sq);
    }
  }
  return out;
}

std::map<std::size_t, double> recall_at_k(const EmbeddingIndex& index,
                                          const std::vector<std::size_t>& ks) {
  index.validate();
  if (ks.empty()) throw ArgumentError("recall_at_k needs at least one K");
  const std::size_t n = index.count();
  const bool split = !index.is_query.empty();

  std::vector<std::size_t> queries;
  std::vector<std::size_t> collection;
  for (std::size_t i = 0; i < n; ++i) {
    if (!split || index.is_query[i]) queries.push_back(i);
    if (!split || !index.is_query[i]) collection.push_back(i);
  }
  if (queries.empty()) throw ArgumentError("recall_at_k: no queries");
  const std::size_t candidates = split ? collection.size() : n - 1;
  const std::size_t k_max = *std::max_element(ks.begin(), ks.end());
  for (std::size_t k : ks) {
    if (k == 0 || k >= candidates) {
      throw ArgumentError(fmt::format("K={} must be in [1, {}) for {} candidates", k, candidates,
                                      candidates));
    }
  }

  const std::vector<double> dist = pairwise_distances(index);
  // hits_at[r] counts queries whose first same-label neighbour sits at rank r (1-based)
  std::vector<std::size_t> hits_at(k_max + 1, 0);
  std::vector<std::size_t> order;
  for (std::size_t q : queries) {
    order.clear();
    for (std::size_t c : collection) {
      if (c != q) order.push_back(c);
    }
    const auto closer = [&](std::size_t a, std::size_t b) {
      const double da = dist[q * n + a], db = dist[q * n + b];
      return da < db || (da == db && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(k_max), order.end(), closer);
    for (std::size_t r = 0; r < k_max; ++r) {
      if (index.labels[order[r]] == index.labels[q]) {
        ++hits_at[r + 1];
        break;
      }
    }
  }
  std::map<std::size_t, double> out;
  for (std::size_t k : ks) {
    std::size_t found = 0;
    for (std::size_t r = 1; r <= k; ++r) found += hits_at[r];
    out[k] = static_cast<double>(found) / static_cast<double>(queries.size());
  }
  return out;
}

std::vector<ClassSplit> make_splits(const std::vector<int>& classes, const SplitPlan& plan) {
  const std::set<int> distinct(classes.begin(), classes.end());
  if (distinct.size() < 2) throw ArgumentError("splitting needs at least two classes");
  if (plan.repetitions < 1) throw ArgumentError("split plan needs at least one repetition");
  if (!(plan.train_fraction > 0.0 && plan.train_fraction < 1.0)) {
    throw ArgumentError("train fraction must lie in (0, 1)");
  }
  const std::size_t n = distinct.size();
  const auto wanted = static_cast<std::size_t>(std::llround(plan.train_fraction * static_cast<double>(n)));
  const std::size_t train_count = std::clamp<std::size_t>(wanted, 1, n - 1);

  std::mt19937_64 rng(plan.seed);
  std::vector<ClassSplit> out;
  for (std::size_t r = 0; r < plan.repetitions; ++r) {
    std::vector<int> pool(distinct.begin(), distinct.end());
    std::shuffle(pool.begin(), pool.end(), rng);
    ClassSplit s;
    s.train.assign(pool.begin(), pool.begin() + static_cast<long>(train_count));
    s.val.assign(pool.begin() + static_cast<long>(train_count), pool.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace diablo
