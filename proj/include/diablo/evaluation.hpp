#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

namespace diablo {

// Row-major count × dim embedding matrix with one label per row.
//
// When `is_query` is empty every item is a query and is matched against all
// other items (leave-one-out). Otherwise flagged rows are queries and the
// remaining rows form the collection they are matched against.
struct EmbeddingIndex {
  std::size_t dim = 0;
  std::vector<double> embeddings;
  std::vector<int> labels;
  std::vector<bool> is_query;

  std::size_t count() const { return labels.size(); }
  void add(const std::vector<double>& embedding, int label);
  void validate() const;
};

// count × count Euclidean distances, row-major.
std::vector<double> pairwise_distances(const EmbeddingIndex& index);

// Fraction of queries with at least one same-label item among their K nearest
// candidates. Distance ties are broken by lower item index.
std::map<std::size_t, double> recall_at_k(const EmbeddingIndex& index,
                                          const std::vector<std::size_t>& ks);

struct SplitPlan {
  std::size_t repetitions = 10;
  double train_fraction = 0.5;
  std::uint64_t seed = 0;
};

struct ClassSplit {
  std::vector<int> train;
  std::vector<int> val;
};

// `repetitions` random class partitions, each with round(fraction · classes)
// training classes (clamped so both sides are non-empty). Both lists are
// sorted.
std::vector<ClassSplit> make_splits(const std::vector<int>& classes, const SplitPlan& plan);

}  // namespace diablo
