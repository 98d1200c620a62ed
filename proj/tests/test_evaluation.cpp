#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "diablo/errors.hpp"
#include "diablo/evaluation.hpp"

using namespace diablo;

namespace {

EmbeddingIndex random_index(std::size_t count, std::size_t dim, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  EmbeddingIndex index{dim, {}, {}, {}};
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> e(dim);
    for (double& x : e) x = g(rng);
    index.add(e, static_cast<int>(i % classes));
  }
  return index;
}

double naive_distance(const EmbeddingIndex& idx, std::size_t a, std::size_t b) {
  double s = 0;
  for (std::size_t k = 0; k < idx.dim; ++k) {
    const double d = idx.embeddings[a * idx.dim + k] - idx.embeddings[b * idx.dim + k];
    s += d * d;
  }
  return std::sqrt(s);
}

// Sort every candidate of every query by (distance, index) and look at the first K.
std::map<std::size_t, double> oracle_recall(const EmbeddingIndex& idx, const std::vector<std::size_t>& ks) {
  std::map<std::size_t, double> out;
  for (std::size_t k : ks) {
    std::size_t hits = 0, queries = 0;
    for (std::size_t q = 0; q < idx.count(); ++q) {
      if (!idx.is_query.empty() && !idx.is_query[q]) continue;
      ++queries;
      std::vector<std::size_t> cand;
      for (std::size_t c = 0; c < idx.count(); ++c) {
        if (c == q) continue;
        if (!idx.is_query.empty() && idx.is_query[c]) continue;
        cand.push_back(c);
      }
      std::ranges::sort(cand, [&](std::size_t a, std::size_t b) {
        const double da = naive_distance(idx, q, a), db = naive_distance(idx, q, b);
        return da != db ? da < db : a < b;
      });
      for (std::size_t r = 0; r < k; ++r) {
        if (idx.labels[cand[r]] == idx.labels[q]) {
          ++hits;
          break;
        }
      }
    }
    out[k] = static_cast<double>(hits) / static_cast<double>(queries);
  }
  return out;
}

}  // namespace

TEST(PairwiseDistances, Examples) {
  EmbeddingIndex dup{2, {}, {}, {}};
  dup.add({0.3, 0.4}, 0);
  dup.add({0.3, 0.4}, 1);
  const auto d = pairwise_distances(dup);
  EXPECT_EQ(d[1], 0.0);
  EXPECT_EQ(d[2], 0.0);

  EmbeddingIndex unit{2, {}, {}, {}};
  unit.add({1, 0}, 0);
  unit.add({0, 1}, 1);
  EXPECT_NEAR(pairwise_distances(unit)[1], std::sqrt(2.0), 1e-15);
}

TEST(PairwiseDistances, MatchesNaiveOracle) {
  for (auto [n, dim] : {std::pair{20u, 8u}, std::pair{5u, 1u}, std::pair{33u, 17u}}) {
    const EmbeddingIndex idx = random_index(n, dim, 4, n);
    const auto d = pairwise_distances(idx);
    ASSERT_EQ(d.size(), n * n);
    for (std::size_t a = 0; a < n; ++a) {
      EXPECT_EQ(d[a * n + a], 0.0);
      for (std::size_t b = 0; b < n; ++b) {
        EXPECT_NEAR(d[a * n + b], naive_distance(idx, a, b), 1e-9);
        EXPECT_EQ(d[a * n + b], d[b * n + a]);
        EXPECT_GE(d[a * n + b], 0.0);
      }
    }
  }
}

TEST(EmbeddingIndex, Validation) {
  EmbeddingIndex idx{3, {}, {}, {}};
  EXPECT_THROW(idx.add({1, 2}, 0), ShapeError);
  EXPECT_THROW(idx.validate(), ArgumentError);
  idx.add({1, 2, 3}, 0);
  idx.labels.push_back(1);
  EXPECT_THROW(idx.validate(), ShapeError);
}

TEST(RecallAtK, IdenticalPairsGivePerfectRecall) {
  EmbeddingIndex idx{2, {}, {}, {}};
  for (int c = 0; c < 5; ++c) {
    idx.add({static_cast<double>(c), 1.0}, c);
    idx.add({static_cast<double>(c), 1.0}, c);
  }
  EXPECT_DOUBLE_EQ(recall_at_k(idx, {1})[1], 1.0);
}

TEST(RecallAtK, DistinctLabelsGiveZero) {
  EmbeddingIndex idx = random_index(10, 3, 10, 1);
  for (const auto& [k, r] : recall_at_k(idx, {1, 2, 4, 8})) EXPECT_EQ(r, 0.0) << k;
}

TEST(RecallAtK, MatchesExhaustiveSortOracle) {
  const EmbeddingIndex idx = random_index(100, 6, 10, 3);
  const std::vector<std::size_t> ks{1, 2, 4, 8, 16, 32};
  const auto got = recall_at_k(idx, ks);
  const auto expect = oracle_recall(idx, ks);
  for (std::size_t k : ks) EXPECT_EQ(got.at(k), expect.at(k)) << k;
}

TEST(RecallAtK, TiesBrokenByIndex) {
  // query 0 is equidistant from items 1 (other class) and 2 (same class)
  EmbeddingIndex idx{1, {}, {}, {}};
  idx.add({0}, 0);
  idx.add({1}, 1);
  idx.add({-1}, 0);
  idx.add({5}, 2);
  idx.is_query = {true, false, false, false};
  EXPECT_EQ(recall_at_k(idx, {1})[1], 0.0);
  EXPECT_EQ(recall_at_k(idx, {2})[2], 1.0);
  idx.labels = {0, 0, 1, 2};
  EXPECT_EQ(recall_at_k(idx, {1})[1], 1.0);
}

TEST(RecallAtK, QueryCollectionMatchesOracle) {
  EmbeddingIndex idx = random_index(40, 4, 5, 9);
  idx.is_query.resize(40);
  for (std::size_t i = 0; i < 40; ++i) idx.is_query[i] = i % 3 == 0;
  const auto got = recall_at_k(idx, {1, 5});
  const auto expect = oracle_recall(idx, {1, 5});
  EXPECT_EQ(got.at(1), expect.at(1));
  EXPECT_EQ(got.at(5), expect.at(5));
}

TEST(RecallAtK, MonotoneInK) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = recall_at_k(random_index(50, 5, 7, seed), {1, 2, 4, 8, 16});
    double prev = 0.0;
    for (const auto& [k, v] : r) {
      EXPECT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(RecallAtK, InvariantUnderRotation) {
  const EmbeddingIndex idx = random_index(60, 2, 6, 5);
  EmbeddingIndex rot = idx;
  const double t = 0.7;
  for (std::size_t i = 0; i < 60; ++i) {
    const double x = idx.embeddings[2 * i], y = idx.embeddings[2 * i + 1];
    rot.embeddings[2 * i] = std::cos(t) * x - std::sin(t) * y;
    rot.embeddings[2 * i + 1] = std::sin(t) * x + std::cos(t) * y;
  }
  EXPECT_EQ(recall_at_k(idx, {1, 2, 4}), recall_at_k(rot, {1, 2, 4}));
}

TEST(RecallAtK, KMustBeBelowCandidateCount) {
  const EmbeddingIndex idx = random_index(5, 2, 2, 0);
  EXPECT_NO_THROW(recall_at_k(idx, {3}));
  EXPECT_THROW(recall_at_k(idx, {4}), ArgumentError);
  EXPECT_THROW(recall_at_k(idx, {0}), ArgumentError);
}

TEST(MakeSplits, HundredClassesHalfAndHalf) {
  std::vector<int> classes(100);
  std::iota(classes.begin(), classes.end(), 0);
  const auto splits = make_splits(classes, {1, 0.5, 3});
  ASSERT_EQ(splits.size(), 1u);
  EXPECT_EQ(splits[0].train.size(), 50u);
  EXPECT_EQ(splits[0].val.size(), 50u);
  std::set<int> all(splits[0].train.begin(), splits[0].train.end());
  for (int v : splits[0].val) EXPECT_TRUE(all.insert(v).second);
  EXPECT_EQ(all.size(), 100u);
}

TEST(MakeSplits, ReproducibleRepetitions) {
  std::vector<int> classes(20);
  std::iota(classes.begin(), classes.end(), 0);
  const auto a = make_splits(classes, {10, 0.5, 11});
  const auto b = make_splits(classes, {10, 0.5, 11});
  ASSERT_EQ(a.size(), 10u);
  std::set<std::vector<int>> distinct;
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(a[i].train, b[i].train);
    EXPECT_EQ(a[i].val, b[i].val);
    EXPECT_TRUE(std::ranges::is_sorted(a[i].train));
    distinct.insert(a[i].train);
  }
  EXPECT_GT(distinct.size(), 1u);
}

TEST(MakeSplits, InvalidPlansThrow) {
  EXPECT_THROW(make_splits({1}, {}), ArgumentError);
  EXPECT_THROW(make_splits({1, 2, 3}, {0, 0.5, 0}), ArgumentError);
  EXPECT_THROW(make_splits({1, 2, 3}, {1, 1.0, 0}), ArgumentError);
  EXPECT_THROW(make_splits({1, 2, 3}, {1, 0.0, 0}), ArgumentError);
}
