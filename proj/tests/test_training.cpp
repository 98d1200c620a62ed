#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "diablo/errors.hpp"
#include "diablo/ops.hpp"
#include "diablo/training.hpp"

using namespace diablo;

namespace {

Tensor vec(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor(Shape{n}, std::move(v));
}

Batch pair_batch(Tensor a, Tensor b, bool positive, std::size_t branches = 1) {
  Batch batch;
  batch.embeddings = {std::move(a), std::move(b)};
  batch.labels = {0, positive ? 0 : 1};
  batch.branches = branches;
  enumerate_tuples(batch);
  return batch;
}

Dataset toy_dataset(std::size_t classes, std::size_t per_class) {
  Dataset d;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      d.samples.push_back({Image{2, 2, std::vector<double>(4, static_cast<double>(i) / 10.0)},
                           static_cast<int>(c)});
    }
  }
  return d;
}

Tensor random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return vec(std::move(v));
}

}  // namespace

TEST(ContrastiveLoss, Examples) {
  LossConfig cfg;
  cfg.kind = LossKind::contrastive;
  EXPECT_DOUBLE_EQ(contrastive_loss(pair_batch(vec({0.3, -1}), vec({0.3, -1}), true), cfg).item(), 0.0);
  EXPECT_DOUBLE_EQ(contrastive_loss(pair_batch(vec({0, 0}), vec({0.6, 0}), false), cfg).item(), 0.0);
  EXPECT_NEAR(contrastive_loss(pair_batch(vec({0, 0}), vec({0.3, 0}), false), cfg).item(), 0.04, 1e-12);
}

TEST(ContrastiveLoss, EmptyPairsThrow) {
  Batch b;
  b.embeddings = {vec({1, 0})};
  b.labels = {0};
  enumerate_tuples(b);
  EXPECT_THROW(contrastive_loss(b, LossConfig{}), ArgumentError);
  EXPECT_THROW(binomial_deviance_loss(b, LossConfig{}), ArgumentError);
  EXPECT_THROW(triplet_loss(b, LossConfig{}), ArgumentError);
}

TEST(TripletLoss, Examples) {
  LossConfig cfg;
  auto triplet = [](Tensor a, Tensor p, Tensor n) {
    Batch b;
    b.embeddings = {std::move(a), std::move(p), std::move(n)};
    b.triplets = {{0, 1, 2}};
    return b;
  };
  EXPECT_DOUBLE_EQ(triplet_loss(triplet(vec({0, 0}), vec({0, 0}), vec({1, 0})), cfg).item(), 0.0);
  EXPECT_NEAR(triplet_loss(triplet(vec({0, 0}), vec({0.5, 0}), vec({0, 0.5})), cfg).item(), 0.1, 1e-15);
  EXPECT_NEAR(triplet_loss(triplet(vec({0, 0}), vec({std::sqrt(0.5), 0}), vec({0, std::sqrt(0.3)})), cfg)
                  .item(),
              0.3, 1e-12);
}

TEST(TripletLoss, TranslationInvariant) {
  std::mt19937_64 rng(4);
  Batch b;
  for (int i = 0; i < 6; ++i) {
    b.embeddings.push_back(random_vec(5, rng));
    b.labels.push_back(i % 3);
  }
  enumerate_tuples(b);
  LossConfig cfg;
  cfg.triplet_margin = 1.0;
  const double before = triplet_loss(b, cfg).item();
  const Tensor shift = random_vec(5, rng);
  for (Tensor& e : b.embeddings) e = add(e, shift);
  EXPECT_NEAR(triplet_loss(b, cfg).item(), before, 1e-12);
  EXPECT_GT(before, 0.0);
}

TEST(BinomialLoss, Examples) {
  LossConfig cfg;
  const Tensor a = vec({1, 0});
  const Tensor half = vec({0.5, std::sqrt(0.75)});  // s = 0.5 = β
  EXPECT_NEAR(binomial_deviance_loss(pair_batch(a, half, true), cfg).item(), std::log(2.0), 1e-12);
  EXPECT_NEAR(binomial_deviance_loss(pair_batch(a, half, false), cfg).item(), 25.0 * std::log(2.0), 1e-12);
  EXPECT_NEAR(binomial_deviance_loss(pair_batch(a, a, true), cfg).item(), std::log1p(std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(binomial_deviance_loss(pair_batch(a, a, true), cfg).item(), 0.3133, 1e-4);
}

TEST(BinomialLoss, SimilarityDividesByBranchCount) {
  LossConfig cfg;
  // two unit branches each with cosine 0.5: s = 1.0 / 2
  const Tensor a = vec({1, 0, 1, 0});
  const Tensor b = vec({0.5, std::sqrt(0.75), 0.5, std::sqrt(0.75)});
  EXPECT_NEAR(binomial_deviance_loss(pair_batch(a, b, true, 2), cfg).item(), std::log(2.0), 1e-12);
}

TEST(BinomialLoss, MonotoneInSimilarity) {
  LossConfig cfg;
  double prev_pos = INFINITY, prev_neg = -INFINITY;
  for (double s = -1.0; s <= 1.0; s += 0.1) {
    const Tensor a = vec({1, 0});
    const Tensor b = vec({s, std::sqrt(std::max(0.0, 1 - s * s))});
    const double pos = binomial_deviance_loss(pair_batch(a, b, true), cfg).item();
    const double neg = binomial_deviance_loss(pair_batch(a, b, false), cfg).item();
    EXPECT_GT(pos, 0.0);
    EXPECT_LT(pos, prev_pos);
    EXPECT_GT(neg, prev_neg);
    prev_pos = pos;
    prev_neg = neg;
  }
}

TEST(BinomialLoss, NegativeGradientLinearInWeight) {
  auto grad_norm = [](double c) {
    LossConfig cfg;
    cfg.negative_weight = c;
    Tensor a(Shape{3}, std::vector<double>{0.6, 0.8, 0.0}, true);
    const Tensor b = vec({0.0, 0.6, 0.8});
    Tape tape;
    {
      TapeScope scope(tape);
      tape.backward(binomial_deviance_loss(pair_batch(a, b, false), cfg));
    }
    double n = 0;
    for (double g : a.grad()) n += g * g;
    return std::sqrt(n);
  };
  const double g1 = grad_norm(1.0);
  EXPECT_GT(g1, 0.0);
  EXPECT_NEAR(grad_norm(25.0), 25.0 * g1, 1e-12);
  EXPECT_NEAR(grad_norm(7.5), 7.5 * g1, 1e-12);
}

TEST(Losses, NonNegativeOnRandomBatches) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Batch b;
    for (int i = 0; i < 6; ++i) {
      b.embeddings.push_back(l2_normalize(random_vec(4, rng), 0));
      b.labels.push_back(i % 2);
    }
    enumerate_tuples(b);
    for (auto kind : {LossKind::contrastive, LossKind::triplet, LossKind::binomial}) {
      LossConfig cfg;
      cfg.kind = kind;
      EXPECT_GE(compute_loss(b, cfg).item(), 0.0);
    }
  }
}

TEST(LossConfig, RejectsNonPositiveValues) {
  LossConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.negative_weight = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = LossConfig{};
  cfg.triplet_margin = -0.1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(EnumerateTuples, PairAndTripletCounts) {
  Batch b;
  b.labels = {0, 0, 1, 1};
  b.embeddings.assign(4, vec({0}));
  enumerate_tuples(b);
  EXPECT_EQ(b.positives.size(), 2u);
  EXPECT_EQ(b.negatives.size(), 4u);

  Batch one;
  one.labels = {3, 3, 3};
  one.embeddings.assign(3, vec({0}));
  enumerate_tuples(one);
  EXPECT_TRUE(one.negatives.empty());
  EXPECT_TRUE(one.triplets.empty());
}

TEST(SampleBatch, TripletEnumerationMatchesOracle) {
  const Dataset d = toy_dataset(5, 4);
  const Batch b = sample_batch(d, 3, 2, 7);
  ASSERT_EQ(b.labels.size(), 6u);
  std::size_t expected = 0;
  for (std::size_t a = 0; a < 6; ++a) {
    for (std::size_t p = 0; p < 6; ++p) {
      for (std::size_t n = 0; n < 6; ++n) {
        if (a != p && b.labels[a] == b.labels[p] && b.labels[a] != b.labels[n]) ++expected;
      }
    }
  }
  EXPECT_EQ(expected, 24u);
  EXPECT_EQ(b.triplets.size(), expected);
  for (const Triplet& t : b.triplets) {
    EXPECT_EQ(b.labels[t.anchor], b.labels[t.positive]);
    EXPECT_NE(b.labels[t.anchor], b.labels[t.negative]);
    EXPECT_NE(t.anchor, t.positive);
  }
}

TEST(SampleBatch, ShapeAndDeterminism) {
  const Dataset d = toy_dataset(6, 5);
  const Batch a = sample_batch(d, 2, 2, 3);
  EXPECT_EQ(a.sample_indices.size(), 4u);
  EXPECT_EQ(a.positives.size(), 2u);
  EXPECT_EQ(a.negatives.size(), 4u);
  const Batch b = sample_batch(d, 2, 2, 3);
  EXPECT_EQ(a.sample_indices, b.sample_indices);
  EXPECT_EQ(a.labels, b.labels);
  for (std::size_t i = 0; i < a.sample_indices.size(); ++i) {
    EXPECT_EQ(d.samples[a.sample_indices[i]].label, a.labels[i]);
  }
  const Batch single = sample_batch(d, 1, 3, 0);
  EXPECT_TRUE(single.negatives.empty());
  EXPECT_TRUE(single.triplets.empty());
}

TEST(SampleBatch, InsufficientDataThrows) {
  const Dataset d = toy_dataset(3, 2);
  EXPECT_THROW(sample_batch(d, 4, 2, 0), ArgumentError);
  EXPECT_THROW(sample_batch(d, 2, 3, 0), ArgumentError);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Tensor p(Shape{3}, std::vector<double>{1, -2, 3}, true);
  std::vector<Tensor> params{p};
  const std::vector<std::vector<double>> grads{{0, 0, 0}};
  AdamState state;
  state.learning_rate = 0.1;
  for (int i = 0; i < 5; ++i) adam_step(params, grads, state);
  EXPECT_EQ(std::vector<double>(p.values().begin(), p.values().end()), (std::vector<double>{1, -2, 3}));
  EXPECT_EQ(state.step, 5u);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  Tensor p(Shape{3}, std::vector<double>{0, 0, 0}, true);
  std::vector<Tensor> params{p};
  const std::vector<std::vector<double>> grads{{0.3, -40.0, 1e-3}};
  AdamState state;
  state.learning_rate = 0.01;
  adam_step(params, grads, state);
  EXPECT_NEAR(p.values()[0], -0.01, 1e-8);
  EXPECT_NEAR(p.values()[1], 0.01, 1e-8);
  EXPECT_NEAR(p.values()[2], -0.01, 1e-6);
}

TEST(Adam, QuadraticConvergesLikeScalarRecurrence) {
  Tensor x(Shape{1}, std::vector<double>{1.0}, true);
  std::vector<Tensor> params{x};
  AdamState state;
  state.learning_rate = 0.1;

  double ox = 1.0, m = 0, v = 0;
  for (int t = 1; t <= 100; ++t) {
    x.zero_grad();
    Tape tape;
    {
      TapeScope scope(tape);
      tape.backward(dot(x, x));
    }
    adam_step(params, state);

    const double g = 2 * ox;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    ox -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    ASSERT_NEAR(x.values()[0], ox, 1e-12) << "step " << t;
  }
  EXPECT_LT(std::abs(x.values()[0]), 0.1);
}

TEST(Adam, ShapeMismatchThrows) {
  Tensor p(Shape{2}, 0.0, true);
  std::vector<Tensor> params{p};
  AdamState state;
  EXPECT_THROW(adam_step(params, std::vector<std::vector<double>>{{1, 2, 3}}, state), ShapeError);
  EXPECT_THROW(adam_step(params, std::vector<std::vector<double>>{}, state), ShapeError);
}
