#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "diablo/attention.hpp"
#include "diablo/backbone.hpp"
#include "diablo/errors.hpp"
#include "diablo/gradcheck.hpp"
#include "diablo/ops.hpp"

using namespace diablo;

namespace {

Tensor random_map(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = n(rng);
  return Tensor(std::move(shape), std::move(v));
}

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST(InitStack, ShapesAndZeroBias) {
  const LayerStack s = init_stack({8, {8}, {}, 0});
  ASSERT_EQ(s.weights.size(), 1u);
  EXPECT_EQ(s.weights[0].shape(), (Shape{8, 8}));
  EXPECT_EQ(s.biases[0].shape(), (Shape{8}));
  for (double b : s.biases[0].values()) EXPECT_EQ(b, 0.0);
  EXPECT_TRUE(s.weights[0].requires_grad());
  EXPECT_TRUE(s.biases[0].requires_grad());
}

TEST(InitStack, ChainsWidths) {
  const LayerStack s = init_stack({5, {7, 3}, {}, 1});
  EXPECT_EQ(s.weights[0].shape(), (Shape{5, 7}));
  EXPECT_EQ(s.weights[1].shape(), (Shape{7, 3}));
  EXPECT_EQ(s.in_width(), 5u);
  EXPECT_EQ(s.out_width(), 3u);
  EXPECT_EQ(s.parameters().size(), 4u);
}

TEST(InitStack, Deterministic) {
  const LayerStack a = init_stack({6, {4, 4}, {}, 42});
  const LayerStack b = init_stack({6, {4, 4}, {}, 42});
  const LayerStack c = init_stack({6, {4, 4}, {}, 43});
  for (std::size_t l = 0; l < 2; ++l) EXPECT_EQ(vals(a.weights[l]), vals(b.weights[l]));
  EXPECT_NE(vals(a.weights[0]), vals(c.weights[0]));
}

TEST(InitStack, HeStandardDeviation) {
  const LayerStack s = init_stack({64, {64}, {}, 7});
  const auto w = s.weights[0].values();
  const double m = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  double var = 0.0;
  for (double x : w) var += (x - m) * (x - m);
  const double sd = std::sqrt(var / static_cast<double>(w.size() - 1));
  const double expected = std::sqrt(2.0 / 64.0);
  EXPECT_NEAR(sd, expected, 0.2 * expected);
}

TEST(InitStack, ZeroWidthThrows) {
  EXPECT_THROW(init_stack({8, {4, 0}, {}, 0}), ArgumentError);
  EXPECT_THROW(init_stack({0, {4}, {}, 0}), ArgumentError);
}

TEST(ForwardStack, IdentityLayerLeavesInputUnchanged) {
  LayerStack s = init_stack({3, {3}, {Activation::none}, 0});
  auto w = s.weights[0].mutable_values();
  std::fill(w.begin(), w.end(), 0.0);
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  const Tensor x = random_map({2, 4, 3}, 1);
  const Tensor y = forward_stack(s, x);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(vals(y), vals(x));
}

TEST(ForwardStack, NegativePreActivationsGiveZeroMap) {
  LayerStack s = init_stack({2, {5}, {}, 0});
  for (double& b : s.biases[0].mutable_values()) b = -1.0;
  auto w = s.weights[0].mutable_values();
  for (double& v : w) v = std::abs(v);
  Tensor x(Shape{3, 3, 2}, -0.5);
  const Tensor y = forward_stack(s, x);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(ForwardStack, ChannelMismatchThrows) {
  const LayerStack s = init_stack({4, {4}, {}, 0});
  EXPECT_THROW(forward_stack(s, Tensor(Shape{2, 2, 3}, 1.0)), ShapeError);
}

TEST(ForwardStack, CommutesWithSpatialPermutation) {
  const LayerStack s = init_stack({8, {6, 5}, {}, 3});
  const Tensor x = random_map({4, 4, 8}, 9);
  std::vector<std::size_t> perm(16);
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(5));

  std::vector<double> px(x.size());
  for (std::size_t p = 0; p < 16; ++p) {
    for (std::size_t k = 0; k < 8; ++k) px[p * 8 + k] = x.values()[perm[p] * 8 + k];
  }
  const Tensor y = forward_stack(s, x);
  const Tensor py = forward_stack(s, Tensor(Shape{4, 4, 8}, px));
  for (std::size_t p = 0; p < 16; ++p) {
    for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(py.values()[p * 5 + k], y.values()[perm[p] * 5 + k]);
  }
}

TEST(ForwardStack, BitIdenticalAcrossCalls) {
  const LayerStack s = init_stack({8, {8, 8}, {}, 11});
  const Tensor x = random_map({4, 4, 8}, 2);
  EXPECT_EQ(vals(forward_stack(s, x)), vals(forward_stack(init_stack({8, {8, 8}, {}, 11}), x)));
}

TEST(ForwardStack, Gradcheck) {
  LayerStack s = init_stack({8, {8, 8}, {}, 0});
  std::mt19937_64 rng(0);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (Tensor& b : s.biases) {
    for (double& v : b.mutable_values()) v = u(rng);
  }
  const Tensor x = random_map({4, 4, 8}, 1);
  const Tensor w = random_map({4, 4, 8}, 2);
  std::vector<Tensor> inputs{x};
  for (const Tensor& p : s.parameters()) inputs.push_back(p);
  const auto report = gradcheck(
      [w](const std::vector<Tensor>& in) {
        LayerStack local;
        local.weights = {in[1], in[3]};
        local.biases = {in[2], in[4]};
        local.activations = {Activation::relu, Activation::relu};
        return dot(forward_stack(local, in[0]), w);
      },
      inputs);
  EXPECT_TRUE(report.passed) << report.failure;
}

TEST(Patchify, ShapeArithmetic) {
  Image img{8, 8, std::vector<double>(64, 0.0)};
  EXPECT_EQ(patchify(img, 2, 2).shape(), (Shape{2, 2, 16}));
  Image mnist{28, 28, std::vector<double>(28 * 28, 0.0)};
  EXPECT_EQ(patchify(mnist, 4, 4).shape(), (Shape{4, 4, 49}));
}

TEST(Patchify, FlattensEachPatchRowMajor) {
  Image img{4, 4, {}};
  for (int i = 0; i < 16; ++i) img.pixels.push_back(i);
  const Tensor p = patchify(img, 2, 2);
  // patch (0,1) covers rows 0-1, cols 2-3
  EXPECT_EQ(std::vector<double>(p.values().begin() + 4, p.values().begin() + 8),
            (std::vector<double>{2, 3, 6, 7}));
}

TEST(Patchify, NonDivisibleGridThrows) {
  Image img{10, 10, std::vector<double>(100, 0.0)};
  EXPECT_THROW(patchify(img, 3, 3), ArgumentError);
}

TEST(ExtractFeatures, ConstantImageGivesSpatiallyConstantMap) {
  Image img{16, 16, std::vector<double>(256, 0.37)};
  const LayerStack s = init_stack({16, {8, 8}, {}, 2});
  const Tensor f = extract_features(img, s, 4, 4);
  ASSERT_EQ(f.shape(), (Shape{4, 4, 8}));
  for (std::size_t p = 1; p < 16; ++p) {
    for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(f.values()[p * 8 + k], f.values()[k]);
  }
}

TEST(SharedPsi, ModelHoldsOneParameterSet) {
  DiabloConfig cfg;
  cfg.branches = 4;
  cfg.embedding_size = 16;
  const DiabloModel model = init_model(cfg, 8, 0);
  const std::size_t psi_params = model.psi.parameters().size();
  // φ + ψ + dictionary + one (weight, bias) pair per branch
  EXPECT_EQ(model.parameters().size(), model.phi.parameters().size() + psi_params + 1 + 2 * 4);
  EXPECT_EQ(psi_params, 4u);
}
