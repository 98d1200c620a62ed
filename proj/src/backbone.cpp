#include "diablo/backbone.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "diablo/errors.hpp"
#include "diablo/ops.hpp"

namespace diablo {

std::vector<Tensor> LayerStack::parameters() const {
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    out.push_back(weights[k]);
    out.push_back(biases[k]);
  }
  return out;
}

LayerStack init_stack(const LayerStackConfig& config) {
  if (config.widths.empty()) throw ArgumentError("layer stack needs at least one layer");
  if (config.in_width == 0) throw ArgumentError("layer stack input width must be positive");
  if (!config.activations.empty() && config.activations.size() != config.widths.size()) {
    throw ArgumentError(fmt::format("{} activations given for {} layers",
                                    config.activations.size(), config.widths.size()));
  }
  std::mt19937_64 rng(config.seed);
  LayerStack stack;
  std::size_t in = config.in_width;
  for (std::size_t k = 0; k < config.widths.size(); ++k) {
    const std::size_t out = config.widths[k];
    if (out == 0) throw ArgumentError(fmt::format("layer {} has zero width", k));
    std::normal_distribution<double> he(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    std::vector<double> w(in * out);
    for (double& v : w) v = he(rng);
    stack.weights.emplace_back(Shape{in, out}, std::move(w), true);
    stack.biases.emplace_back(Shape{out}, 0.0, true);
    stack.activations.push_back(config.activation(k));
    in = out;
  }
  return stack;
}

Tensor forward_stack(const LayerStack& stack, const Tensor& feature_map) {
  if (feature_map.rank() != 3) {
    throw ShapeError("forward_stack expects an h×w×c map, got " +
                     shape_string(feature_map.shape()));
  }
  const std::size_t h = feature_map.extent(0), w = feature_map.extent(1);
  if (feature_map.extent(2) != stack.in_width()) {
    throw ShapeError(fmt::format("forward_stack: map has {} channels, stack expects {}",
                                 feature_map.extent(2), stack.in_width()));
  }
  Tensor x = reshape(feature_map, {h * w, feature_map.extent(2)});
  for (std::size_t k = 0; k < stack.weights.size(); ++k) {
    x = affine(x, stack.weights[k], stack.biases[k]);
    if (stack.activations[k] == Activation::relu) x = relu(x);
  }
  return reshape(x, {h, w, stack.out_width()});
}

Tensor patchify(const Image& image, std::size_t grid_rows, std::size_t grid_cols) {
  if (grid_rows == 0 || grid_cols == 0 || image.height % grid_rows != 0 ||
      image.width % grid_cols != 0) {
    throw ArgumentError(fmt::format("{}x{} image is not divisible by a {}x{} grid",
                                    image.height, image.width, grid_rows, grid_cols));
  }
  const std::size_t ph = image.height / grid_rows, pw = image.width / grid_cols;
  std::vector<double> out;
  out.reserve(image.pixels.size());
  for (std::size_t gi = 0; gi < grid_rows; ++gi) {
    for (std::size_t gj = 0; gj < grid_cols; ++gj) {
      for (std::size_t r = 0; r < ph; ++r) {
        for (std::size_t c = 0; c < pw; ++c) out.push_back(image.at(gi * ph + r, gj * pw + c));
      }
    }
  }
  return Tensor(Shape{grid_rows, grid_cols, ph * pw}, std::move(out));
}

Tensor extract_features(const Image& image, const LayerStack& extractor, std::size_t grid_rows,
                        std::size_t grid_cols) {
  return forward_stack(extractor, patchify(image, grid_rows, grid_cols));
}

}  // namespace diablo
