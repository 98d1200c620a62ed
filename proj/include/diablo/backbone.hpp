#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "diablo/data.hpp"
#include "diablo/tensor.hpp"

namespace diablo {

enum class Activation { relu, none };

// A stack of pointwise (1×1) layers. `activations` is either empty (all
// relu) or has one entry per layer.
struct LayerStackConfig {
  std::size_t in_width = 0;
  std::vector<std::size_t> widths;
  std::vector<Activation> activations;
  std::uint64_t seed = 0;

  std::size_t out_width() const { return widths.empty() ? in_width : widths.back(); }
  Activation activation(std::size_t layer) const {
    return activations.empty() ? Activation::relu : activations[layer];
  }
};

struct LayerStack {
  std::vector<Tensor> weights;  // in × out
  std::vector<Tensor> biases;   // out
  std::vector<Activation> activations;

  std::size_t in_width() const { return weights.front().extent(0); }
  std::size_t out_width() const { return weights.back().extent(1); }
  std::vector<Tensor> parameters() const;
};

// He-initialized weights, N(0, 2 / in-width); zero biases.
LayerStack init_stack(const LayerStackConfig& config);

// Applies every layer at each (i, j) of an h×w×c map.
Tensor forward_stack(const LayerStack& stack, const Tensor& feature_map);

// Cuts the image into a grid of equal patches and flattens each one:
// H×W image, (h, w) grid -> h×w×(H/h · W/w).
Tensor patchify(const Image& image, std::size_t grid_rows, std::size_t grid_cols);

Tensor extract_features(const Image& image, const LayerStack& extractor, std::size_t grid_rows,
                        std::size_t grid_cols);

}  // namespace diablo
