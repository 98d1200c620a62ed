#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "diablo/tensor.hpp"

// Differentiable tensor operations. Every op records a backward rule on the
// active tape when one of its inputs requires grad.
namespace diablo {

enum class ElementwiseOp { add, sub, mul, relu, exp, log };

// Binary kinds need `b` with the same shape as `a` or a single value;
// unary kinds ignore `b`.
Tensor elementwise(ElementwiseOp kind, const Tensor& a, const Tensor& b = Tensor());

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);

// While alive, collects the sign of every relu input evaluated on this
// thread. Two evaluations with different patterns lie on different linear
// pieces, so a finite difference between them is not a derivative estimate.
class KinkRecorder {
 public:
  KinkRecorder();
  ~KinkRecorder();
  KinkRecorder(const KinkRecorder&) = delete;
  KinkRecorder& operator=(const KinkRecorder&) = delete;

  const std::vector<bool>& pattern() const { return pattern_; }

 private:
  friend void note_relu_inputs(std::span<const double> inputs);
  std::vector<bool> pattern_;
  KinkRecorder* previous_;
};
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
Tensor sqrt(const Tensor& x);
// log(1 + e^x), evaluated without overflow.
Tensor softplus(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor transpose(const Tensor& x);
// Contiguous range [offset, offset + length) of a rank-1 tensor.
Tensor slice(const Tensor& x, std::size_t offset, std::size_t length);
// x[index, ...] as a tensor of rank one less.
Tensor select(const Tensor& x, std::size_t index);
// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);
// Repeats an axis of extent 1 `count` times.
Tensor broadcast_axis(const Tensor& x, std::size_t axis, std::size_t count);
Tensor concat(std::span<const Tensor> parts);

Tensor matmul(const Tensor& a, const Tensor& b);
// x·W + b with b added to every row.
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);

// softmax(scale · x) along `axis`, max-subtracted.
Tensor softmax_over_axis(const Tensor& x, std::size_t axis, double scale = 1.0);

// x / sqrt(|x|² + ε²) along `axis`. The guard keeps zero slices at zero.
Tensor l2_normalize(const Tensor& x, std::size_t axis, double epsilon = 1e-12);

// h×w×c -> c, averaging over all h·w locations.
Tensor spatial_mean_pool(const Tensor& x);

// ⟨u, v⟩ / (‖u‖_ε ‖v‖_ε) as a single-value tensor.
Tensor cosine_similarity(const Tensor& u, const Tensor& v, double epsilon = 1e-12);

}  // namespace diablo
