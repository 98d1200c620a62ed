#include "diablo/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "diablo/errors.hpp"

namespace diablo {

namespace {

std::span<double> grad_of(Tensor t) { return t.mutable_grad(); }

void record(const char* op, const std::vector<Tensor>& inputs, const Tensor& out,
            Tape::BackwardFn fn) {
  active_tape()->record(op, inputs, out, std::move(fn));
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw ShapeError(fmt::format("{}: expected rank {}, got shape {}", op, rank,
                                 shape_string(x.shape())));
  }
}

// Splits a shape around `axis` into (outer, extent, inner) for strided loops.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;

  std::size_t index(std::size_t o, std::size_t a, std::size_t i) const {
    return (o * extent + a) * inner + i;
  }
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(fmt::format("{}: axis {} out of range for shape {}", op, axis,
                                 shape_string(shape)));
  }
  AxisSplit s;
  for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
  s.extent = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

Tensor binary(ElementwiseOp kind, const Tensor& a, const Tensor& b) {
  if (!b.defined()) throw ArgumentError("binary elementwise op needs a second operand");
  const bool same = a.shape() == b.shape();
  if (!same && b.size() != 1) {
    throw ShapeError(fmt::format("elementwise: shapes {} and {} differ",
                                 shape_string(a.shape()), shape_string(b.shape())));
  }
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double y = same ? bv[i] : bv[0];
    switch (kind) {
      case ElementwiseOp::add: out[i] = av[i] + y; break;
      case ElementwiseOp::sub: out[i] = av[i] - y; break;
      default: out[i] = av[i] * y; break;
    }
  }
  const bool rec = should_record({&a, &b});
  Tensor result(a.shape(), std::move(out), rec);
  if (rec) {
    const char* name = kind == ElementwiseOp::add   ? "add"
                       : kind == ElementwiseOp::sub ? "sub"
                                                    : "mul";
    record(name, {a, b}, result, [kind, a, b, same](std::span<const double> g) {
      const auto av = a.values();
      const auto bv = b.values();
      if (a.requires_grad()) {
        auto ga = grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += kind == ElementwiseOp::mul ? g[i] * (same ? bv[i] : bv[0]) : g[i];
        }
      }
      if (b.requires_grad()) {
        auto gb = grad_of(b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          double d = g[i];
          if (kind == ElementwiseOp::sub) d = -d;
          if (kind == ElementwiseOp::mul) d *= av[i];
          gb[same ? i : 0] += d;
        }
      }
    });
  }
  return result;
}

// Unary op with a derivative expressed through input x and output y.
template <typename Forward, typename Derivative>
Tensor unary(const char* name, const Tensor& x, Forward f, Derivative df) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  std::transform(xv.begin(), xv.end(), out.begin(), f);
  const bool rec = should_record({&x});
  Tensor result(x.shape(), std::move(out), rec);
  if (rec) {
    record(name, {x}, result, [x, result, df](std::span<const double> g) {
      const auto xv = x.values();
      const auto yv = result.values();
      auto gx = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], yv[i]);
    });
  }
  return result;
}

}  // namespace

namespace {
thread_local KinkRecorder* current_kink_recorder = nullptr;
}  // namespace

KinkRecorder::KinkRecorder() : previous_(current_kink_recorder) { current_kink_recorder = this; }
KinkRecorder::~KinkRecorder() { current_kink_recorder = previous_; }

void note_relu_inputs(std::span<const double> inputs) {
  if (current_kink_recorder == nullptr) return;
  for (double x : inputs) current_kink_recorder->pattern_.push_back(x > 0.0);
}

Tensor elementwise(ElementwiseOp kind, const Tensor& a, const Tensor& b) {
  switch (kind) {
    case ElementwiseOp::add:
    case ElementwiseOp::sub:
    case ElementwiseOp::mul:
      return binary(kind, a, b);
    case ElementwiseOp::relu:
      note_relu_inputs(a.values());
      return unary(
          "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
          [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
    case ElementwiseOp::exp:
      return unary(
          "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
    case ElementwiseOp::log:
      return unary(
          "log", a, [](double x) { return std::log(x); },
          [](double x, double) { return 1.0 / x; });
  }
  throw ArgumentError("unknown elementwise op");
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::mul, a, b); }
Tensor relu(const Tensor& x) { return elementwise(ElementwiseOp::relu, x); }
Tensor exp(const Tensor& x) { return elementwise(ElementwiseOp::exp, x); }
Tensor log(const Tensor& x) { return elementwise(ElementwiseOp::log, x); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      "add_scalar", x, [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor softplus(const Tensor& x) {
  return unary(
      "softplus", x,
      [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      });
}

Tensor sum(const Tensor& x) {
  const auto xv = x.values();
  const bool rec = should_record({&x});
  Tensor result = Tensor::scalar(std::accumulate(xv.begin(), xv.end(), 0.0), rec);
  if (rec) {
    record("sum", {x}, result, [x](std::span<const double> g) {
      for (double& v : grad_of(x)) v += g[0];
    });
  }
  return result;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ShapeError(fmt::format("dot: sizes {} and {} differ", a.size(), b.size()));
  }
  const auto av = a.values();
  const auto bv = b.values();
  const bool rec = should_record({&a, &b});
  Tensor result =
      Tensor::scalar(std::inner_product(av.begin(), av.end(), bv.begin(), 0.0), rec);
  if (rec) {
    record("dot", {a, b}, result, [a, b](std::span<const double> g) {
      if (a.requires_grad()) {
        auto ga = grad_of(a);
        const auto bv = b.values();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = grad_of(b);
        const auto av = a.values();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[0] * av[i];
      }
    });
  }
  return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError(fmt::format("reshape: {} to {} changes the element count",
                                 shape_string(x.shape()), shape_string(shape)));
  }
  const auto xv = x.values();
  const bool rec = should_record({&x});
  Tensor result(std::move(shape), std::vector<double>(xv.begin(), xv.end()), rec);
  if (rec) {
    record("reshape", {x}, result, [x](std::span<const double> g) {
      auto gx = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return result;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const Shape& in = x.shape();
  const std::size_t rank = in.size();
  std::vector<std::size_t> sorted = axes;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> identity(rank);
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  if (sorted != identity) {
    throw ShapeError(fmt::format("permute: invalid axis order for shape {}", shape_string(in)));
  }
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t d = rank; d-- > 1;) in_stride[d - 1] = in_stride[d] * in[d];
  Shape out_shape(rank);
  for (std::size_t d = 0; d < rank; ++d) out_shape[d] = in[axes[d]];

  // source[i] = flat input index feeding flat output index i
  std::vector<std::size_t> source(x.size());
  std::vector<std::size_t> counter(rank, 0);
  for (std::size_t i = 0; i < source.size(); ++i) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < rank; ++d) src += counter[d] * in_stride[axes[d]];
    source[i] = src;
    for (std::size_t d = rank; d-- > 0;) {
      if (++counter[d] < out_shape[d]) break;
      counter[d] = 0;
    }
  }
  const auto xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[source[i]];
  const bool rec = should_record({&x});
  Tensor result(std::move(out_shape), std::move(out), rec);
  if (rec) {
    record("permute", {x}, result, [x, source = std::move(source)](std::span<const double> g) {
      auto gx = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[source[i]] += g[i];
    });
  }
  return result;
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  return permute(x, {1, 0});
}

Tensor slice(const Tensor& x, std::size_t offset, std::size_t length) {
  require_rank(x, 1, "slice");
  if (length == 0 || offset + length > x.size()) {
    throw ShapeError(fmt::format("slice: [{}, {}) outside extent {}", offset, offset + length,
                                 x.size()));
  }
  const auto xv = x.values().subspan(offset, length);
  const bool rec = should_record({&x});
  Tensor result(Shape{length}, std::vector<double>(xv.begin(), xv.end()), rec);
  if (rec) {
    record("slice", {x}, result, [x, offset](std::span<const double> g) {
      auto gx = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
    });
  }
  return result;
}

Tensor select(const Tensor& x, std::size_t index) {
  if (index >= x.extent(0)) {
    throw ShapeError(fmt::format("select: index {} outside extent {}", index, x.extent(0)));
  }
  Shape shape(x.shape().begin() + 1, x.shape().end());
  if (shape.empty()) shape = {1};
  const std::size_t block = shape_size(shape);
  const std::size_t offset = index * block;
  const auto xv = x.values().subspan(offset, block);
  const bool rec = should_record({&x});
  Tensor result(std::move(shape), std::vector<double>(xv.begin(), xv.end()), rec);
  if (rec) {
    record("select", {x}, result, [x, offset](std::span<const double> g) {
      auto gx = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
    });
  }
  return result;
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw ArgumentError("stack: empty list");
  const Shape& part_shape = parts.front().shape();
  Shape shape{parts.size()};
  shape.insert(shape.end(), part_shape.begin(), part_shape.end());
  std::vector<double> out;
  out.reserve(shape_size(shape));
  bool rec = false;
  for (const Tensor& p : parts) {
    if (p.shape() != part_shape) {
      throw ShapeError(fmt::format("stack: shapes {} and {} differ", shape_string(part_shape),
                                   shape_string(p.shape())));
    }
    out.insert(out.end(), p.values().begin(), p.values().end());
    rec = rec || should_record({&p});
  }
  Tensor result(std::move(shape), std::move(out), rec);
  if (rec) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    record("stack", inputs, result, [inputs](std::span<const double> g) {
      std::size_t offset = 0;
      for (const Tensor& p : inputs) {
        if (p.requires_grad()) {
          auto gp = grad_of(p);
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
        }
        offset += p.size();
      }
    });
  }
  return result;
}

Tensor broadcast_axis(const Tensor& x, std::size_t axis, std::size_t count) {
  const AxisSplit s = split_axis(x.shape(), axis, "broadcast_axis");
  if (s.extent != 1) {
    throw ShapeError(fmt::format("broadcast_axis: axis {} of {} has extent {}, expected 1",
                                 axis, shape_string(x.shape()), s.extent));
  }
  if (count == 0) throw ShapeError("broadcast_axis: count must be positive");
  Shape shape = x.shape();
  shape[axis] = count;
  const auto xv = x.values();
  std::vector<double> out(shape_size(shape));
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t a = 0; a < count; ++a) {
      for (std::size_t i = 0; i < s.inner; ++i) out[(o * count + a) * s.inner + i] = xv[o * s.inner + i];
    }
  }
  const bool rec = should_record({&x});
  Tensor result(std::move(shape), std::move(out), rec);
  if (rec) {
    record("broadcast_axis", {x}, result, [x, s, count](std::span<const double> g) {
      auto gx = grad_of(x);
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t a = 0; a < count; ++a) {
          for (std::size_t i = 0; i < s.inner; ++i) gx[o * s.inner + i] += g[(o * count + a) * s.inner + i];
        }
      }
    });
  }
  return result;
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ArgumentError("concat: empty list");
  std::vector<double> out;
  bool rec = false;
  for (const Tensor& p : parts) {
    require_rank(p, 1, "concat");
    out.insert(out.end(), p.values().begin(), p.values().end());
    rec = rec || should_record({&p});
  }
  const std::size_t n = out.size();
  Tensor result(Shape{n}, std::move(out), rec);
  if (rec) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    record("concat", inputs, result, [inputs](std::span<const double> g) {
      std::size_t offset = 0;
      for (const Tensor& p : inputs) {
        if (p.requires_grad()) {
          auto gp = grad_of(p);
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
        }
        offset += p.size();
      }
    });
  }
  return result;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t rows = a.extent(0), inner = a.extent(1), cols = b.extent(1);
  if (b.extent(0) != inner) {
    throw ShapeError(fmt::format("matmul: {} by {} inner extents differ",
                                 shape_string(a.shape()), shape_string(b.shape())));
  }
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(rows * cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = av[i * inner + k];
      for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += aik * bv[k * cols + j];
    }
  }
  const bool rec = should_record({&a, &b});
  Tensor result(Shape{rows, cols}, std::move(out), rec);
  if (rec) {
    record("matmul", {a, b}, result, [a, b, rows, inner, cols](std::span<const double> g) {
      const auto av = a.values();
      const auto bv = b.values();
      if (a.requires_grad()) {  // dA = dC·Bᵀ
        auto ga = grad_of(a);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t k = 0; k < inner; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < cols; ++j) acc += g[i * cols + j] * bv[k * cols + j];
            ga[i * inner + k] += acc;
          }
        }
      }
      if (b.requires_grad()) {  // dB = Aᵀ·dC
        auto gb = grad_of(b);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t k = 0; k < inner; ++k) {
            const double aik = av[i * inner + k];
            for (std::size_t j = 0; j < cols; ++j) gb[k * cols + j] += aik * g[i * cols + j];
          }
        }
      }
    });
  }
  return result;
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(bias, 1, "affine");
  Tensor product = matmul(x, weight);
  const std::size_t rows = product.extent(0), cols = product.extent(1);
  if (bias.size() != cols) {
    throw ShapeError(fmt::format("affine: bias extent {} does not match {} outputs",
                                 bias.size(), cols));
  }
  const auto pv = product.values();
  const auto bv = bias.values();
  std::vector<double> out(pv.begin(), pv.end());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  }
  const bool rec = should_record({&product, &bias});
  Tensor result(product.shape(), std::move(out), rec);
  if (rec) {
    record("add_bias", {product, bias}, result, [product, bias, rows, cols](std::span<const double> g) {
      if (product.requires_grad()) {
        auto gp = grad_of(product);
        for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = grad_of(bias);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
        }
      }
    });
  }
  return result;
}

Tensor softmax_over_axis(const Tensor& x, std::size_t axis, double scale) {
  const AxisSplit s = split_axis(x.shape(), axis, "softmax_over_axis");
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < s.extent; ++a) top = std::max(top, scale * xv[s.index(o, a, i)]);
      double total = 0.0;
      for (std::size_t a = 0; a < s.extent; ++a) {
        const std::size_t k = s.index(o, a, i);
        out[k] = std::exp(scale * xv[k] - top);
        total += out[k];
      }
      for (std::size_t a = 0; a < s.extent; ++a) out[s.index(o, a, i)] /= total;
    }
  }
  const bool rec = should_record({&x});
  Tensor result(x.shape(), std::move(out), rec);
  if (rec) {
    record("softmax", {x}, result, [x, result, s, scale](std::span<const double> g) {
      const auto y = result.values();
      auto gx = grad_of(x);
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          double gy = 0.0;
          for (std::size_t a = 0; a < s.extent; ++a) {
            const std::size_t k = s.index(o, a, i);
            gy += g[k] * y[k];
          }
          for (std::size_t a = 0; a < s.extent; ++a) {
            const std::size_t k = s.index(o, a, i);
            gx[k] += scale * y[k] * (g[k] - gy);
          }
        }
      }
    });
  }
  return result;
}

Tensor l2_normalize(const Tensor& x, std::size_t axis, double epsilon) {
  if (!(epsilon > 0.0)) throw ArgumentError("l2_normalize: epsilon must be positive");
  const AxisSplit s = split_axis(x.shape(), axis, "l2_normalize");
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  std::vector<double> norms(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      double sq = epsilon * epsilon;
      for (std::size_t a = 0; a < s.extent; ++a) {
        const double v = xv[s.index(o, a, i)];
        sq += v * v;
      }
      const double norm = std::sqrt(sq);
      norms[o * s.inner + i] = norm;
      for (std::size_t a = 0; a < s.extent; ++a) {
        const std::size_t k = s.index(o, a, i);
        out[k] = xv[k] / norm;
      }
    }
  }
  const bool rec = should_record({&x});
  Tensor result(x.shape(), std::move(out), rec);
  if (rec) {
    record("l2_normalize", {x}, result,
           [x, result, s, norms = std::move(norms)](std::span<const double> g) {
             const auto y = result.values();
             auto gx = grad_of(x);
             for (std::size_t o = 0; o < s.outer; ++o) {
               for (std::size_t i = 0; i < s.inner; ++i) {
                 double gy = 0.0;
                 for (std::size_t a = 0; a < s.extent; ++a) {
                   const std::size_t k = s.index(o, a, i);
                   gy += g[k] * y[k];
                 }
                 const double norm = norms[o * s.inner + i];
                 for (std::size_t a = 0; a < s.extent; ++a) {
                   const std::size_t k = s.index(o, a, i);
                   gx[k] += (g[k] - y[k] * gy) / norm;
                 }
               }
             }
           });
  }
  return result;
}

Tensor spatial_mean_pool(const Tensor& x) {
  require_rank(x, 3, "spatial_mean_pool");
  const std::size_t locations = x.extent(0) * x.extent(1);
  const std::size_t channels = x.extent(2);
  const auto xv = x.values();
  std::vector<double> out(channels, 0.0);
  for (std::size_t p = 0; p < locations; ++p) {
    for (std::size_t c = 0; c < channels; ++c) out[c] += xv[p * channels + c];
  }
  const double inv = 1.0 / static_cast<double>(locations);
  for (double& v : out) v *= inv;
  const bool rec = should_record({&x});
  Tensor result(Shape{channels}, std::move(out), rec);
  if (rec) {
    record("spatial_mean_pool", {x}, result,
           [x, locations, channels, inv](std::span<const double> g) {
             auto gx = grad_of(x);
             for (std::size_t p = 0; p < locations; ++p) {
               for (std::size_t c = 0; c < channels; ++c) gx[p * channels + c] += g[c] * inv;
             }
           });
  }
  return result;
}

Tensor cosine_similarity(const Tensor& u, const Tensor& v, double epsilon) {
  if (!(epsilon > 0.0)) throw ArgumentError("cosine_similarity: epsilon must be positive");
  if (u.size() != v.size()) {
    throw ShapeError(fmt::format("cosine_similarity: sizes {} and {} differ", u.size(), v.size()));
  }
  const auto uv = u.values();
  const auto vv = v.values();
  double uu = epsilon * epsilon, vvs = epsilon * epsilon, uvd = 0.0;
  for (std::size_t i = 0; i < uv.size(); ++i) {
    uu += uv[i] * uv[i];
    vvs += vv[i] * vv[i];
    uvd += uv[i] * vv[i];
  }
  const double nu = std::sqrt(uu), nv = std::sqrt(vvs);
  const double cos = uvd / (nu * nv);
  const bool rec = should_record({&u, &v});
  Tensor result = Tensor::scalar(cos, rec);
  if (rec) {
    record("cosine_similarity", {u, v}, result, [u, v, nu, nv, cos](std::span<const double> g) {
      const auto uv = u.values();
      const auto vv = v.values();
      if (u.requires_grad()) {
        auto gu = grad_of(u);
        for (std::size_t i = 0; i < gu.size(); ++i) {
          gu[i] += g[0] * (vv[i] / (nu * nv) - cos * uv[i] / (nu * nu));
        }
      }
      if (v.requires_grad()) {
        auto gv = grad_of(v);
        for (std::size_t i = 0; i < gv.size(); ++i) {
          gv[i] += g[0] * (uv[i] / (nu * nv) - cos * vv[i] / (nv * nv));
        }
      }
    });
  }
  return result;
}

}  // namespace diablo
