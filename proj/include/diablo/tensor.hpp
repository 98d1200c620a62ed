#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace diablo {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles with an optional gradient buffer.
//
// Tensor is a shared handle: copies alias the same storage. Values of a
// tensor produced by an op are not modified afterwards; leaves (parameters,
// inputs) may be updated in place through mutable_values().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  std::uint64_t id() const;

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zeroed gradient buffer on first use.
  std::span<double> mutable_grad();
  void zero_grad();

  // New leaf holding a copy of the values, without gradient history.
  Tensor detach() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

// Ordered record of differentiable ops executed while the tape is active.
//
// Nodes are appended in execution order, so the list is already a
// topological order; backward() walks it once in reverse.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> output_grad)>;

  struct Node {
    std::string op;
    std::vector<std::uint64_t> inputs;
    std::uint64_t output = 0;
    Tensor output_tensor;
    BackwardFn backward;
  };

  void record(std::string op, const std::vector<Tensor>& inputs,
              const Tensor& output, BackwardFn backward);

  // Seeds d(root)/d(root) = 1 and propagates gradients into every tensor
  // with requires_grad. `root` must hold exactly one value.
  void backward(const Tensor& root);

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t last_backward_visits() const noexcept { return visits_; }
  void clear();

 private:
  std::vector<Node> nodes_;
  std::size_t visits_ = 0;
};

// Makes `tape` the recording tape of the calling thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording on the calling thread for its lifetime.
class NoTapeScope {
 public:
  NoTapeScope();
  ~NoTapeScope();
  NoTapeScope(const NoTapeScope&) = delete;
  NoTapeScope& operator=(const NoTapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape() noexcept;

// True when at least one input requires grad and a tape is recording.
bool should_record(std::initializer_list<const Tensor*> inputs);

}  // namespace diablo
