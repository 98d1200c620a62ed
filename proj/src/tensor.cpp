#include "diablo/tensor.hpp"

#include <atomic>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "diablo/errors.hpp"

namespace diablo {

namespace {

std::atomic<std::uint64_t> next_tensor_id{1};
thread_local Tape* current_tape = nullptr;

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  return fmt::format("[{}]", fmt::join(shape, "x"));
}

struct Tensor::Impl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t id = next_tensor_id.fetch_add(1, std::memory_order_relaxed);
};

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
  }
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->values.assign(n, fill);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
  }
  if (shape_size(shape) != values.size()) {
    throw ShapeError(fmt::format("shape {} needs {} values, got {}", shape_string(shape),
                                 shape_size(shape), values.size()));
  }
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<double>{value}, requires_grad);
}

std::uint64_t Tensor::id() const { return impl_->id; }
const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::extent(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError(fmt::format("axis {} out of range for rank {}", axis, impl_->shape.size()));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::size() const { return impl_->values.size(); }
std::span<const double> Tensor::values() const { return impl_->values; }
std::span<double> Tensor::mutable_values() { return impl_->values; }

double Tensor::item() const {
  if (impl_->values.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(impl_->shape));
  }
  return impl_->values.front();
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { impl_->requires_grad = flag; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const {
  return Tensor(impl_->shape, impl_->values, false);
}

void Tape::record(std::string op, const std::vector<Tensor>& inputs, const Tensor& output,
                  BackwardFn backward) {
  Node node;
  node.op = std::move(op);
  node.output = output.id();
  for (const Tensor& in : inputs) {
    if (in.id() >= node.output) {
      throw std::logic_error("tape: input " + std::to_string(in.id()) +
                             " does not precede output of " + node.op);
    }
    node.inputs.push_back(in.id());
  }
  node.output_tensor = output;
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& root) {
  if (root.size() != 1) {
    throw ShapeError("backward root must be a single value, got " + shape_string(root.shape()));
  }
  Tensor seed = root;
  seed.mutable_grad()[0] += 1.0;
  visits_ = 0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    ++visits_;
    if (!it->output_tensor.has_grad()) continue;
    it->backward(it->output_tensor.grad());
  }
}

void Tape::clear() {
  nodes_.clear();
  visits_ = 0;
}

TapeScope::TapeScope(Tape& tape) : previous_(current_tape) { current_tape = &tape; }
TapeScope::~TapeScope() { current_tape = previous_; }

NoTapeScope::NoTapeScope() : previous_(current_tape) { current_tape = nullptr; }
NoTapeScope::~NoTapeScope() { current_tape = previous_; }

Tape* active_tape() noexcept { return current_tape; }

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (current_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

}  // namespace diablo
