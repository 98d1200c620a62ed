#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "diablo/tensor.hpp"

namespace diablo {

// Scalar-valued computation over a set of input tensors. Must be
// deterministic and built only from recorded ops.
using ScalarFunction = std::function<Tensor(const std::vector<Tensor>& inputs)>;

struct GradcheckOptions {
  double step = 1e-4;
  double tolerance = 1e-4;
  // 2: (f(x+h) - f(x-h)) / 2h.
  // 4: (-f(x+2h) + 8 f(x+h) - 8 f(x-h) + f(x-2h)) / 12h, for deep
  //    compositions where a second-order step cannot be small enough to
  //    beat truncation error and large enough to beat roundoff at once.
  int order = 2;
};

struct GradcheckEntry {
  std::size_t input = 0;
  std::size_t element = 0;  // location of the worst element
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradcheckReport {
  bool passed = false;
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  // Elements whose +h and -h evaluations see a different relu sign pattern.
  // The difference quotient spans a kink there, so they are not compared.
  std::size_t skipped = 0;
  std::vector<GradcheckEntry> inputs;  // worst element per input
  std::string failure;                 // empty when passed
};

// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double analytic, double numeric);

// Compares tape gradients of `f` against central finite differences for
// every element of every input. Inputs are used in place and restored.
GradcheckReport gradcheck(const ScalarFunction& f, std::vector<Tensor> inputs,
                          GradcheckOptions options = {});

}  // namespace diablo
