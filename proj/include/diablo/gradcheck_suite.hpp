#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "diablo/attention.hpp"
#include "diablo/gradcheck.hpp"
#include "diablo/training.hpp"

namespace diablo {

struct GradcheckProblem {
  ScalarFunction function;
  std::vector<Tensor> inputs;
};

struct GradcheckCase {
  std::string name;
  std::function<GradcheckProblem(std::uint64_t seed)> build;
};

// One case per differentiable op, on random inputs.
std::vector<GradcheckCase> op_gradcheck_cases();

// Small DIABLO model (4×4×8 maps, N = 2) for a mode × strategy pair.
DiabloModel gradcheck_model(Strategy strategy, SelectionMode mode, std::uint64_t seed);

// Every mode × strategy pipeline: once through a random projection of the
// embedding, and once through each loss on a four-sample batch.
std::vector<GradcheckCase> pipeline_gradcheck_cases();

// A scaling op whose backward rule is off by a factor of two.
GradcheckCase corrupted_gradient_case();

struct SuiteEntry {
  std::string name;
  std::uint64_t seed = 0;
  GradcheckReport report;
};

struct SuiteOptions {
  std::size_t op_seeds = 10;
  std::size_t pipeline_seeds = 1;
  bool include_corrupted = false;
  GradcheckOptions check;
  // Deep pipelines need the fourth-order stencil; see GradcheckOptions.
  GradcheckOptions pipeline_check{2e-4, 1e-4, 4};
};

std::vector<SuiteEntry> run_gradcheck_suite(const SuiteOptions& options);

}  // namespace diablo
