#include "diablo/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "diablo/errors.hpp"
#include "diablo/ops.hpp"

namespace diablo {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const ScalarFunction& f, const std::vector<Tensor>& inputs,
                std::vector<bool>& kinks) {
  NoTapeScope no_tape;
  KinkRecorder recorder;
  Tensor out = f(inputs);
  if (out.size() != 1) {
    throw std::logic_error("gradcheck: function output must be a single value, got " +
                           shape_string(out.shape()));
  }
  kinks = recorder.pattern();
  return out.item();
}

}  // namespace

GradcheckReport gradcheck(const ScalarFunction& f, std::vector<Tensor> inputs,
                          GradcheckOptions options) {
  if (options.order != 2 && options.order != 4) {
    throw ArgumentError(fmt::format("gradcheck order must be 2 or 4, got {}", options.order));
  }
  GradcheckReport report;
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }

  Tape tape;
  double base = 0.0;
  {
    TapeScope scope(tape);
    Tensor out = f(inputs);
    base = out.item();
    if (!std::isfinite(base)) {
      report.failure = "non-finite function value at the base point";
      return report;
    }
    tape.backward(out);
  }

  for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
    Tensor& t = inputs[idx];
    std::vector<double> analytic(t.size(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    GradcheckEntry worst{idx, 0, 0.0, 0.0, -1.0};
    auto values = t.mutable_values();
    const std::vector<double> offsets =
        options.order == 4 ? std::vector<double>{2.0, 1.0, -1.0, -2.0} : std::vector<double>{1.0, -1.0};
    std::vector<double> samples(offsets.size());
    std::vector<std::vector<bool>> kinks(offsets.size());
    for (std::size_t e = 0; e < values.size(); ++e) {
      const double saved = values[e];
      bool finite = std::isfinite(analytic[e]);
      for (std::size_t o = 0; o < offsets.size(); ++o) {
        values[e] = saved + offsets[o] * options.step;
        samples[o] = evaluate(f, inputs, kinks[o]);
        finite = finite && std::isfinite(samples[o]);
      }
      values[e] = saved;
      if (!finite) {
        report.failure = fmt::format("non-finite value at input {} element {}", idx, e);
        report.inputs.push_back({idx, e, analytic[e], 0.0, INFINITY});
        report.max_relative_error = INFINITY;
        return report;
      }
      ++report.checked;
      if (std::any_of(kinks.begin() + 1, kinks.end(), [&](const auto& k) { return k != kinks[0]; })) {
        ++report.skipped;
        continue;
      }
      const double numeric =
          options.order == 4
              ? (8.0 * (samples[1] - samples[2]) - (samples[0] - samples[3])) / (12.0 * options.step)
              : (samples[0] - samples[1]) / (2.0 * options.step);
      const double err = relative_error(analytic[e], numeric);
      if (err > worst.relative_error) worst = {idx, e, analytic[e], numeric, err};
    }
    report.max_relative_error = std::max(report.max_relative_error, worst.relative_error);
    report.inputs.push_back(worst);
    t.zero_grad();
  }

  report.passed = report.max_relative_error < options.tolerance && report.skipped < report.checked;
  if (report.skipped == report.checked) {
    report.failure = "every element straddles a relu kink; nothing was compared";
  } else if (!report.passed) {
    const auto bad = std::max_element(
        report.inputs.begin(), report.inputs.end(),
        [](const auto& a, const auto& b) { return a.relative_error < b.relative_error; });
    report.failure = fmt::format(
        "input {} element {}: analytic {:.9g} vs numeric {:.9g} (rel-err {:.3g})", bad->input,
        bad->element, bad->analytic, bad->numeric, bad->relative_error);
  }
  return report;
}

}  // namespace diablo
