#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "gpgraph/array.hpp"
#include "gpgraph/errors.hpp"
#include "gpgraph/tape.hpp"

namespace gpgraph {

// A scalar-valued computation over leaves that the caller registers on the
// supplied tape.
using TapeFunction = std::function<Var(Tape&, std::span<const Var>)>;

// Denominator floor for relative error, so entries whose true gradient is
// near zero are judged on absolute error.
inline constexpr double kGradCheckFloor = 1e-3;

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t leaf = 0;   // location of the worst entry
  std::size_t entry = 0;
  std::vector<Array> analytic;
  std::vector<Array> numeric;
};

// Compares tape adjoints against central finite differences for every leaf
// entry. Values that passed through stop_gradient during the reference pass
// are replayed unchanged in the perturbed passes, so detached paths are
// excluded from the numeric derivative exactly as they are from the tape.
inline GradCheckReport grad_check_report(const TapeFunction& f,
                                         std::span<const Array> leaves,
                                         double h = 1e-5) {
  if (!(h > 0)) throw ConfigError("grad_check: step must be positive");

  GradCheckReport report;
  std::vector<Array> frozen;
  {
    Tape tape;
    tape.set_check_finite(true);
    std::vector<Var> vars;
    for (const Array& l : leaves) vars.push_back(tape.leaf(l));
    Var out = f(tape, vars);
    if (out.value().size() != 1) {
      throw DimensionError("grad_check: function must return one value, got " +
                           shape_string(out.shape()));
    }
    tape.backward(out);
    for (const Var& v : vars) report.analytic.push_back(v.grad());
    frozen = tape.frozen_log();
  }

  auto evaluate = [&](const std::vector<Array>& values) {
    Tape tape;
    tape.set_check_finite(true);
    tape.replay_frozen(frozen);
    std::vector<Var> vars;
    for (const Array& l : values) vars.push_back(tape.constant(l));
    return f(tape, vars).value()[0];
  };

  std::vector<Array> work(leaves.begin(), leaves.end());
  for (std::size_t li = 0; li < work.size(); ++li) {
    Array num(work[li].shape());
    for (std::size_t e = 0; e < work[li].size(); ++e) {
      const double orig = work[li][e];
      work[li][e] = orig + h;
      const double fp = evaluate(work);
      work[li][e] = orig - h;
      const double fm = evaluate(work);
      work[li][e] = orig;
      num[e] = (fp - fm) / (2.0 * h);
      const double err = relative_error(report.analytic[li][e], num[e]);
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.leaf = li;
        report.entry = e;
      }
    }
    report.numeric.push_back(std::move(num));
  }
  return report;
}

// Maximum relative error between tape adjoints and central differences.
inline double grad_check(const TapeFunction& f, std::span<const Array> leaves,
                         double h = 1e-5) {
  return grad_check_report(f, leaves, h).max_rel_error;
}

}  // namespace gpgraph
