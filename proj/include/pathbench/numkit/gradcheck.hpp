#pragma once

#include <cmath>
#include <concepts>
#include <string>

#include "pathbench/errors.hpp"
#include "pathbench/numkit/loss.hpp"
#include "pathbench/numkit/matrix.hpp"

namespace pathbench::numkit {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;

  [[nodiscard]] bool passed(double tol) const noexcept { return max_rel_error <= tol; }
};

template <typename F>
concept LossFunction = requires(F f, const MatrixD& p) {
  { f(p) } -> std::convertible_to<LossAndGrad>;
};

/**
 * Central finite differences against the analytic gradient returned by `f`.
 *
 * Step h_i = base_step * max(1, |p_i|). The relative error per coordinate is
 * |a - n| / max(|a|, |n|, abs_floor); the floor keeps coordinates whose true
 * gradient is ~0 from turning roundoff into a large relative error.
 */
template <LossFunction F>
GradCheckReport grad_check(F&& f, const MatrixD& params, double base_step = 1e-4, double abs_floor = 1e-6) {
  const LossAndGrad at = f(params);
  if (!std::isfinite(at.loss)) throw NumericError("grad_check: non-finite loss at the base point");
  require_same_shape(params, at.grad, "grad_check");

  GradCheckReport report;
  MatrixD probe = params;
  auto p = probe.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    const double h = base_step * std::max(1.0, std::abs(orig));
    p[i] = orig + h;
    const double up = f(probe).loss;
    p[i] = orig - h;
    const double down = f(probe).loss;
    p[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("grad_check: non-finite loss when perturbing index " + std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = at.grad.values()[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
    const double rel = std::abs(analytic - numeric) / denom;
    if (i == 0 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.analytic = analytic;
      report.numeric = numeric;
    }
  }
  return report;
}

}  // namespace pathbench::numkit
