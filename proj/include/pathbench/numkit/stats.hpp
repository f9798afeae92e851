#pragma once

#include <cmath>
#include <span>
#include <string>

#include "pathbench/errors.hpp"

namespace pathbench::numkit {

struct PearsonResult {
  double r = 0.0;
  /// Set when either input has zero variance; `r` is then the 0.0 sentinel.
  bool degenerate = false;
};

/// Pearson correlation, two-pass with 64-bit accumulation.
template <typename T, typename U>
PearsonResult pearson_checked(std::span<const T> x, std::span<const U> y) {
  if (x.size() != y.size()) {
    throw ContractViolation("pearson: lengths differ (" + std::to_string(x.size()) + " vs " +
                            std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) throw ContractViolation("pearson: need at least 2 values");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += static_cast<double>(x[i]);
    my += static_cast<double>(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = static_cast<double>(x[i]) - mx;
    const double dy = static_cast<double>(y[i]) - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return {0.0, true};
  double r = sxy / std::sqrt(sxx * syy);
  if (r > 1.0) r = 1.0;
  if (r < -1.0) r = -1.0;
  return {r, false};
}

template <typename T, typename U>
double pearson(std::span<const T> x, std::span<const U> y) {
  return pearson_checked(x, y).r;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  return pearson_checked(x, y).r;
}

}  // namespace pathbench::numkit
