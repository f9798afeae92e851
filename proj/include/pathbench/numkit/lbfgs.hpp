#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <numeric>
#include <vector>

#include "pathbench/errors.hpp"

namespace pathbench::numkit {

struct LbfgsOptions {
  std::size_t memory = 10;
  std::size_t max_iter = 1000;
  /// Stop when the max-abs gradient entry falls below this.
  double gtol = 1e-6;
  double armijo_c1 = 1e-4;
  std::size_t max_backtracks = 60;
};

struct LbfgsResult {
  std::vector<double> x;
  double f = 0.0;
  double grad_inf_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Objective: returns f(x) and writes the gradient into `grad` (same size as x).
using Objective = std::function<double(const std::vector<double>& x, std::vector<double>& grad)>;

/// Limited-memory BFGS with Armijo backtracking. Deterministic for a given objective.
inline LbfgsResult minimize_lbfgs(const Objective& objective, std::vector<double> x, const LbfgsOptions& opt = {}) {
  const std::size_t n = x.size();
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  };
  auto inf_norm = [](const std::vector<double>& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
  };

  std::vector<double> g(n), g_new(n), x_new(n), dir(n);
  double f = objective(x, g);
  if (!std::isfinite(f)) throw NumericError("lbfgs: non-finite objective at the starting point");

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  LbfgsResult res;
  std::vector<double> alpha(opt.memory);

  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    res.iterations = it;
    if (inf_norm(g) <= opt.gtol) {
      res.converged = true;
      break;
    }
    // Two-loop recursion.
    dir = g;
    const std::size_t m = s_hist.size();
    for (std::size_t k = m; k-- > 0;) {
      alpha[k] = rho_hist[k] * dot(s_hist[k], dir);
      for (std::size_t i = 0; i < n; ++i) dir[i] -= alpha[k] * y_hist[k][i];
    }
    double gamma = 1.0;
    if (m > 0) gamma = dot(s_hist[m - 1], y_hist[m - 1]) / dot(y_hist[m - 1], y_hist[m - 1]);
    for (double& v : dir) v *= gamma;
    for (std::size_t k = 0; k < m; ++k) {
      const double beta = rho_hist[k] * dot(y_hist[k], dir);
      for (std::size_t i = 0; i < n; ++i) dir[i] += (alpha[k] - beta) * s_hist[k][i];
    }
    for (double& v : dir) v = -v;

    double slope = dot(g, dir);
    if (!(slope < 0.0)) {
      // Not a descent direction; restart from steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];
      slope = dot(g, dir);
    }
    double step = 1.0;
    if (m == 0) step = std::min(1.0, 1.0 / std::sqrt(dot(g, g)));

    bool accepted = false;
    double f_new = f;
    for (std::size_t bt = 0; bt < opt.max_backtracks; ++bt) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + step * dir[i];
      f_new = objective(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + opt.armijo_c1 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_new[i] - x[i];
      y[i] = g_new[i] - g[i];
    }
    const double sy = dot(s, y);
    if (sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y))) {
      if (s_hist.size() == opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    res.iterations = it + 1;
  }
  res.grad_inf_norm = inf_norm(g);
  if (res.grad_inf_norm <= opt.gtol) res.converged = true;
  res.x = std::move(x);
  res.f = f;
  return res;
}

}  // namespace pathbench::numkit
