#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "pathbench/errors.hpp"
#include "pathbench/numkit/lbfgs.hpp"
#include "pathbench/probekit/probe.hpp"
#include "pathbench/scorebook/metrics.hpp"
#include "pathbench/splitkit/seeds.hpp"
#include "pathbench/splitkit/splits.hpp"

namespace pathbench::probekit {

/// 15 log-spaced values 10^(-8 + 12k/14), k = 0..14.
inline std::vector<double> default_penalty_grid() {
  std::vector<double> grid(15);
  for (int k = 0; k < 15; ++k) grid[static_cast<std::size_t>(k)] = std::pow(10.0, -8.0 + 12.0 * k / 14.0);
  return grid;
}

enum class CvScoring { BalancedAccuracy, Accuracy };

struct LogRegConfig {
  std::vector<double> grid = default_penalty_grid();
  std::size_t cv_folds = 5;
  bool balanced_weights = true;
  double tol = 1e-6;
  std::size_t max_iter = 1000;
  CvScoring scoring = CvScoring::BalancedAccuracy;

  void validate() const {
    if (grid.size() != 15) throw ConfigError("logreg config: grid must hold 15 values");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (!(grid[i] > 0)) throw ConfigError("logreg config: grid values must be positive");
      if (i > 0 && !(grid[i] > grid[i - 1])) throw ConfigError("logreg config: grid must be strictly ascending");
    }
    if (cv_folds < 2) throw ConfigError("logreg config: need at least 2 CV folds");
  }
};

struct LogRegFit {
  ProbeModel model;
  std::size_t iterations = 0;
  bool converged = false;
};

namespace detail {

/**
 * Exact minimizer of the weighted cross-entropy over the bias for fixed
 * logits `z` (N x K). Newton steps with the last class's bias pinned at 0
 * (softmax is invariant to a common shift). Starts from `b`.
 */
inline void solve_bias(const MatrixD& z, std::span<const int> y, std::span<const double> class_weights,
                       std::vector<double>& b) {
  const std::size_t n = z.rows(), k = z.cols(), m = k - 1;
  if (m == 0) return;
  std::vector<double> p(k);
  auto eval = [&](const std::vector<double>& bb, Eigen::VectorXd* g, Eigen::MatrixXd* h) {
    double f = 0.0;
    if (g) g->setZero(static_cast<Eigen::Index>(m));
    if (h) h->setZero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < n; ++i) {
      auto zi = z.row(i);
      for (std::size_t c = 0; c < k; ++c) p[c] = zi[c] + bb[c];
      const auto yi = static_cast<std::size_t>(y[i]);
      const double w = class_weights[yi];
      f += w * (numkit::log_sum_exp(p) - p[yi]);
      numkit::softmax_inplace(p);
      for (std::size_t a = 0; a < m; ++a) {
        if (g) (*g)[static_cast<Eigen::Index>(a)] += w * (p[a] - (a == yi ? 1.0 : 0.0));
        if (h)
          for (std::size_t c = 0; c < m; ++c)
            (*h)(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)) += w * p[a] * ((a == c) - p[c]);
      }
    }
    return f;
  };
  for (double& v : b) v -= b[m];
  Eigen::VectorXd g;
  Eigen::MatrixXd h;
  std::vector<double> trial(k, 0.0);
  for (int it = 0; it < 50; ++it) {
    const double f = eval(b, &g, &h);
    const Eigen::VectorXd step = h.ldlt().solve(-g);
    double scale = 1.0;
    for (std::size_t a = 0; a < m; ++a) scale = std::max(scale, std::abs(b[a]));
    const double len = step.lpNorm<Eigen::Infinity>();
    if (!(len > 1e-15 * scale)) break;
    // Inside the quadratic region the full step is taken even when the
    // change in f is below its roundoff; elsewhere backtrack (Armijo).
    double t = 1.0;
    bool moved = false;
    for (int bt = 0; bt < 40; ++bt, t *= 0.5) {
      for (std::size_t a = 0; a < m; ++a) trial[a] = b[a] + t * step[static_cast<Eigen::Index>(a)];
      if ((bt == 0 && len < 1e-4) || eval(trial, nullptr, nullptr) <= f + 1e-4 * t * g.dot(step)) {
        moved = true;
        break;
      }
    }
    if (!moved) break;
    b = trial;
  }
}

}  // namespace detail

/**
 * Minimizes  sum_i w[y_i] * CE_i + ||W||^2 / (2C)  (bias unpenalized).
 *
 * Features are centred by their weighted mean so that the bias decouples from
 * W to first order. The bias is profiled out: every objective evaluation
 * solves it exactly for the current W. L-BFGS then runs on V with
 * W = t * V, t = min(1, C * M) (M = total sample weight), on the objective
 * divided by M * t, which keeps V and the Hessian of order one even for very
 * small C, where the optimal weights scale like C.
 */
inline LogRegFit fit_logreg(const MatrixD& x, std::span<const int> y, std::size_t num_classes, double c,
                            std::span<const double> class_weights, double tol = 1e-6, std::size_t max_iter = 1000) {
  const std::size_t k = num_classes, dim = x.cols(), nw = k * dim;
  if (x.rows() != y.size()) throw ContractViolation("fit_logreg: rows and labels differ in length");
  std::vector<std::size_t> counts(k, 0);
  for (int yi : y) {
    if (yi < 0 || static_cast<std::size_t>(yi) >= k) throw ContractViolation("fit_logreg: label out of range");
    ++counts[static_cast<std::size_t>(yi)];
  }
  for (std::size_t a = 0; a < k; ++a)
    if (counts[a] == 0) throw ConfigError("fit_logreg: class " + std::to_string(a) + " has no training items");

  double mass = 0.0;
  std::vector<double> centre(dim, 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double w = class_weights[static_cast<std::size_t>(y[i])];
    mass += w;
    auto r = x.row(i);
    for (std::size_t j = 0; j < dim; ++j) centre[j] += w * r[j];
  }
  for (double& v : centre) v /= mass;
  MatrixD xc = x;
  for (std::size_t i = 0; i < xc.rows(); ++i) {
    auto r = xc.row(i);
    for (std::size_t j = 0; j < dim; ++j) r[j] -= centre[j];
  }

  const auto n = static_cast<double>(x.rows());
  const double t = std::min(1.0, c * mass);
  ProbeModel model{MatrixD(k, dim), std::vector<double>(k, 0.0)};
  std::vector<double> bias(k, 0.0);

  numkit::Objective objective = [&](const std::vector<double>& v, std::vector<double>& grad) {
    auto w = model.weights.values();
    for (std::size_t i = 0; i < nw; ++i) w[i] = t * v[i];
    std::fill(model.bias.begin(), model.bias.end(), 0.0);
    detail::solve_bias(model.logits(xc), y, class_weights, bias);
    model.bias = bias;
    const auto lg = probe_loss(model, xc, y, class_weights);
    double sq = 0.0;
    for (double u : w) sq += u * u;
    const double f = (n * lg.loss + sq / (2.0 * c)) / (mass * t);
    for (std::size_t r = 0; r < k; ++r) {
      auto g = lg.grad.row(r);
      for (std::size_t j = 0; j < dim; ++j) grad[r * dim + j] = (n * g[j] + w[r * dim + j] / c) / mass;
    }
    return f;
  };
  numkit::LbfgsOptions opt;
  opt.gtol = tol;
  opt.max_iter = max_iter;
  auto res = numkit::minimize_lbfgs(objective, std::vector<double>(nw, 0.0), opt);
  std::vector<double> scratch(nw);
  objective(res.x, scratch);

  // Undo the centring: W (x - centre) + b = W x + (b - W centre).
  for (std::size_t r = 0; r < k; ++r) {
    auto wr = model.weights.row(r);
    for (std::size_t j = 0; j < dim; ++j) model.bias[r] -= wr[j] * centre[j];
  }
  return {std::move(model), res.iterations, res.converged};
}

struct LogRegResult {
  ProbeModel model;
  double chosen_penalty = 0.0;
  std::size_t chosen_index = 0;
  std::vector<double> cv_scores;  // mean CV score per grid value
  std::vector<std::string> warnings;
};

inline double cv_score(CvScoring scoring, std::span<const int> pred, std::span<const int> y) {
  return scoring == CvScoring::BalancedAccuracy ? scorebook::balanced_accuracy(pred, y) : scorebook::accuracy(pred, y);
}

/**
 * Grid search over C by stratified k-fold CV, then a refit on all of `x`.
 * Equal mean scores (within 1e-12) resolve to the smaller C, i.e. the
 * stronger penalty.
 */
inline LogRegResult train_logreg_cv(const MatrixD& x, std::span<const int> y, std::size_t num_classes,
                                    const LogRegConfig& cfg, const splitkit::SeedBundle& seeds) {
  cfg.validate();
  if (x.rows() != y.size()) throw ContractViolation("train_logreg_cv: rows and labels differ in length");
  if (count_classes(y) < 2) throw ConfigError("train_logreg_cv: training set contains fewer than 2 classes");
  num_classes = std::max(num_classes, static_cast<std::size_t>(*std::max_element(y.begin(), y.end())) + 1);

  LogRegResult out;
  auto folds = splitkit::stratified_kfold(y, cfg.cv_folds, seeds.split_seed);
  out.warnings = folds.warnings;

  struct FoldData {
    MatrixD xtr, xte;
    std::vector<int> ytr, yte;
    std::vector<double> weights;
  };
  std::vector<FoldData> data;
  for (const auto& f : folds.folds) {
    FoldData d;
    d.xtr = numkit::gather_rows(x, f.train);
    d.xte = numkit::gather_rows(x, f.test);
    for (auto i : f.train) d.ytr.push_back(y[i]);
    for (auto i : f.test) d.yte.push_back(y[i]);
    d.weights = cfg.balanced_weights ? balanced_class_weights(d.ytr, num_classes)
                                     : std::vector<double>(num_classes, 1.0);
    data.push_back(std::move(d));
  }

  double best = -1.0;
  for (std::size_t gi = 0; gi < cfg.grid.size(); ++gi) {
    double total = 0.0;
    for (const auto& d : data) {
      auto fit = fit_logreg(d.xtr, d.ytr, num_classes, cfg.grid[gi], d.weights, cfg.tol, cfg.max_iter);
      total += cv_score(cfg.scoring, predict(fit.model, d.xte).classes, d.yte);
    }
    const double mean = total / static_cast<double>(data.size());
    out.cv_scores.push_back(mean);
    if (mean > best + 1e-12) {
      best = mean;
      out.chosen_index = gi;
    }
  }
  out.chosen_penalty = cfg.grid[out.chosen_index];
  const auto weights =
      cfg.balanced_weights ? balanced_class_weights(y, num_classes) : std::vector<double>(num_classes, 1.0);
  out.model = fit_logreg(x, y, num_classes, out.chosen_penalty, weights, cfg.tol, cfg.max_iter).model;
  return out;
}

}  // namespace pathbench::probekit
