#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "pathbench/errors.hpp"
#include "pathbench/numkit/matrix.hpp"

namespace pathbench::numkit {

/// In-place numerically stable softmax of one row of logits.
inline void softmax_inplace(std::span<double> z) {
  if (z.empty()) return;
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

inline double log_sum_exp(std::span<const double> z) {
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

struct LossAndGrad {
  double loss = 0.0;
  MatrixD grad;
};

/**
 * Class-weighted softmax cross-entropy over a batch of logits (N x K).
 *
 * loss = (1/N) * sum_i w[y_i] * (logsumexp(z_i) - z_i[y_i]),
 * grad_i = w[y_i] * (softmax(z_i) - onehot(y_i)) / N.
 *
 * With balanced class weights over the full training set, sum_i w[y_i] = N,
 * so the batch normalizer and the weight mass coincide there.
 */
inline LossAndGrad softmax_xent_grad(const MatrixD& logits, std::span<const int> labels,
                                     std::span<const double> class_weights) {
  const std::size_t n = logits.rows();
  const std::size_t k = logits.cols();
  if (labels.size() != n) throw ContractViolation("softmax_xent_grad: label count differs from batch size");
  if (class_weights.size() != k) {
    throw ContractViolation("softmax_xent_grad: " + std::to_string(class_weights.size()) +
                            " class weights for " + std::to_string(k) + " classes");
  }
  for (double w : class_weights) {
    if (!(w > 0.0)) throw ContractViolation("softmax_xent_grad: class weights must be positive");
  }
  LossAndGrad out{0.0, MatrixD(n, k)};
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> row(k);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw ContractViolation("softmax_xent_grad: label " + std::to_string(y) + " at row " +
                              std::to_string(i) + " outside [0, " + std::to_string(k) + ")");
    }
    auto z = logits.row(i);
    std::copy(z.begin(), z.end(), row.begin());
    const double w = class_weights[static_cast<std::size_t>(y)];
    out.loss += w * (log_sum_exp(row) - z[static_cast<std::size_t>(y)]);
    softmax_inplace(row);
    auto g = out.grad.row(i);
    for (std::size_t c = 0; c < k; ++c) g[c] = w * row[c] * inv_n;
    g[static_cast<std::size_t>(y)] -= w * inv_n;
  }
  out.loss *= inv_n;
  return out;
}

}  // namespace pathbench::numkit
