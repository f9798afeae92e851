#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "pathbench/errors.hpp"
#include "pathbench/numkit/matrix.hpp"

namespace pathbench::numkit {

struct CosineSchedule {
  double base_lr = 3e-4;
  std::int64_t total_steps = 12500;
  double final_lr = 0.0;
};

/// Learning rate after `step` steps; exact at both endpoints.
inline double cosine_lr(const CosineSchedule& sched, std::int64_t step) {
  if (sched.total_steps <= 0 || !(sched.base_lr > 0.0) || sched.final_lr < 0.0) {
    throw ContractViolation("cosine schedule needs total_steps > 0, base_lr > 0, final_lr >= 0");
  }
  if (step < 0 || step > sched.total_steps) {
    throw std::out_of_range("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(sched.total_steps) + "]");
  }
  if (step == 0) return sched.base_lr;
  if (step == sched.total_steps) return sched.final_lr;
  const double progress = static_cast<double>(step) / static_cast<double>(sched.total_steps);
  return sched.final_lr +
         0.5 * (sched.base_lr - sched.final_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

/// params - lr * grads.
template <typename T>
BasicMatrix<T> sgd_step(const BasicMatrix<T>& params, const BasicMatrix<T>& grads, T lr) {
  require_same_shape(params, grads, "sgd_step");
  BasicMatrix<T> out = params;
  auto p = out.values();
  auto g = grads.values();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
  return out;
}

enum class OptimKind { Sgd, AdamW };

struct OptimState {
  OptimKind kind = OptimKind::AdamW;
  std::int64_t step_count = 0;
  MatrixD first_moment;
  MatrixD second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;

  static OptimState adamw(const MatrixD& like, double weight_decay = 0.01, double beta1 = 0.9,
                          double beta2 = 0.999, double epsilon = 1e-8) {
    OptimState s;
    s.kind = OptimKind::AdamW;
    s.first_moment = MatrixD(like.rows(), like.cols());
    s.second_moment = MatrixD(like.rows(), like.cols());
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = epsilon;
    s.weight_decay = weight_decay;
    return s;
  }
};

/**
 * One AdamW update with decoupled weight decay:
 *   p <- p * (1 - lr * wd)
 *   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
 *   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
 * where m_hat and v_hat are the bias-corrected moments.
 */
inline MatrixD adamw_step(OptimState& state, const MatrixD& params, const MatrixD& grads, double lr) {
  if (state.kind != OptimKind::AdamW) throw ContractViolation("adamw_step: state is not AdamW");
  require_same_shape(params, grads, "adamw_step");
  if (state.first_moment.empty() && state.second_moment.empty()) {
    state.first_moment = MatrixD(params.rows(), params.cols());
    state.second_moment = MatrixD(params.rows(), params.cols());
  }
  require_same_shape(params, state.first_moment, "adamw_step moments");
  require_same_shape(params, state.second_moment, "adamw_step moments");
  auto g = grads.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      throw NumericError("adamw_step: non-finite gradient at parameter index " + std::to_string(i));
    }
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  const double decay = 1.0 - lr * state.weight_decay;

  MatrixD out = params;
  auto p = out.values();
  auto m = state.first_moment.values();
  auto v = state.second_moment.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] *= decay;
    m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
    v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
  return out;
}

}  // namespace pathbench::numkit
