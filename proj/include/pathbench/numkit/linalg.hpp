#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "pathbench/errors.hpp"
#include "pathbench/numkit/matrix.hpp"

namespace pathbench::numkit {

namespace detail {

using EigenMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
EigenMat to_eigen(const BasicMatrix<T>& m) {
  EigenMat out(static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = static_cast<double>(m(r, c));
    }
  }
  return out;
}

template <typename Derived>
MatrixD from_eigen(const Eigen::MatrixBase<Derived>& m) {
  MatrixD out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = m(r, c);
    }
  }
  return out;
}

}  // namespace detail

/**
 * Principal components of a data matrix, fitted by SVD of the centered data.
 *
 * Each component is sign-normalized so that its largest-magnitude entry is
 * positive (first such entry on ties). When the centered data has rank below
 * k, the surplus components are zero rows with zero explained variance, so a
 * projection always has exactly k columns.
 */
struct PcaModel {
  MatrixD components;                     // k x cols
  std::vector<double> mean;               // cols
  std::vector<double> explained_variance; // k, non-increasing
  std::size_t effective_rank = 0;

  [[nodiscard]] std::size_t n_components() const noexcept { return components.rows(); }

  template <typename T>
  [[nodiscard]] MatrixD project(const BasicMatrix<T>& x) const {
    if (x.cols() != mean.size()) {
      throw ContractViolation("pca project: input has " + std::to_string(x.cols()) + " columns, model expects " +
                              std::to_string(mean.size()));
    }
    const std::size_t k = components.rows();
    MatrixD out(x.rows(), k);
    std::vector<double> centered(mean.size());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      auto row = x.row(i);
      for (std::size_t j = 0; j < mean.size(); ++j) centered[j] = static_cast<double>(row[j]) - mean[j];
      for (std::size_t c = 0; c < k; ++c) {
        auto comp = components.row(c);
        double acc = 0.0;
        for (std::size_t j = 0; j < mean.size(); ++j) acc += comp[j] * centered[j];
        out(i, c) = acc;
      }
    }
    return out;
  }

  /// Maps k-dimensional scores back to the input space (mean + scores * components).
  [[nodiscard]] MatrixD reconstruct(const MatrixD& scores) const {
    MatrixD out(scores.rows(), mean.size());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
      for (std::size_t j = 0; j < mean.size(); ++j) {
        double acc = mean[j];
        for (std::size_t c = 0; c < components.rows(); ++c) acc += scores(i, c) * components(c, j);
        out(i, j) = acc;
      }
    }
    return out;
  }
};

template <typename T>
PcaModel pca_fit(const BasicMatrix<T>& x, std::size_t k) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n < 2) throw ContractViolation("pca_fit: need at least 2 rows");
  if (k == 0 || k > std::min(n, d)) {
    throw ContractViolation("pca_fit: k=" + std::to_string(k) + " must be in [1, min(rows, cols)=" +
                            std::to_string(std::min(n, d)) + "]");
  }
  detail::EigenMat a = detail::to_eigen(x);
  Eigen::RowVectorXd mu = a.colwise().mean();
  a.rowwise() -= mu;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(a), Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const Eigen::MatrixXd& v = svd.matrixV();

  PcaModel model;
  model.mean.assign(mu.data(), mu.data() + d);
  model.components = MatrixD(k, d);
  model.explained_variance.assign(k, 0.0);

  const double smax = s.size() > 0 ? s(0) : 0.0;
  const double tol = smax * static_cast<double>(std::max(n, d)) * std::numeric_limits<double>::epsilon();
  for (std::size_t c = 0; c < k; ++c) {
    const double sv = s(static_cast<Eigen::Index>(c));
    if (!(sv > tol) || smax == 0.0) break;
    ++model.effective_rank;
    auto col = v.col(static_cast<Eigen::Index>(c));
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < col.size(); ++j) {
      if (std::abs(col(j)) > std::abs(col(arg))) arg = j;
    }
    const double sign = col(arg) < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j) model.components(c, j) = sign * col(static_cast<Eigen::Index>(j));
    model.explained_variance[c] = sv * sv / static_cast<double>(n - 1);
  }
  return model;
}

struct RidgeModel {
  MatrixD weights;                // features x targets
  std::vector<double> intercept;  // targets

  [[nodiscard]] MatrixD predict(const MatrixD& x) const {
    if (x.cols() != weights.rows()) {
      throw ContractViolation("ridge predict: input has " + std::to_string(x.cols()) + " features, model expects " +
                              std::to_string(weights.rows()));
    }
    MatrixD out(x.rows(), weights.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t t = 0; t < weights.cols(); ++t) {
        double acc = intercept[t];
        for (std::size_t j = 0; j < weights.rows(); ++j) acc += x(i, j) * weights(j, t);
        out(i, t) = acc;
      }
    }
    return out;
  }
};

/**
 * Multivariate ridge regression: solves (Xc'Xc + alpha I) W = Xc'Yc where Xc, Yc
 * are column-centered when `fit_intercept` is set; the intercept then restores
 * the means. alpha = 0 with a singular Gram matrix is a numeric error.
 */
inline RidgeModel ridge_fit(const MatrixD& x, const MatrixD& y, double alpha, bool fit_intercept = true) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ContractViolation("ridge_fit: alpha must be finite and >= 0");
  if (x.rows() != y.rows()) {
    throw ContractViolation("ridge_fit: X has " + std::to_string(x.rows()) + " rows, Y has " +
                            std::to_string(y.rows()));
  }
  if (x.rows() == 0) throw ContractViolation("ridge_fit: empty design matrix");
  detail::EigenMat a = detail::to_eigen(x);
  detail::EigenMat b = detail::to_eigen(y);
  Eigen::RowVectorXd x_mean = Eigen::RowVectorXd::Zero(a.cols());
  Eigen::RowVectorXd y_mean = Eigen::RowVectorXd::Zero(b.cols());
  if (fit_intercept) {
    x_mean = a.colwise().mean();
    y_mean = b.colwise().mean();
    a.rowwise() -= x_mean;
    b.rowwise() -= y_mean;
  }
  Eigen::MatrixXd gram = a.transpose() * a;
  gram.diagonal().array() += alpha;
  Eigen::MatrixXd rhs = a.transpose() * b;

  Eigen::MatrixXd w;
  if (alpha > 0.0) {
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) throw NumericError("ridge_fit: Cholesky factorization failed");
    w = llt.solve(rhs);
  } else {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
    qr.setThreshold(1e-12);
    if (qr.rank() < gram.rows()) {
      throw NumericError("ridge_fit: X'X is singular (rank " + std::to_string(qr.rank()) + " of " +
                         std::to_string(gram.rows()) + ") and alpha = 0");
    }
    w = qr.solve(rhs);
  }
  if (!w.allFinite()) throw NumericError("ridge_fit: non-finite solution");

  RidgeModel model;
  model.weights = detail::from_eigen(w);
  model.intercept.resize(static_cast<std::size_t>(b.cols()));
  Eigen::RowVectorXd icpt = y_mean - x_mean * w;
  for (Eigen::Index t = 0; t < icpt.size(); ++t) model.intercept[static_cast<std::size_t>(t)] = icpt(t);
  return model;
}

}  // namespace pathbench::numkit
