#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pathbench/embstore/binary_io.hpp"
#include "pathbench/errors.hpp"
#include "pathbench/numkit/loss.hpp"
#include "pathbench/numkit/matrix.hpp"
#include "pathbench/numkit/optim.hpp"
#include "pathbench/numkit/rng.hpp"
#include "pathbench/scorebook/metrics.hpp"
#include "pathbench/splitkit/seeds.hpp"

namespace pathbench::probekit {

using numkit::MatrixD;
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMajor> as_eigen(const MatrixD& m) {
  return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}
inline Eigen::Map<RowMajor> as_eigen(MatrixD& m) {
  return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

/// Linear classifier: logits = x * W^T + b, W is K x dim.
struct ProbeModel {
  MatrixD weights;
  std::vector<double> bias;

  [[nodiscard]] std::size_t num_classes() const noexcept { return weights.rows(); }
  [[nodiscard]] std::size_t dim() const noexcept { return weights.cols(); }

  [[nodiscard]] MatrixD logits(const MatrixD& x) const {
    if (x.cols() != dim()) {
      throw ContractViolation("probe: input dim " + std::to_string(x.cols()) + " != model dim " +
                              std::to_string(dim()));
    }
    MatrixD out(x.rows(), num_classes());
    auto z = as_eigen(out);
    z.noalias() = as_eigen(x) * as_eigen(weights).transpose();
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t c = 0; c < bias.size(); ++c) out(i, c) += bias[c];
    return out;
  }

  friend bool operator==(const ProbeModel&, const ProbeModel&) = default;
};

struct Prediction {
  std::vector<int> classes;
  MatrixD probabilities;
};

/// Argmax with ties resolved to the lowest class index.
inline std::vector<int> argmax_rows(const MatrixD& scores) {
  std::vector<int> out(scores.rows(), 0);
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    auto r = scores.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < r.size(); ++c)
      if (r[c] > r[best]) best = c;
    out[i] = static_cast<int>(best);
  }
  return out;
}

inline Prediction predict(const ProbeModel& model, const MatrixD& x) {
  Prediction p;
  p.probabilities = model.logits(x);
  p.classes = argmax_rows(p.probabilities);
  for (std::size_t i = 0; i < x.rows(); ++i) numkit::softmax_inplace(p.probabilities.row(i));
  return p;
}

/// w_c = N / (K * n_c) over the K classes present in `labels`; indexed by class id.
inline std::vector<double> balanced_class_weights(std::span<const int> labels, std::size_t num_classes = 0) {
  if (labels.empty()) throw ContractViolation("balanced_class_weights: empty labels");
  int max_label = 0;
  for (int y : labels) {
    if (y < 0) throw ContractViolation("balanced_class_weights: negative label");
    max_label = std::max(max_label, y);
  }
  const std::size_t k = std::max(num_classes, static_cast<std::size_t>(max_label) + 1);
  std::vector<std::size_t> counts(k, 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  const auto present = static_cast<double>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
  const auto n = static_cast<double>(labels.size());
  std::vector<double> w(k, 1.0);
  for (std::size_t c = 0; c < k; ++c)
    if (counts[c] > 0) w[c] = n / (present * static_cast<double>(counts[c]));
  return w;
}

inline std::size_t count_classes(std::span<const int> labels) {
  std::vector<bool> seen;
  std::size_t n = 0;
  for (int y : labels) {
    const auto i = static_cast<std::size_t>(y);
    if (i >= seen.size()) seen.resize(i + 1, false);
    if (!seen[i]) {
      seen[i] = true;
      ++n;
    }
  }
  return n;
}

/// Weighted mean cross-entropy of a linear model and its gradient (K x (dim + 1), bias last).
inline numkit::LossAndGrad probe_loss(const ProbeModel& model, const MatrixD& x, std::span<const int> y,
                                      std::span<const double> class_weights) {
  const auto lg = numkit::softmax_xent_grad(model.logits(x), y, class_weights);
  MatrixD grad(model.num_classes(), model.dim() + 1);
  auto g = as_eigen(grad);
  g.leftCols(static_cast<Eigen::Index>(model.dim())).noalias() = as_eigen(lg.grad).transpose() * as_eigen(x);
  g.col(static_cast<Eigen::Index>(model.dim())) = as_eigen(lg.grad).colwise().sum().transpose();
  return {lg.loss, std::move(grad)};
}

// ---------------------------------------------------------------------------
// SGD linear probe

enum class CheckpointPolicy { BestVal, Final };

struct ProbeConfig {
  std::size_t batch_size = 256;
  std::int64_t total_iters = 12500;
  double base_lr = 3e-4;
  double final_lr = 0.0;
  std::int64_t eval_every = 625;
  CheckpointPolicy checkpoint_policy = CheckpointPolicy::BestVal;

  void validate() const {
    if (batch_size == 0 || total_iters <= 0 || !(base_lr > 0) || eval_every <= 0) {
      throw ConfigError("probe config: batch_size, total_iters, base_lr and eval_every must be positive");
    }
    if (total_iters % eval_every != 0) {
      throw ConfigError("probe config: eval_every " + std::to_string(eval_every) + " does not divide total_iters " +
                        std::to_string(total_iters));
    }
  }
};

struct LabeledRows {
  const MatrixD* x = nullptr;
  std::span<const int> y;
};

struct ProbeTrainResult {
  ProbeModel model;
  std::int64_t selected_iter = 0;
  std::vector<double> val_history;  // balanced accuracy at each checkpoint
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], drawn row-major from `seed`.
inline MatrixD uniform_init(std::size_t rows, std::size_t fan_in, std::uint64_t seed) {
  numkit::CounterRng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  MatrixD w(rows, fan_in);
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  return w;
}

/**
 * Mini-batch index stream: each epoch is a fresh permutation drawn from
 * stream_key(shuffle_seed, epoch), cut into consecutive batches; the last
 * batch of an epoch may be short.
 */
class EpochBatcher {
 public:
  EpochBatcher(std::size_t n, std::size_t batch, std::uint64_t seed) : n_(n), batch_(batch), seed_(seed) {}

  std::span<const std::size_t> next() {
    if (pos_ >= order_.size()) {
      numkit::CounterRng rng(numkit::stream_key(seed_, epoch_++));
      order_ = rng.permutation(n_);
      pos_ = 0;
    }
    const std::size_t len = std::min(batch_, order_.size() - pos_);
    std::span<const std::size_t> out(order_.data() + pos_, len);
    pos_ += len;
    return out;
  }

 private:
  std::size_t n_, batch_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

inline ProbeTrainResult train_linear_probe(const MatrixD& x, std::span<const int> y, std::size_t num_classes,
                                           std::optional<LabeledRows> val, const ProbeConfig& cfg,
                                           const splitkit::SeedBundle& seeds) {
  cfg.validate();
  if (x.rows() != y.size()) throw ContractViolation("train_linear_probe: rows and labels differ in length");
  if (count_classes(y) < 2) throw ConfigError("train_linear_probe: training set contains fewer than 2 classes");
  num_classes = std::max(num_classes, static_cast<std::size_t>(*std::max_element(y.begin(), y.end())) + 1);
  const std::size_t dim = x.cols();

  ProbeModel model{uniform_init(num_classes, dim, seeds.init_seed), std::vector<double>(num_classes, 0.0)};
  const std::vector<double> unit(num_classes, 1.0);
  const numkit::CosineSchedule sched{cfg.base_lr, cfg.total_iters, cfg.final_lr};
  const bool select = val.has_value() && val->x->rows() > 0 && cfg.checkpoint_policy == CheckpointPolicy::BestVal;

  ProbeTrainResult res;
  res.selected_iter = cfg.total_iters;
  double best = -1.0;
  EpochBatcher batches(x.rows(), cfg.batch_size, seeds.shuffle_seed);
  MatrixD xb;
  std::vector<int> yb;
  for (std::int64_t it = 0; it < cfg.total_iters; ++it) {
    auto idx = batches.next();
    xb = numkit::gather_rows(x, idx);
    yb.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = y[idx[i]];
    const auto lg = probe_loss(model, xb, yb, unit);
    const double lr = numkit::cosine_lr(sched, it);
    auto w = model.weights.values();
    for (std::size_t c = 0; c < num_classes; ++c) {
      auto g = lg.grad.row(c);
      for (std::size_t j = 0; j < dim; ++j) w[c * dim + j] -= lr * g[j];
      model.bias[c] -= lr * g[dim];
    }
    if (select && (it + 1) % cfg.eval_every == 0) {
      const double score = scorebook::balanced_accuracy(predict(model, *val->x).classes, val->y);
      res.val_history.push_back(score);
      if (score >= best) {
        best = score;
        res.model = model;
        res.selected_iter = it + 1;
      }
    }
  }
  if (!select) res.model = std::move(model);
  return res;
}

// ---------------------------------------------------------------------------
// Serialization ("PPRB")

inline constexpr std::string_view kProbeMagic = "PPRB";

inline std::vector<std::uint8_t> encode_probe(const ProbeModel& m) {
  embstore::ByteWriter w;
  w.bytes(kProbeMagic);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(m.num_classes()));
  w.u32(static_cast<std::uint32_t>(m.dim()));
  for (double v : m.weights.values()) w.f64(v);
  for (double v : m.bias) w.f64(v);
  return w.buffer();
}

inline ProbeModel decode_probe(std::span<const std::uint8_t> data) {
  embstore::ByteReader r(data);
  if (!r.has(16) || r.bytes(4) != kProbeMagic) throw ParseError("probe file: bad magic");
  if (r.u32() != 1) throw ParseError("probe file: unsupported version");
  const std::size_t k = r.u32();
  const std::size_t dim = r.u32();
  if (r.remaining() != (k * dim + k) * 8) throw ParseError("probe file: size does not match header");
  ProbeModel m{MatrixD(k, dim), std::vector<double>(k)};
  for (double& v : m.weights.values()) v = r.f64();
  for (double& v : m.bias) v = r.f64();
  return m;
}

inline void write_probe(const ProbeModel& m, const std::filesystem::path& path) {
  embstore::write_file_bytes(path, encode_probe(m));
}

inline ProbeModel read_probe(const std::filesystem::path& path) { return decode_probe(embstore::read_file_bytes(path)); }

}  // namespace pathbench::probekit
