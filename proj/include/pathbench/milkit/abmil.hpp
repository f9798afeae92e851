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
#include "pathbench/embstore/csv.hpp"
#include "pathbench/errors.hpp"
#include "pathbench/milkit/bags.hpp"
#include "pathbench/numkit/loss.hpp"
#include "pathbench/numkit/optim.hpp"
#include "pathbench/numkit/rng.hpp"
#include "pathbench/scorebook/metrics.hpp"
#include "pathbench/splitkit/seeds.hpp"

namespace pathbench::milkit {

/**
 * Attention MIL head:
 *   s_i = w . relu(V x_i),  a = softmax(s),  z = sum_i a_i x_i,
 *   logits = C z + b.
 * The same struct carries gradients.
 */
struct ABMILHead {
  MatrixD V;                  // h x dim
  std::vector<double> w;      // h
  MatrixD classifier;         // K x dim
  std::vector<double> bias;   // K

  [[nodiscard]] std::size_t hidden() const noexcept { return V.rows(); }
  [[nodiscard]] std::size_t dim() const noexcept { return V.cols(); }
  [[nodiscard]] std::size_t num_classes() const noexcept { return classifier.rows(); }
  [[nodiscard]] std::size_t parameter_count() const noexcept {
    return V.size() + w.size() + classifier.size() + bias.size();
  }

  static ABMILHead zeros(std::size_t dim, std::size_t hidden, std::size_t classes) {
    return {MatrixD(hidden, dim), std::vector<double>(hidden, 0.0), MatrixD(classes, dim),
            std::vector<double>(classes, 0.0)};
  }

  /// Parameters flattened as [V, w, classifier, bias] in a 1 x P matrix.
  [[nodiscard]] MatrixD flat() const {
    MatrixD out(1, parameter_count());
    auto dst = out.values().begin();
    dst = std::copy(V.values().begin(), V.values().end(), dst);
    dst = std::copy(w.begin(), w.end(), dst);
    dst = std::copy(classifier.values().begin(), classifier.values().end(), dst);
    std::copy(bias.begin(), bias.end(), dst);
    return out;
  }

  void assign(const MatrixD& flat_params) {
    if (flat_params.size() != parameter_count()) throw ContractViolation("ABMILHead::assign: size mismatch");
    auto src = flat_params.values().begin();
    std::copy_n(src, V.size(), V.values().begin());
    src += static_cast<std::ptrdiff_t>(V.size());
    std::copy_n(src, w.size(), w.begin());
    src += static_cast<std::ptrdiff_t>(w.size());
    std::copy_n(src, classifier.size(), classifier.values().begin());
    src += static_cast<std::ptrdiff_t>(classifier.size());
    std::copy_n(src, bias.size(), bias.begin());
  }

  friend bool operator==(const ABMILHead&, const ABMILHead&) = default;
};

namespace detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMajor> view(const MatrixD& m) {
  return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}
inline Eigen::Map<RowMajor> view(MatrixD& m) {
  return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}
inline Eigen::Map<const Eigen::VectorXd> view(const std::vector<double>& v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}
inline Eigen::Map<Eigen::VectorXd> view(std::vector<double>& v) { return {v.data(), static_cast<Eigen::Index>(v.size())}; }

}  // namespace detail

struct ForwardResult {
  std::vector<double> logits;
  std::vector<double> attention;
};

namespace detail {

struct ForwardCache {
  RowMajor pre;                // n x h, V x_i
  Eigen::VectorXd attention;   // n
  Eigen::VectorXd pooled;      // dim
  Eigen::VectorXd logits;      // K
};

inline ForwardCache forward(const ABMILHead& head, const MatrixD& x) {
  if (x.rows() == 0) throw ContractViolation("abmil_forward: empty bag");
  if (x.cols() != head.dim()) {
    throw ContractViolation("abmil_forward: instance dim " + std::to_string(x.cols()) + " != head dim " +
                            std::to_string(head.dim()));
  }
  ForwardCache c;
  const auto X = view(x);
  c.pre.noalias() = X * view(head.V).transpose();
  Eigen::VectorXd s = c.pre.cwiseMax(0.0) * view(head.w);
  const double mx = s.maxCoeff();
  c.attention = (s.array() - mx).exp();
  c.attention /= c.attention.sum();
  c.pooled.noalias() = X.transpose() * c.attention;
  c.logits.noalias() = view(head.classifier) * c.pooled;
  c.logits += view(head.bias);
  return c;
}

}  // namespace detail

inline ForwardResult abmil_forward(const ABMILHead& head, const MatrixD& instances) {
  auto c = detail::forward(head, instances);
  return {std::vector<double>(c.logits.data(), c.logits.data() + c.logits.size()),
          std::vector<double>(c.attention.data(), c.attention.data() + c.attention.size())};
}

inline ForwardResult abmil_forward(const ABMILHead& head, const Bag& bag) { return abmil_forward(head, bag.instances); }

/**
 * Cross-entropy of one bag; accumulates `scale * dL/dtheta` into `grad`.
 * Returns the unscaled loss.
 */
inline double abmil_backward(const ABMILHead& head, const MatrixD& x, int label, double scale, ABMILHead& grad) {
  using namespace detail;
  const auto c = forward(head, x);
  const auto k = static_cast<Eigen::Index>(head.num_classes());
  if (label < 0 || label >= k) throw ContractViolation("abmil: label " + std::to_string(label) + " out of range");

  const double m = c.logits.maxCoeff();
  Eigen::VectorXd p = (c.logits.array() - m).exp();
  const double sum = p.sum();
  const double loss = std::log(sum) + m - c.logits[label];
  p /= sum;
  p[label] -= 1.0;  // dL/dlogits
  p *= scale;

  view(grad.classifier).noalias() += p * c.pooled.transpose();
  view(grad.bias) += p;
  const Eigen::VectorXd dz = view(head.classifier).transpose() * p;
  const auto X = view(x);
  const Eigen::VectorXd da = X * dz;
  const Eigen::VectorXd ds = c.attention.cwiseProduct((da.array() - c.attention.dot(da)).matrix());
  const RowMajor hidden = c.pre.cwiseMax(0.0);
  view(grad.w).noalias() += hidden.transpose() * ds;
  RowMajor dh = ds * view(head.w).transpose();
  dh = dh.cwiseProduct((c.pre.array() > 0.0).cast<double>().matrix());
  view(grad.V).noalias() += dh.transpose() * X;
  return loss;
}

// ---------------------------------------------------------------------------
// Training

struct MILConfig {
  std::size_t batch_slides = 32;
  std::int64_t total_iters = 12500;
  double base_lr = 1e-3;
  double final_lr = 0.0;
  double weight_decay = 0.01;
  std::size_t hidden_dim = 128;
  std::int64_t eval_every = 625;
  bool select_best_val = true;

  void validate() const {
    if (batch_slides == 0 || total_iters <= 0 || !(base_lr > 0) || hidden_dim == 0 || eval_every <= 0) {
      throw ConfigError("MIL config: batch_slides, total_iters, base_lr, hidden_dim and eval_every must be positive");
    }
    if (total_iters % eval_every != 0) throw ConfigError("MIL config: eval_every must divide total_iters");
  }
};

/// Uniform(+-1/sqrt(fan_in)) weights from independent streams of `seed`; biases zero.
inline ABMILHead init_head(std::size_t dim, std::size_t hidden, std::size_t classes, std::uint64_t seed) {
  auto head = ABMILHead::zeros(dim, hidden, classes);
  auto fill = [&](std::span<double> dst, std::size_t fan_in, std::uint64_t tag) {
    numkit::CounterRng rng(numkit::stream_key(seed, tag));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : dst) v = rng.uniform(-bound, bound);
  };
  fill(head.V.values(), dim, 0);
  fill(head.w, hidden, 1);
  fill(head.classifier.values(), dim, 2);
  return head;
}

inline std::vector<int> evaluate_slides(const ABMILHead& head, const std::vector<Bag>& bags) {
  std::vector<int> out;
  out.reserve(bags.size());
  for (const auto& bag : bags) {
    const auto c = detail::forward(head, bag.instances);
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < c.logits.size(); ++j)
      if (c.logits[j] > c.logits[best]) best = j;
    out.push_back(static_cast<int>(best));
  }
  return out;
}

struct MILTrainResult {
  ABMILHead head;
  std::int64_t selected_iter = 0;
  std::vector<double> val_history;
};

/**
 * AdamW with a cosine schedule for exactly `total_iters` steps, starting from
 * init_head with the classifier zeroed (the first steps then see mean pooling). Each step
 * averages the per-bag loss gradients over a batch of slides; batches are
 * consecutive chunks of a per-epoch permutation (last chunk may be short).
 * With validation bags, the head with the best validation balanced accuracy
 * among the checkpoints every `eval_every` steps is returned (ties: later).
 */
inline MILTrainResult train_abmil(const std::vector<Bag>& bags, const std::vector<Bag>* val_bags,
                                  std::size_t num_classes, const MILConfig& cfg, const splitkit::SeedBundle& seeds) {
  cfg.validate();
  if (bags.empty()) throw ConfigError("train_abmil: no training bags");
  std::vector<int> labels = bag_labels(bags);
  std::vector<int> distinct = labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 2) throw ConfigError("train_abmil: training bags contain fewer than 2 classes");
  num_classes = std::max(num_classes, static_cast<std::size_t>(distinct.back()) + 1);

  const std::size_t dim = bags.front().instances.cols();
  ABMILHead head = init_head(dim, cfg.hidden_dim, num_classes, seeds.init_seed);
  std::fill(head.classifier.values().begin(), head.classifier.values().end(), 0.0);
  MatrixD params = head.flat();
  auto state = numkit::OptimState::adamw(params, cfg.weight_decay);
  const numkit::CosineSchedule sched{cfg.base_lr, cfg.total_iters, cfg.final_lr};
  const bool select = cfg.select_best_val && val_bags != nullptr && !val_bags->empty();
  std::vector<int> val_labels;
  if (select) val_labels = bag_labels(*val_bags);

  MILTrainResult res;
  res.selected_iter = cfg.total_iters;
  double best = -1.0;
  std::vector<std::size_t> order;
  std::size_t pos = 0;
  std::uint64_t epoch = 0;
  for (std::int64_t it = 0; it < cfg.total_iters; ++it) {
    if (pos >= order.size()) {
      numkit::CounterRng rng(numkit::stream_key(seeds.shuffle_seed, epoch++));
      order = rng.permutation(bags.size());
      pos = 0;
    }
    const std::size_t len = std::min(cfg.batch_slides, order.size() - pos);
    auto grad = ABMILHead::zeros(dim, cfg.hidden_dim, num_classes);
    const double scale = 1.0 / static_cast<double>(len);
    for (std::size_t b = 0; b < len; ++b) {
      const auto& bag = bags[order[pos + b]];
      abmil_backward(head, bag.instances, bag.label, scale, grad);
    }
    pos += len;
    params = numkit::adamw_step(state, params, grad.flat(), numkit::cosine_lr(sched, it));
    head.assign(params);

    if (select && (it + 1) % cfg.eval_every == 0) {
      const double score = scorebook::balanced_accuracy(evaluate_slides(head, *val_bags), val_labels);
      res.val_history.push_back(score);
      if (score >= best) {
        best = score;
        res.head = head;
        res.selected_iter = it + 1;
      }
    }
  }
  if (!select) res.head = std::move(head);
  return res;
}

// ---------------------------------------------------------------------------
// Serialization ("PMIL") and attention export

inline constexpr std::string_view kHeadMagic = "PMIL";

inline std::vector<std::uint8_t> encode_head(const ABMILHead& h) {
  embstore::ByteWriter w;
  w.bytes(kHeadMagic);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(h.num_classes()));
  w.u32(static_cast<std::uint32_t>(h.dim()));
  w.u32(static_cast<std::uint32_t>(h.hidden()));
  const MatrixD flat = h.flat();
  for (double v : flat.values()) w.f64(v);
  return w.buffer();
}

inline ABMILHead decode_head(std::span<const std::uint8_t> data) {
  embstore::ByteReader r(data);
  if (!r.has(20) || r.bytes(4) != kHeadMagic) throw ParseError("MIL head file: bad magic");
  if (r.u32() != 1) throw ParseError("MIL head file: unsupported version");
  const std::size_t k = r.u32(), dim = r.u32(), hidden = r.u32();
  auto head = ABMILHead::zeros(dim, hidden, k);
  if (r.remaining() != head.parameter_count() * 8) throw ParseError("MIL head file: size does not match header");
  MatrixD flat(1, head.parameter_count());
  for (double& v : flat.values()) v = r.f64();
  head.assign(flat);
  return head;
}

inline void write_head(const ABMILHead& h, const std::filesystem::path& path) {
  embstore::write_file_bytes(path, encode_head(h));
}

inline ABMILHead read_head(const std::filesystem::path& path) { return decode_head(embstore::read_file_bytes(path)); }

/// `slide_id,item_id,attention` for every instance of every bag.
inline std::string attention_csv(const ABMILHead& head, const std::vector<Bag>& bags) {
  std::string out = "slide_id,item_id,attention\n";
  char buf[32];
  for (const auto& bag : bags) {
    const auto fwd = abmil_forward(head, bag.instances);
    for (std::size_t i = 0; i < fwd.attention.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.9g", fwd.attention[i]);
      out += embstore::csv_escape(bag.slide_id) + ',' + embstore::csv_escape(bag.item_ids[i]) + ',' + buf + '\n';
    }
  }
  return out;
}

}  // namespace pathbench::milkit
