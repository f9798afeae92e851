#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "pathbench/embstore/bound_dataset.hpp"
#include "pathbench/embstore/csv.hpp"
#include "pathbench/errors.hpp"
#include "pathbench/numkit/linalg.hpp"
#include "pathbench/numkit/stats.hpp"
#include "pathbench/scorebook/metrics.hpp"
#include "pathbench/splitkit/splits.hpp"

namespace pathbench::hestkit {

using numkit::MatrixD;

struct RegressionConfig {
  std::size_t pca_factors = 256;
  double ridge_alpha = 1.0;
  bool fit_intercept = true;
  bool normalize_factors = true;  // divide each factor by its training std
};

struct RegressionTask {
  std::string task_id;
  std::vector<std::string> genes;  // target names, one per manifest target column
  RegressionConfig cfg;
};

/// PCA (train only) -> optional factor whitening -> multivariate ridge.
struct HestModel {
  numkit::PcaModel pca;
  std::vector<double> factor_scale;
  numkit::RidgeModel ridge;

  [[nodiscard]] MatrixD factors(const MatrixD& x) const {
    MatrixD f = pca.project(x);
    for (std::size_t i = 0; i < f.rows(); ++i) {
      auto r = f.row(i);
      for (std::size_t c = 0; c < r.size(); ++c) r[c] *= factor_scale[c];
    }
    return f;
  }

  [[nodiscard]] MatrixD predict(const MatrixD& x) const { return ridge.predict(factors(x)); }
};

inline HestModel fit_hest_model(const MatrixD& x, const MatrixD& y, const RegressionConfig& cfg) {
  if (x.rows() != y.rows()) throw ContractViolation("fit_hest_model: rows of X and Y differ");
  if (x.rows() < 2) throw ContractViolation("fit_hest_model: need at least 2 training rows");
  const std::size_t k = std::min({cfg.pca_factors, x.rows(), x.cols()});
  HestModel m;
  m.pca = numkit::pca_fit(x, k);
  m.factor_scale.assign(k, 1.0);
  if (cfg.normalize_factors) {
    for (std::size_t c = 0; c < k; ++c) {
      const double var = m.pca.explained_variance[c];
      m.factor_scale[c] = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
    }
  }
  m.ridge = numkit::ridge_fit(m.factors(x), y, cfg.ridge_alpha, cfg.fit_intercept);
  return m;
}

struct FoldScore {
  std::size_t fold_id = 0;
  std::vector<double> per_gene_r;
  std::vector<bool> excluded;      // measured gene constant in the test fold
  std::size_t excluded_count = 0;
  double mean_r = 0.0;
  bool skipped = false;
  std::string note;
};

/// Mean of per-gene Pearson r over genes whose measured values vary in the test fold.
inline FoldScore score_predictions(const MatrixD& predicted, const MatrixD& measured, std::size_t fold_id = 0) {
  FoldScore s;
  s.fold_id = fold_id;
  const std::size_t genes = measured.cols();
  s.per_gene_r.assign(genes, 0.0);
  s.excluded.assign(genes, false);
  std::vector<double> p(measured.rows()), t(measured.rows());
  double sum = 0.0;
  for (std::size_t g = 0; g < genes; ++g) {
    double lo = measured(0, g), hi = lo;
    for (std::size_t i = 0; i < measured.rows(); ++i) {
      p[i] = predicted(i, g);
      t[i] = measured(i, g);
      lo = std::min(lo, t[i]);
      hi = std::max(hi, t[i]);
    }
    if (lo == hi) {
      s.excluded[g] = true;
      ++s.excluded_count;
      continue;
    }
    s.per_gene_r[g] = numkit::pearson_checked(std::span<const double>(p), std::span<const double>(t)).r;
    sum += s.per_gene_r[g];
  }
  const std::size_t used = genes - s.excluded_count;
  if (used == 0) {
    s.skipped = true;
    s.note = "every gene is constant in the test fold";
    return s;
  }
  s.mean_r = sum / static_cast<double>(used);
  if (s.excluded_count) s.note = std::to_string(s.excluded_count) + " constant gene(s) excluded";
  return s;
}

struct FoldRun {
  FoldScore score;
  std::optional<HestModel> model;
};

inline FoldRun run_hest_fold(const MatrixD& x_train, const MatrixD& y_train, const MatrixD& x_test,
                             const MatrixD& y_test, const RegressionConfig& cfg, std::size_t fold_id = 0) {
  FoldRun run;
  if (x_test.rows() < 2 || x_train.rows() < 2) {
    run.score.fold_id = fold_id;
    run.score.skipped = true;
    run.score.note = "fold has " + std::to_string(x_train.rows()) + " train and " + std::to_string(x_test.rows()) +
                     " test spots; Pearson needs at least 2";
    return run;
  }
  run.model = fit_hest_model(x_train, y_train, cfg);
  run.score = score_predictions(run.model->predict(x_test), y_test, fold_id);
  return run;
}

struct HestTaskResult {
  std::string task_id;
  std::vector<FoldScore> folds;
  double mean = 0.0;
  double std = 0.0;
  std::vector<std::string> warnings;
};

/// Leave-one-patient-out over the bound dataset; mean and sample std of the fold means.
inline HestTaskResult run_hest_task(const embstore::BoundDataset& data, const RegressionTask& task) {
  const auto plan = splitkit::patient_kfold(data);
  HestTaskResult out;
  out.task_id = task.task_id;
  std::vector<double> means;
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const auto& fold = plan.folds[f];
    auto run = run_hest_fold(data.gather(fold.train), data.gather_targets(fold.train), data.gather(fold.test),
                             data.gather_targets(fold.test), task.cfg, f);
    if (!run.score.note.empty()) out.warnings.push_back("fold " + std::to_string(f) + ": " + run.score.note);
    if (!run.score.skipped) means.push_back(run.score.mean_r);
    out.folds.push_back(std::move(run.score));
  }
  if (means.empty()) throw ConfigError("hest task " + task.task_id + ": every fold was skipped");
  const auto agg = scorebook::aggregate_replicates(means);
  out.mean = agg.mean;
  out.std = agg.spread;
  return out;
}

/// `fold_id,gene,r` per scored gene, then `all,mean_r,<mean>` and `all,std_r,<std>`.
inline std::string export_fold_csv(const HestTaskResult& res, const std::vector<std::string>& genes) {
  std::string out = "fold_id,gene,r\n";
  char buf[40];
  for (const auto& f : res.folds) {
    if (f.skipped) continue;
    for (std::size_t g = 0; g < f.per_gene_r.size(); ++g) {
      if (f.excluded[g]) continue;
      std::snprintf(buf, sizeof buf, "%.17g", f.per_gene_r[g]);
      const std::string name = g < genes.size() ? genes[g] : embstore::detail::gene_column(g);
      out += std::to_string(f.fold_id) + ',' + embstore::csv_escape(name) + ',' + buf + '\n';
    }
  }
  std::snprintf(buf, sizeof buf, "%.17g", res.mean);
  out += std::string("all,mean_r,") + buf + '\n';
  std::snprintf(buf, sizeof buf, "%.17g", res.std);
  out += std::string("all,std_r,") + buf + '\n';
  return out;
}

}  // namespace pathbench::hestkit
