#include <gtest/gtest.h>

#include <cmath>

#include "pathbench/hestkit.hpp"

using namespace pathbench;
using namespace pathbench::hestkit;
using embstore::kRegressionTargets;

namespace {

// Spots with embeddings ~ N(0, I) and targets = X B + noise * N(0, 1) (B fixed across patients).
embstore::BoundDataset spots(const std::vector<std::size_t>& per_patient, std::size_t dim, double signal,
                             double noise, std::uint64_t seed) {
  numkit::CounterRng rng(seed);
  MatrixD b(dim, kRegressionTargets);
  for (double& v : b.values()) v = rng.normal() / std::sqrt(static_cast<double>(dim));
  embstore::EmbeddingMatrix emb;
  emb.model_id = "m";
  emb.dataset_id = "hest";
  embstore::DatasetManifest man;
  man.dataset_id = "hest";
  man.task_kind = embstore::TaskKind::Regression;
  std::size_t total = 0;
  for (auto n : per_patient) total += n;
  emb.items = numkit::Matrix(total, dim);
  std::size_t row = 0;
  for (std::size_t p = 0; p < per_patient.size(); ++p) {
    for (std::size_t i = 0; i < per_patient[p]; ++i, ++row) {
      std::vector<double> x(dim);
      for (std::size_t j = 0; j < dim; ++j) {
        x[j] = rng.normal();
        emb.items(row, j) = static_cast<float>(x[j]);
      }
      embstore::ManifestRecord r;
      r.item_id = "p" + std::to_string(p) + "_" + std::to_string(i);
      r.patient_id = "P" + std::to_string(p);
      r.slide_id = r.patient_id;
      r.targets.resize(kRegressionTargets);
      for (std::size_t g = 0; g < kRegressionTargets; ++g) {
        double t = 0.0;
        for (std::size_t j = 0; j < dim; ++j) t += static_cast<double>(static_cast<float>(x[j])) * b(j, g);
        r.targets[g] = signal * t + noise * rng.normal();
      }
      emb.item_ids.push_back(r.item_id);
      man.records.push_back(std::move(r));
    }
  }
  return embstore::join_manifest(std::move(emb), std::move(man));
}

RegressionTask task() {
  RegressionTask t;
  t.task_id = "toy";
  for (std::size_t g = 0; g < kRegressionTargets; ++g) t.genes.push_back("G" + std::to_string(g));
  return t;
}

}  // namespace

TEST(HestTask, LinearLawIsRecovered) {
  auto data = spots({200, 200, 200}, 32, 1.0, 1e-4, 1);
  auto res = run_hest_task(data, task());
  ASSERT_EQ(res.folds.size(), 3u);
  for (const auto& f : res.folds) EXPECT_GE(f.mean_r, 0.99);
  EXPECT_LE(res.std, 0.01);
  auto again = run_hest_task(data, task());
  for (std::size_t f = 0; f < 3; ++f) EXPECT_EQ(again.folds[f].per_gene_r, res.folds[f].per_gene_r);
}

TEST(HestTask, NoiseTargetsScoreNearZero) {
  auto data = spots({500, 500}, 16, 0.0, 1.0, 2);
  auto res = run_hest_task(data, task());
  for (const auto& f : res.folds) EXPECT_LE(std::abs(f.mean_r), 0.1);
}

TEST(HestTask, FoldCountEqualsPatients) {
  auto data = spots({20, 30, 25, 15, 10}, 8, 1.0, 0.5, 3);
  EXPECT_EQ(run_hest_task(data, task()).folds.size(), 5u);
}

TEST(HestFold, ConstantGeneExcludedAndMeanConsistent) {
  auto data = spots({100, 100}, 8, 1.0, 0.3, 4);
  std::vector<std::size_t> tr(100), te(100);
  for (std::size_t i = 0; i < 100; ++i) tr[i] = i, te[i] = 100 + i;
  MatrixD yte = data.gather_targets(te);
  for (std::size_t i = 0; i < yte.rows(); ++i) yte(i, 7) = 2.5;
  auto run = run_hest_fold(data.gather(tr), data.gather_targets(tr), data.gather(te), yte, RegressionConfig{});
  EXPECT_TRUE(run.score.excluded[7]);
  EXPECT_EQ(run.score.excluded_count, 1u);
  EXPECT_FALSE(run.score.note.empty());
  double sum = 0.0;
  for (std::size_t g = 0; g < kRegressionTargets; ++g)
    if (!run.score.excluded[g]) sum += run.score.per_gene_r[g];
  EXPECT_NEAR(run.score.mean_r, sum / 49.0, 1e-12);
}

TEST(HestFold, TestTargetsDoNotLeakIntoFit) {
  auto data = spots({80, 60}, 12, 1.0, 0.5, 5);
  std::vector<std::size_t> tr(80), te(60);
  for (std::size_t i = 0; i < 80; ++i) tr[i] = i;
  for (std::size_t i = 0; i < 60; ++i) te[i] = 80 + i;
  auto xtr = data.gather(tr), ytr = data.gather_targets(tr), xte = data.gather(te);
  auto yte = data.gather_targets(te);
  auto a = run_hest_fold(xtr, ytr, xte, yte, RegressionConfig{});
  for (double& v : yte.values()) v = v * -3.0 + 11.0;
  auto b = run_hest_fold(xtr, ytr, xte, yte, RegressionConfig{});
  EXPECT_EQ(a.model->pca.components, b.model->pca.components);
  EXPECT_EQ(a.model->ridge.weights, b.model->ridge.weights);
  EXPECT_EQ(a.model->ridge.intercept, b.model->ridge.intercept);
}

TEST(HestFold, AffineRescalingOfMeasuredTargets) {
  auto data = spots({80, 60}, 12, 1.0, 0.5, 6);
  std::vector<std::size_t> tr(80), te(60);
  for (std::size_t i = 0; i < 80; ++i) tr[i] = i;
  for (std::size_t i = 0; i < 60; ++i) te[i] = 80 + i;
  auto model = fit_hest_model(data.gather(tr), data.gather_targets(tr), RegressionConfig{});
  auto pred = model.predict(data.gather(te));
  auto y = data.gather_targets(te);
  auto base = score_predictions(pred, y);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t g = 0; g < y.cols(); ++g) y(i, g) = (0.5 + static_cast<double>(g)) * y(i, g) - 4.0;
  auto scaled = score_predictions(pred, y);
  for (std::size_t g = 0; g < kRegressionTargets; ++g) EXPECT_NEAR(scaled.per_gene_r[g], base.per_gene_r[g], 1e-9);
}

TEST(HestFold, TinyTestFoldSkipped) {
  auto data = spots({50, 40, 1}, 6, 1.0, 0.1, 7);
  auto res = run_hest_task(data, task());
  ASSERT_EQ(res.folds.size(), 3u);
  EXPECT_TRUE(res.folds[2].skipped);
  EXPECT_FALSE(res.folds[0].skipped);
  EXPECT_FALSE(res.warnings.empty());
  EXPECT_NEAR(res.mean, 0.5 * (res.folds[0].mean_r + res.folds[1].mean_r), 1e-15);

  auto lonely = spots({50, 1}, 6, 1.0, 0.1, 7);
  EXPECT_THROW(run_hest_task(lonely, task()), ConfigError);
}

TEST(HestFold, FewerSpotsThanFactors) {
  auto data = spots({10, 10, 10}, 300, 1.0, 0.1, 8);
  auto res = run_hest_task(data, task());
  for (const auto& f : res.folds) EXPECT_TRUE(std::isfinite(f.mean_r));
}

TEST(HestExport, CsvRowsAndSummary) {
  auto data = spots({30, 30}, 6, 1.0, 0.2, 9);
  auto t = task();
  auto res = run_hest_task(data, t);
  auto rows = embstore::parse_csv(export_fold_csv(res, t.genes));
  EXPECT_EQ(rows[0], (std::vector<std::string>{"fold_id", "gene", "r"}));
  EXPECT_EQ(rows.size(), 1 + 2 * kRegressionTargets + 2);
  EXPECT_EQ(rows[1][1], "G0");
  EXPECT_EQ(rows.back()[1], "std_r");
}
