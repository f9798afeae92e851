#pragma once

#include <atomic>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pathbench/benchctl/planner.hpp"
#include "pathbench/embstore/model_card.hpp"
#include "pathbench/hestkit/regression.hpp"
#include "pathbench/milkit/abmil.hpp"
#include "pathbench/milkit/bags.hpp"
#include "pathbench/probekit/logreg.hpp"
#include "pathbench/probekit/probe.hpp"
#include "pathbench/scorebook/report.hpp"

namespace pathbench::benchctl {

enum class CellStatus { Ok, Skipped, Failed };

inline std::string_view to_string(CellStatus s) {
  switch (s) {
    case CellStatus::Ok: return "ok";
    case CellStatus::Skipped: return "skipped";
    case CellStatus::Failed: return "failed";
  }
  return "?";
}

struct CellOutcome {
  CellStatus status = CellStatus::Failed;
  double value = 0.0;
  std::string note;
  bool from_cache = false;
};

namespace detail {

inline std::vector<std::size_t> merged(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::vector<std::size_t> out(a);
  out.insert(out.end(), b.begin(), b.end());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<int> labels_of(const embstore::BoundDataset& d, const std::vector<std::size_t>& idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = d.record(idx[i]).label;
  return out;
}

/// Train/val/test indices (manifest indices, or bag indices for slide tasks) of one cell.
inline splitkit::Fold cell_fold(const Cell& c, const TaskSpec& t, const embstore::BoundDataset& d,
                                std::span<const int> unit_labels, std::uint64_t master_seed) {
  switch (t.split.strategy) {
    case SplitStrategy::Predefined: return splitkit::predefined_split(d).folds.at(0);
    case SplitStrategy::StratifiedRandom:
      return splitkit::stratified_random_split(unit_labels, t.split.fractions, c.seeds.split_seed).folds.at(0);
    case SplitStrategy::PatientKFold: {
      const auto plan = splitkit::patient_kfold(d);
      if (plan.folds.size() != c.replicate_count)
        throw ConfigError("patient count changed since planning (" + std::to_string(plan.folds.size()) + " folds)");
      return plan.folds.at(c.replicate);
    }
    case SplitStrategy::TcgaUniformFolds: {
      // All folds of one task come from the replicate-0 split seed.
      const auto seed = splitkit::derive_seeds(master_seed, t.task_id, 0, c.replicate_count).split_seed;
      return splitkit::tcga_uniform_folds(d, t.split.per_class, t.split.folds, seed).folds.at(c.replicate);
    }
  }
  throw ContractViolation("cell_fold: unknown strategy");
}

inline double run_eva_lp(const Cell& c, const TaskSpec& t, const embstore::BoundDataset& d, std::uint64_t master) {
  const auto labels = d.labels();
  const auto f = cell_fold(c, t, d, labels, master);
  const auto xtr = d.gather(f.train), xv = d.gather(f.val), xte = d.gather(f.test);
  const auto ytr = labels_of(d, f.train), yv = labels_of(d, f.val), yte = labels_of(d, f.test);
  if (yte.empty()) throw ConfigError("task " + t.task_id + ": empty test split");
  probekit::ProbeConfig cfg;
  cfg.batch_size = static_cast<std::size_t>(t.integer("batch_size"));
  cfg.total_iters = t.integer("total_iters");
  cfg.base_lr = t.number("base_lr");
  cfg.eval_every = t.integer("eval_every");
  std::optional<probekit::LabeledRows> val;
  if (!yv.empty()) val = probekit::LabeledRows{&xv, yv};
  const auto res = probekit::train_linear_probe(xtr, ytr, d.num_classes(), val, cfg, c.seeds);
  return scorebook::balanced_accuracy(probekit::predict(res.model, xte).classes, yte);
}

inline double run_internal_lr(const Cell& c, const TaskSpec& t, const embstore::BoundDataset& d, std::uint64_t master) {
  const auto labels = d.labels();
  const auto f = cell_fold(c, t, d, labels, master);
  // Predefined val items join the CV pool.
  const auto pool = merged(f.train, f.val);
  const auto xtr = d.gather(pool), xte = d.gather(f.test);
  const auto ytr = labels_of(d, pool), yte = labels_of(d, f.test);
  if (yte.empty()) throw ConfigError("task " + t.task_id + ": empty test split");
  probekit::LogRegConfig cfg;
  cfg.grid = penalty_grid(t);
  cfg.cv_folds = static_cast<std::size_t>(t.integer("cv_folds"));
  cfg.balanced_weights = t.hyper.value("class_weight", "balanced") == "balanced";
  cfg.scoring = t.hyper.value("cv_scoring", "balanced-accuracy") == "accuracy" ? probekit::CvScoring::Accuracy
                                                                               : probekit::CvScoring::BalancedAccuracy;
  const auto res = probekit::train_logreg_cv(xtr, ytr, d.num_classes(), cfg, c.seeds);
  return scorebook::balanced_accuracy(probekit::predict(res.model, xte).classes, yte);
}

inline double run_abmil(const Cell& c, const TaskSpec& t, const embstore::BoundDataset& d, std::uint64_t master) {
  const auto bags = milkit::build_bags(d, static_cast<std::size_t>(t.integer("bag_cap")), c.seeds.split_seed);
  const auto bag_y = milkit::bag_labels(bags);
  splitkit::Fold f;
  if (t.split.strategy == SplitStrategy::Predefined) {
    for (std::size_t i = 0; i < bags.size(); ++i) {
      switch (bags[i].split) {
        case embstore::SplitTag::Train: f.train.push_back(i); break;
        case embstore::SplitTag::Val: f.val.push_back(i); break;
        case embstore::SplitTag::Test: f.test.push_back(i); break;
        case embstore::SplitTag::None:
          throw ConfigError("task " + t.task_id + ": slide '" + bags[i].slide_id + "' has no split tag");
      }
    }
  } else {
    f = cell_fold(c, t, d, bag_y, master);
  }
  auto pick = [&](const std::vector<std::size_t>& idx) {
    std::vector<milkit::Bag> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(bags[i]);
    return out;
  };
  const auto train = pick(f.train), val = pick(f.val), test = pick(f.test);
  if (test.empty()) throw ConfigError("task " + t.task_id + ": no test slides");
  milkit::MILConfig cfg;
  cfg.batch_slides = static_cast<std::size_t>(t.integer("batch_size"));
  cfg.total_iters = t.integer("total_iters");
  cfg.base_lr = t.number("base_lr");
  cfg.eval_every = t.integer("eval_every");
  cfg.weight_decay = t.number("weight_decay");
  cfg.hidden_dim = static_cast<std::size_t>(t.integer("hidden_dim"));
  std::size_t k = 0;
  for (int y : bag_y) k = std::max(k, static_cast<std::size_t>(y) + 1);
  const auto res = milkit::train_abmil(train, val.empty() ? nullptr : &val, k, cfg, c.seeds);
  return scorebook::balanced_accuracy(milkit::evaluate_slides(res.head, test), milkit::bag_labels(test));
}

inline CellOutcome run_ridge_pca(const Cell& c, const TaskSpec& t, const embstore::BoundDataset& d,
                                 std::uint64_t master) {
  const auto f = cell_fold(c, t, d, {}, master);
  hestkit::RegressionConfig cfg;
  cfg.pca_factors = static_cast<std::size_t>(t.integer("pca_factors"));
  cfg.ridge_alpha = t.number("ridge_alpha");
  cfg.normalize_factors = t.hyper.value("normalize_factors", true);
  const auto run = hestkit::run_hest_fold(d.gather(f.train), d.gather_targets(f.train), d.gather(f.test),
                                          d.gather_targets(f.test), cfg, c.replicate);
  if (run.score.skipped) return {CellStatus::Skipped, 0.0, run.score.note, false};
  return {CellStatus::Ok, run.score.mean_r, run.score.note, false};
}

}  // namespace detail

/// Runs one cell; every error is caught and reported as a failed outcome.
inline CellOutcome compute_cell(const Cell& c, const TaskSpec& t, DatasetCache& data, std::uint64_t master_seed) {
  try {
    const auto d = data.get(c.model_id, t.dataset_id, c.variant, t.slide_level());
    switch (t.protocol) {
      case Protocol::EvaLp: return {CellStatus::Ok, detail::run_eva_lp(c, t, *d, master_seed), {}, false};
      case Protocol::InternalLr: return {CellStatus::Ok, detail::run_internal_lr(c, t, *d, master_seed), {}, false};
      case Protocol::Abmil: return {CellStatus::Ok, detail::run_abmil(c, t, *d, master_seed), {}, false};
      case Protocol::RidgePca: return detail::run_ridge_pca(c, t, *d, master_seed);
    }
    throw ContractViolation("unknown protocol");
  } catch (const std::exception& e) {
    return {CellStatus::Failed, 0.0, e.what(), false};
  }
}

struct CellFailure {
  std::string task_id, model_id;
  TokenVariant variant = TokenVariant::Cls;
  std::string message;
};

struct ExecutionResult {
  std::vector<CellOutcome> outcomes;  // parallel to plan.cells
  std::vector<scorebook::RunResult> results;
  std::vector<CellFailure> failures;
  std::size_t cache_hits = 0;

  [[nodiscard]] bool ok() const noexcept { return failures.empty(); }
};

namespace detail {

inline std::optional<CellOutcome> read_cached(const fs::path& p) {
  try {
    const auto j = json::parse(embstore::read_text_file(p));
    const auto status = j.at("status").get<std::string>();
    CellOutcome o;
    o.status = status == "ok" ? CellStatus::Ok : CellStatus::Skipped;
    if (status != "ok" && status != "skipped") return std::nullopt;
    o.value = j.at("value").get<double>();
    o.note = j.value("note", "");
    o.from_cache = true;
    return o;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline void write_cached(const fs::path& p, const CellOutcome& o) {
  const json j = {{"status", to_string(o.status)}, {"value", o.value}, {"note", o.note}};
  embstore::write_file_atomic(p, j.dump() + "\n");
}

}  // namespace detail

/**
 * Runs every cell of the plan on `parallelism` worker threads. Each cell is
 * computed independently from its own seeds, and outcomes are stored by cell
 * index, so the result does not depend on scheduling. Failed cells are
 * recorded (and never cached); the remaining cells still run.
 */
inline ExecutionResult execute(const RunPlan& plan, const Registry& registry, const DataStore& store,
                               unsigned parallelism = 1) {
  ExecutionResult out;
  out.outcomes.resize(plan.cells.size());
  fs::create_directories(store.root() / "cache");
  DatasetCache data(store);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < plan.cells.size(); i = next++) {
      const auto& c = plan.cells[i];
      const auto path = store.cache_path(c.cache_key);
      if (auto hit = detail::read_cached(path)) {
        out.outcomes[i] = *hit;
        continue;
      }
      const auto* task = registry.find(c.task_id);
      out.outcomes[i] = task ? compute_cell(c, *task, data, plan.master_seed)
                             : CellOutcome{CellStatus::Failed, 0.0, "task not in registry", false};
      if (out.outcomes[i].status != CellStatus::Failed) {
        try {
          detail::write_cached(path, out.outcomes[i]);
        } catch (const std::exception&) {
        }
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(parallelism, static_cast<unsigned>(plan.cells.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  // Group replicates of the same (task, model, variant); cells are contiguous in plan order.
  for (std::size_t i = 0; i < plan.cells.size();) {
    const auto& first = plan.cells[i];
    std::size_t j = i;
    std::vector<double> values;
    std::string failure;
    while (j < plan.cells.size() && plan.cells[j].task_id == first.task_id &&
           plan.cells[j].model_id == first.model_id && plan.cells[j].variant == first.variant) {
      const auto& o = out.outcomes[j];
      out.cache_hits += o.from_cache;
      if (o.status == CellStatus::Failed && failure.empty())
        failure = "replicate " + std::to_string(plan.cells[j].replicate) + ": " + o.note;
      if (o.status == CellStatus::Ok) values.push_back(o.value);
      ++j;
    }
    if (failure.empty() && values.empty()) failure = "every replicate was skipped";
    if (!failure.empty()) {
      out.failures.push_back({first.task_id, first.model_id, first.variant, failure});
    } else {
      const auto* task = registry.find(first.task_id);
      out.results.push_back(scorebook::RunResult::from_values(first.task_id, first.model_id, first.variant,
                                                              std::move(values), task->metric));
    }
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline json results_to_json(const RunPlan& plan, const ExecutionResult& ex) {
  json results = json::array(), failures = json::array(), variants = json::array();
  for (auto v : plan.variants) variants.push_back(variant_slug(v));
  for (const auto& r : ex.results) {
    results.push_back({{"task_id", r.task_id},
                       {"model_id", r.model_id},
                       {"variant", variant_slug(r.variant)},
                       {"metric", scorebook::to_string(r.metric)},
                       {"replicate_values", r.replicate_values},
                       {"mean", r.mean},
                       {"std", r.std}});
  }
  for (const auto& f : ex.failures)
    failures.push_back(
        {{"task_id", f.task_id}, {"model_id", f.model_id}, {"variant", variant_slug(f.variant)}, {"error", f.message}});
  return {{"master_seed", plan.master_seed}, {"tasks", plan.task_ids}, {"models", plan.models},
          {"variants", variants},            {"results", results},     {"failures", failures}};
}

struct StoredResults {
  std::vector<std::string> tasks, models;
  std::vector<scorebook::RunResult> results;
};

inline StoredResults results_from_json(const json& j) {
  StoredResults s;
  try {
    s.tasks = j.at("tasks").get<std::vector<std::string>>();
    s.models = j.at("models").get<std::vector<std::string>>();
    for (const auto& r : j.at("results")) {
      scorebook::RunResult rr;
      rr.task_id = r.at("task_id").get<std::string>();
      rr.model_id = r.at("model_id").get<std::string>();
      rr.variant = parse_variant_slug(r.at("variant").get<std::string>());
      rr.metric = scorebook::parse_metric(r.at("metric").get<std::string>());
      rr.replicate_values = r.at("replicate_values").get<std::vector<double>>();
      rr.mean = r.at("mean").get<double>();
      rr.std = r.at("std").get<double>();
      s.results.push_back(std::move(rr));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("results document: ") + e.what());
  }
  return s;
}

inline scorebook::ReportTable report_table(const Registry& registry, const StoredResults& s) {
  std::vector<std::pair<std::string, std::optional<TaskGroup>>> tasks;
  std::optional<double> alpha;
  for (const auto& id : s.tasks) {
    const auto* t = registry.find(id);
    tasks.emplace_back(id, t ? std::optional<TaskGroup>(t->group) : std::nullopt);
    if (t && t->protocol == Protocol::RidgePca && !alpha) alpha = t->number("ridge_alpha");
  }
  auto table = scorebook::assemble_table(s.results, s.models, tasks);
  table.ridge_alpha = alpha;
  return table;
}

inline std::string report_extension(scorebook::ReportFormat f) {
  switch (f) {
    case scorebook::ReportFormat::Markdown: return "md";
    case scorebook::ReportFormat::Csv: return "csv";
    case scorebook::ReportFormat::Latex: return "tex";
  }
  return "txt";
}

/// Writes results.json, report.{md,csv,tex} and, when every model has a card, scatter.csv.
inline void write_reports(const DataStore& store, const Registry& registry, const RunPlan& plan,
                          const ExecutionResult& ex, const std::vector<embstore::ModelCard>& cards) {
  const auto dir = store.reports_dir();
  fs::create_directories(dir);
  const auto doc = results_to_json(plan, ex);
  embstore::write_file_atomic(dir / "results.json", doc.dump(2) + "\n");
  const auto table = report_table(registry, results_from_json(doc));
  for (auto f : {scorebook::ReportFormat::Markdown, scorebook::ReportFormat::Csv, scorebook::ReportFormat::Latex})
    embstore::write_file_atomic(dir / ("report." + report_extension(f)),
                                scorebook::render_report(table, f, {.show_std = true}));
  const bool carded = std::all_of(plan.models.begin(), plan.models.end(), [&](const auto& m) {
    return std::any_of(cards.begin(), cards.end(), [&](const auto& c) { return c.model_id == m; });
  });
  if (carded) embstore::write_file_atomic(dir / "scatter.csv", scorebook::render_scatter_csv(table, cards));
}

}  // namespace pathbench::benchctl
