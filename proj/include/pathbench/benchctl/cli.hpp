#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pathbench/benchctl/executor.hpp"
#include "pathbench/benchctl/planner.hpp"
#include "pathbench/benchctl/registry.hpp"
#include "pathbench/benchctl/store.hpp"
#include "pathbench/benchctl/synth.hpp"
#include "pathbench/embstore/model_card.hpp"

#ifndef PATHBENCH_DATA_DIR
#define PATHBENCH_DATA_DIR "data"
#endif

namespace pathbench::benchctl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCellFailures = 1;
inline constexpr int kExitConfig = 2;

inline fs::path shipped_data_dir() { return PATHBENCH_DATA_DIR; }

// ---------------------------------------------------------------------------
// Reference fixture check

struct FixtureCheck {
  std::size_t averages_checked = 0;
  double max_average_gap = 0.0;
  std::vector<std::string> average_misses;  // "table/group/model: got x, expected y"
  std::size_t rows_checked = 0;
  std::vector<std::string> rank_mismatches;  // task ids whose computed marks differ
  std::size_t atlas_bold = 0;

  [[nodiscard]] bool averages_ok() const noexcept { return averages_checked > 0 && average_misses.empty(); }
};

/**
 * Recomputes group and overall averages of each reference table and compares
 * them with the printed averages (tolerance `tol`), then ranks the max-token
 * table and compares marks with the printed ones.
 */
inline FixtureCheck check_reference_fixture(const fs::path& dir, double tol = 0.06) {
  FixtureCheck out;
  const auto refs = scorebook::parse_reference_averages(embstore::read_text_file(dir / "reference_averages.csv"));
  for (const std::string table : {"max_token", "cls", "cls_mean"}) {
    const auto rows = scorebook::parse_reference_csv(embstore::read_text_file(dir / ("reference_" + table + ".csv")));
    const auto t = scorebook::table_from_reference(rows);
    const auto avg = scorebook::group_and_overall_averages(t);
    for (const auto& r : refs) {
      if (r.table != table) continue;
      const auto col = std::find(t.models.begin(), t.models.end(), r.model_id);
      if (col == t.models.end()) throw ParseError("reference averages: unknown model " + r.model_id);
      const auto c = static_cast<std::size_t>(col - t.models.begin());
      const auto& v = r.group == "molecular" ? avg.molecular : (r.group == "morphology" ? avg.morphology : avg.overall);
      ++out.averages_checked;
      const std::string where = table + "/" + r.group + "/" + r.model_id;
      if (!v[c]) {
        out.average_misses.push_back(where + ": no value");
        continue;
      }
      const double gap = std::abs(*v[c] - r.value);
      out.max_average_gap = std::max(out.max_average_gap, gap);
      if (gap > tol) {
        std::ostringstream s;
        s << where << ": got " << *v[c] << ", expected " << r.value;
        out.average_misses.push_back(s.str());
      }
    }
    if (table != "max_token") continue;
    const auto computed = scorebook::rank_rows(t);
    const auto printed = scorebook::reference_marks(rows, t);
    const auto atlas = std::find(t.models.begin(), t.models.end(), "atlas");
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      ++out.rows_checked;
      if (computed[i] != printed[i]) out.rank_mismatches.push_back(t.rows[i].task_id);
      if (atlas != t.models.end() &&
          computed[i][static_cast<std::size_t>(atlas - t.models.begin())] == scorebook::Mark::Bold)
        ++out.atlas_bold;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Command line

namespace detail {

inline std::vector<std::string> split_list(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& item : raw) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ','))
      if (!part.empty()) out.push_back(part);
  }
  return out;
}

inline fs::path resolve_config(const std::string& flag, const DataStore& store, const std::string& name) {
  if (!flag.empty()) return flag;
  if (fs::is_regular_file(store.root() / name)) return store.root() / name;
  return shipped_data_dir() / name;
}

struct Common {
  std::string root, registry, models_file;
};

struct Selection {
  std::vector<std::string> models, tasks, variants;
  std::uint64_t seed = 0;
};

inline void add_common(CLI::App* app, Common& c) {
  app->add_option("--root", c.root, "data store root (default: $PATHBENCH_ROOT)");
  app->add_option("--registry", c.registry, "task registry JSON (default: <root>/registry.json, then the shipped one)");
  app->add_option("--models-file", c.models_file, "model cards JSON (default: <root>/models.json, then the shipped one)");
}

inline void add_selection(CLI::App* app, Selection& s) {
  app->add_option("--models", s.models, "comma-separated model ids (default: every model card)")->delimiter(',');
  app->add_option("--tasks", s.tasks, "comma-separated task ids (default: every registry task)")->delimiter(',');
  app->add_option("--variants", s.variants, "cls, cls_mean or both (default: both)")->delimiter(',');
  app->add_option("--seed", s.seed, "master seed");
}

struct Context {
  DataStore store;
  Registry registry;
  std::vector<embstore::ModelCard> cards;
};

inline Context load_context(const Common& c) {
  auto store = DataStore::from_env(c.root);
  auto registry = load_registry(resolve_config(c.registry, store, "registry.json"));
  std::vector<embstore::ModelCard> cards;
  const auto cards_path = resolve_config(c.models_file, store, "models.json");
  if (fs::is_regular_file(cards_path)) cards = embstore::read_model_cards(cards_path);
  return {std::move(store), std::move(registry), std::move(cards)};
}

inline RunPlan make_plan(const Context& ctx, const Selection& s) {
  auto models = split_list(s.models);
  if (models.empty())
    for (const auto& c : ctx.cards) models.push_back(c.model_id);
  if (models.empty()) throw UsageError("no models: pass --models or provide models.json");
  std::vector<TokenVariant> variants;
  for (const auto& v : split_list(s.variants)) variants.push_back(parse_variant_slug(v));
  if (variants.empty()) variants = {TokenVariant::Cls, TokenVariant::ClsMean};
  return plan_runs(ctx.registry, ctx.store, models, variants, s.seed, split_list(s.tasks));
}

inline void print_plan(const RunPlan& plan, std::ostream& out) {
  out << "plan: " << plan.cells.size() << " cells (" << plan.task_ids.size() << " tasks x " << plan.models.size()
      << " models x " << plan.variants.size() << " variants), " << plan.runnable() << " runnable, "
      << plan.cells.size() - plan.runnable() << " cached\n";
}

}  // namespace detail

/// Entry point of the `pathbench` executable. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Frozen-embedding benchmark harness"};
  app.require_subcommand(1);
  detail::Common common;
  detail::Selection sel;

  auto* imp = app.add_subcommand("import", "validate a model's embeddings and a manifest, then copy them into the store");
  detail::add_common(imp, common);
  std::string imp_model, imp_dataset, imp_cls, imp_mean, imp_manifest;
  bool imp_slide = false;
  imp->add_option("--model", imp_model, "model id")->required();
  imp->add_option("--dataset", imp_dataset, "dataset id")->required();
  imp->add_option("--cls", imp_cls, "CLS token file")->required();
  imp->add_option("--mean", imp_mean, "mean patch token file");
  imp->add_option("--manifest", imp_manifest, "manifest CSV")->required();
  imp->add_flag("--slide-level", imp_slide, "manifest rows are instances grouped by slide");

  auto* plan_cmd = app.add_subcommand("plan", "list the cells a run would execute");
  detail::add_common(plan_cmd, common);
  detail::add_selection(plan_cmd, sel);

  auto* run_cmd = app.add_subcommand("run", "execute the plan and write reports");
  detail::add_common(run_cmd, common);
  detail::add_selection(run_cmd, sel);
  unsigned parallelism = 1;
  run_cmd->add_option("--parallelism", parallelism, "worker threads")->check(CLI::Range(1u, 1024u));

  auto* rep = app.add_subcommand("report", "render the last run's results");
  detail::add_common(rep, common);
  std::string rep_format = "markdown", rep_output;
  bool rep_no_std = false;
  rep->add_option("--format", rep_format, "markdown, csv or latex");
  rep->add_option("--output", rep_output, "output file (default: stdout)");
  rep->add_flag("--no-std", rep_no_std, "omit the spread next to each value");

  auto* syn = app.add_subcommand("synth", "generate synthetic datasets with analytic oracles");
  std::string syn_spec, syn_root, syn_model = "synthetic";
  syn->add_option("--spec", syn_spec, "suite or single-dataset spec JSON")->required();
  syn->add_option("--root", syn_root, "output root (default: $PATHBENCH_ROOT)");
  syn->add_option("--model", syn_model, "model id for a single-dataset spec");

  auto* fix = app.add_subcommand("fixture-check", "recompute the reference table averages and marks");
  std::string fix_dir = (shipped_data_dir() / "fixtures").string();
  fix->add_option("--fixtures", fix_dir, "fixture directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*imp) {
      const auto ctx_store = DataStore::from_env(common.root);
      auto manifest = std::make_shared<const embstore::DatasetManifest>(
          embstore::read_manifest(imp_manifest, imp_dataset, imp_slide));
      auto cls = embstore::read_embeddings(imp_cls, imp_model, imp_dataset);
      embstore::join_manifest(std::make_shared<const embstore::EmbeddingMatrix>(cls), manifest);
      if (!imp_mean.empty()) {
        auto mean = embstore::read_embeddings(imp_mean, imp_model, imp_dataset);
        embstore::join_manifest(std::make_shared<const embstore::EmbeddingMatrix>(embstore::concat_cls_mean(cls, mean)),
                                manifest);
      }
      fs::create_directories(ctx_store.embedding_dir(imp_model, imp_dataset));
      fs::create_directories(ctx_store.manifest_path(imp_dataset).parent_path());
      auto copy = [](const fs::path& from, const fs::path& to) {
        const auto bytes = embstore::read_file_bytes(from);
        embstore::write_file_bytes(to, bytes);
      };
      copy(imp_cls, ctx_store.cls_path(imp_model, imp_dataset));
      if (!imp_mean.empty()) copy(imp_mean, ctx_store.mean_path(imp_model, imp_dataset));
      copy(imp_manifest, ctx_store.manifest_path(imp_dataset));
      out << "imported " << imp_model << "/" << imp_dataset << ": " << cls.size() << " items, dim " << cls.dim()
          << ", " << manifest->records.size() << " manifest rows\n";
      return kExitOk;
    }

    if (*plan_cmd) {
      const auto ctx = detail::load_context(common);
      const auto plan = detail::make_plan(ctx, sel);
      detail::print_plan(plan, out);
      return kExitOk;
    }

    if (*run_cmd) {
      const auto ctx = detail::load_context(common);
      const auto plan = detail::make_plan(ctx, sel);
      detail::print_plan(plan, out);
      const auto start = std::chrono::steady_clock::now();
      const auto ex = execute(plan, ctx.registry, ctx.store, parallelism);
      write_reports(ctx.store, ctx.registry, plan, ex, ctx.cards);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      out << "run: " << ex.results.size() << " results, " << ex.failures.size() << " failures, " << ex.cache_hits
          << " cache hits, " << secs << " s\n";
      for (const auto& f : ex.failures)
        err << "failed " << f.task_id << " " << f.model_id << " " << variant_slug(f.variant) << ": " << f.message
            << "\n";
      out << "reports: " << ctx.store.reports_dir().string() << "\n";
      return ex.ok() ? kExitOk : kExitCellFailures;
    }

    if (*rep) {
      const auto format = scorebook::parse_report_format(rep_format);
      const auto ctx = detail::load_context(common);
      const auto results_path = ctx.store.reports_dir() / "results.json";
      if (!fs::is_regular_file(results_path)) throw ConfigError("no results at " + results_path.string() + "; run first");
      json doc;
      try {
        doc = json::parse(embstore::read_text_file(results_path));
      } catch (const json::parse_error& e) {
        throw ParseError(results_path.string() + ": " + e.what());
      }
      const auto table = report_table(ctx.registry, results_from_json(doc));
      const auto text = scorebook::render_report(table, format, {.show_std = !rep_no_std});
      if (rep_output.empty()) out << text;
      else embstore::write_file_atomic(rep_output, text);
      return kExitOk;
    }

    if (*syn) {
      const auto root = DataStore::from_env(syn_root).root();
      json spec;
      try {
        spec = json::parse(embstore::read_text_file(syn_spec));
      } catch (const json::parse_error& e) {
        throw ParseError(syn_spec + ": " + e.what());
      }
      if (spec.contains("datasets")) {
        const auto oracles = synth_generate_suite(spec, root);
        out << "synth: " << oracles.size() << " datasets written under " << root.string() << "\n";
      } else {
        SynthModel model;
        model.model_id = syn_model;
        const auto oracle = synth_generate(synth_spec_from_json(spec), root, model);
        out << oracle.dump(2) << "\n";
      }
      return kExitOk;
    }

    if (*fix) {
      const auto r = check_reference_fixture(fix_dir);
      out << (r.averages_ok() ? "PASS" : "FAIL") << " averages: " << r.averages_checked
          << " group/overall averages, max gap " << r.max_average_gap << " (tolerance 0.06)\n";
      for (const auto& m : r.average_misses) out << "  " << m << "\n";
      out << (r.rank_mismatches.empty() ? "PASS" : "FAIL") << " marks: " << r.rows_checked - r.rank_mismatches.size()
          << "/" << r.rows_checked << " rows match the printed bold/underline pattern\n";
      for (const auto& m : r.rank_mismatches) out << "  " << m << "\n";
      out << (r.atlas_bold == 11 ? "PASS" : "FAIL") << " atlas bold rows: " << r.atlas_bold << " (expected 11)\n";
      return r.averages_ok() ? kExitOk : kExitCellFailures;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace pathbench::benchctl
