#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <map>
#include <set>

#include "pathbench/benchctl.hpp"

using namespace pathbench;
using namespace pathbench::benchctl;

namespace {

const fs::path kData = PATHBENCH_DATA_DIR;
const std::string kCli = PATHBENCH_CLI_PATH;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("pathbench_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Registry shipped_registry() { return load_registry(kData / "registry.json"); }

json registry_doc() { return json::parse(embstore::read_text_file(kData / "registry.json")); }

std::string error_of(const json& doc) {
  try {
    parse_registry(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

// Small valid inputs for every shipped task; HEST datasets get `patients` patients.
void populate_store(const fs::path& root, const Registry& reg, const std::vector<std::string>& models,
                    std::size_t patients = 5) {
  std::set<std::string> done;
  for (const auto& t : reg.tasks) {
    if (!done.insert(t.dataset_id).second) continue;
    SynthSpec s;
    s.dataset_id = t.dataset_id;
    s.dim = 4;
    s.seed = numkit::fnv1a64(t.dataset_id);
    if (t.protocol == Protocol::RidgePca) {
      s.kind = SynthKind::LinearRegression;
      s.patients = patients;
      s.spots_per_patient = 3;
    } else if (t.protocol == Protocol::Abmil) {
      s.kind = SynthKind::MilBags;
      s.instances = 4;
      s.train = 6;
      s.val = 2;
      s.test = 4;
    } else {
      s.train = 12;
      s.val = 4;
      s.test = 8;
      s.patients = 6;
    }
    for (const auto& m : models) synth_generate(s, root, {m, 1.0, 0.1});
  }
}

std::vector<std::string> keys_of(const RunPlan& p) {
  std::vector<std::string> out;
  for (const auto& c : p.cells) out.push_back(c.cache_key);
  return out;
}

void generate_suite(const fs::path& root) {
  synth_generate_suite(json::parse(embstore::read_text_file(kData / "synthetic_suite.json")), root);
}

std::vector<std::string> suite_models(const fs::path& root) {
  std::vector<std::string> out;
  for (const auto& c : embstore::read_model_cards(root / "models.json")) out.push_back(c.model_id);
  return out;
}

const std::vector<TokenVariant> kBoth = {TokenVariant::Cls, TokenVariant::ClsMean};

ExecutionResult run_suite(const fs::path& root, unsigned parallelism, RunPlan* plan_out = nullptr) {
  const DataStore store(root);
  const auto reg = load_registry(root / "registry.json");
  const auto plan = plan_runs(reg, store, suite_models(root), kBoth);
  auto ex = execute(plan, reg, store, parallelism);
  write_reports(store, reg, plan, ex, embstore::read_model_cards(root / "models.json"));
  if (plan_out) *plan_out = plan;
  return ex;
}

std::map<std::string, std::string> report_files(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(root / "reports"))
    out[e.path().filename().string()] = embstore::read_text_file(e.path());
  return out;
}

void inject_nan(const fs::path& pemb) {
  auto bytes = embstore::read_file_bytes(pemb);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bytes.data() + embstore::kHeaderBytes, &nan, sizeof nan);
  embstore::write_file_bytes(pemb, bytes);
}

int cli(const std::string& args, const fs::path& root = {}) {
  std::string cmd = root.empty() ? "env -u PATHBENCH_ROOT " : "PATHBENCH_ROOT='" + root.string() + "' ";
  cmd += "'" + kCli + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

// ---------------------------------------------------------------------------
// Registry

TEST(Registry, ShippedRegistryHas21TasksInTwoGroups) {
  const auto reg = shipped_registry();
  ASSERT_EQ(reg.tasks.size(), 21u);
  std::size_t molecular = 0, morphology = 0;
  for (const auto& t : reg.tasks) (t.group == TaskGroup::Molecular ? molecular : morphology)++;
  EXPECT_EQ(molecular, 12u);
  EXPECT_EQ(morphology, 9u);
}

TEST(Registry, ProtocolAssignments) {
  const auto reg = shipped_registry();
  std::size_t hest = 0;
  for (const auto& t : reg.tasks) {
    if (t.task_id.rfind("hest-", 0) == 0) {
      ++hest;
      EXPECT_EQ(t.protocol, Protocol::RidgePca) << t.task_id;
      EXPECT_EQ(t.metric, Metric::PearsonMean) << t.task_id;
      EXPECT_EQ(t.split.strategy, SplitStrategy::PatientKFold) << t.task_id;
      EXPECT_EQ(t.group, TaskGroup::Molecular) << t.task_id;
    } else {
      EXPECT_EQ(t.metric, Metric::BalancedAccuracy) << t.task_id;
    }
  }
  EXPECT_EQ(hest, 10u);
  for (const auto* id : {"bach", "crc-100k", "mhist", "pcam"}) EXPECT_EQ(reg.find(id)->protocol, Protocol::EvaLp) << id;
  for (const auto* id : {"msi-crc", "msi-stad", "pancancer-til", "tcga-uniform-10x", "tcga-uniform-20x"})
    EXPECT_EQ(reg.find(id)->protocol, Protocol::InternalLr) << id;
  EXPECT_EQ(reg.find("msi-crc")->group, TaskGroup::Molecular);
  EXPECT_EQ(reg.find("msi-stad")->group, TaskGroup::Molecular);
  const auto* cam = reg.find("camelyon16");
  const auto* panda = reg.find("panda");
  EXPECT_EQ(cam->protocol, Protocol::Abmil);
  EXPECT_EQ(cam->integer("bag_cap"), 1000);
  EXPECT_EQ(panda->protocol, Protocol::Abmil);
  EXPECT_EQ(panda->integer("bag_cap"), 200);
  EXPECT_EQ(panda->split.strategy, SplitStrategy::StratifiedRandom);
  for (const auto* id : {"tcga-uniform-10x", "tcga-uniform-20x"}) {
    EXPECT_EQ(reg.find(id)->split.strategy, SplitStrategy::TcgaUniformFolds);
    EXPECT_EQ(reg.find(id)->replicate_policy, ReplicatePolicy::PerFold);
  }
}

TEST(Registry, ProtocolConstants) {
  const auto reg = shipped_registry();
  const auto grid = penalty_grid(*reg.find("msi-crc"));
  ASSERT_EQ(grid.size(), 15u);
  EXPECT_DOUBLE_EQ(grid.front(), 1e-8);
  EXPECT_NEAR(grid.back(), 1e4, 1e-8);
  for (std::size_t i = 1; i < grid.size(); ++i) EXPECT_NEAR(std::log10(grid[i] / grid[i - 1]), 12.0 / 14.0, 1e-12);
  EXPECT_EQ(reg.find("hest-coad")->integer("pca_factors"), 256);
  const auto* bach = reg.find("bach");
  EXPECT_EQ(bach->integer("batch_size"), 256);
  EXPECT_DOUBLE_EQ(bach->number("base_lr"), 3e-4);
  EXPECT_EQ(bach->integer("total_iters"), 12500);
  const auto* cam = reg.find("camelyon16");
  EXPECT_EQ(cam->integer("batch_size"), 32);
  EXPECT_DOUBLE_EQ(cam->number("base_lr"), 1e-3);
  EXPECT_EQ(cam->integer("total_iters"), 12500);
  for (const auto& t : reg.tasks) {
    if (t.replicate_policy == ReplicatePolicy::Seeds) {
      EXPECT_EQ(t.seed_count, 5u) << t.task_id;
    }
  }
}

TEST(Registry, RejectsAbmilScoredWithPearson) {
  auto doc = registry_doc();
  for (auto& t : doc["tasks"])
    if (t["task_id"] == "camelyon16") t["metric"] = "pearson-mean";
  const auto msg = error_of(doc);
  EXPECT_NE(msg.find(".metric"), std::string::npos) << msg;
  EXPECT_NE(msg.find("abmil"), std::string::npos) << msg;
}

TEST(Registry, RejectsDuplicateTaskId) {
  auto doc = registry_doc();
  doc["tasks"].push_back(doc["tasks"][0]);
  const auto msg = error_of(doc);
  EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;
}

TEST(Registry, ErrorsCarryFieldPaths) {
  auto doc = registry_doc();
  doc["tasks"][3]["split"]["strategy"] = "leave-one-out";
  EXPECT_NE(error_of(doc).find("tasks[3].split.strategy"), std::string::npos) << error_of(doc);

  doc = registry_doc();
  doc["tasks"][0]["hyperparameters"] = {{"learning_rate", 0.1}};
  EXPECT_NE(error_of(doc).find("tasks[0].hyperparameters.learning_rate"), std::string::npos) << error_of(doc);

  doc = registry_doc();
  doc["protocols"]["eva-lp"]["eval_every"] = 600;
  EXPECT_NE(error_of(doc).find("eval_every"), std::string::npos) << error_of(doc);

  doc = registry_doc();
  doc["tasks"][12]["protocol"] = "knn";
  EXPECT_NE(error_of(doc).find("tasks[12].protocol"), std::string::npos) << error_of(doc);
}

TEST(Registry, LoadErrorNamesTheFile) {
  TempDir dir("badreg");
  embstore::write_file_atomic(dir.path / "r.json", "{\"protocols\": {}, \"tasks\": [");
  try {
    load_registry(dir.path / "r.json");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("r.json"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Planning

TEST(Planning, FullCrossProductCounts) {
  TempDir dir("plan");
  const auto reg = shipped_registry();
  populate_store(dir.path, reg, {"m1", "m2"});
  const DataStore store(dir.path);
  const auto one = plan_runs(reg, store, {"m1"}, kBoth);
  // 11 seed tasks x 5 seeds, 2 TCGA tasks x 5 folds, 10 HEST tasks x 5 patients; two variants each
  std::size_t expected = 0;
  for (const auto& t : reg.tasks) {
    if (t.replicate_policy == ReplicatePolicy::Seeds) expected += t.seed_count;
    else if (t.split.strategy == SplitStrategy::TcgaUniformFolds) expected += t.split.folds;
    else expected += 5;
  }
  EXPECT_EQ(expected * 2, 210u);
  EXPECT_EQ(one.cells.size(), 210u);
  EXPECT_EQ(one.runnable(), 210u);
  const auto two = plan_runs(reg, store, {"m1", "m2"}, kBoth);
  EXPECT_EQ(two.cells.size(), 420u);

  std::set<std::tuple<std::string, std::string, TokenVariant, std::uint32_t>> unique;
  for (const auto& c : two.cells) unique.emplace(c.task_id, c.model_id, c.variant, c.replicate);
  EXPECT_EQ(unique.size(), two.cells.size());
  const auto keys = keys_of(two);
  EXPECT_EQ(std::set<std::string>(keys.begin(), keys.end()).size(), two.cells.size());
}

TEST(Planning, IdenticalInputsShareCacheEntries) {
  TempDir dir("plan_shared");
  const auto reg = shipped_registry();
  SynthSpec s;
  s.dataset_id = "bach";
  s.train = 12;
  s.test = 6;
  synth_generate(s, dir.path, {"m1", 1.0, 0.0});
  const DataStore store(dir.path);
  fs::create_directories(store.embedding_dir("m2", "bach"));
  fs::copy_file(store.cls_path("m1", "bach"), store.cls_path("m2", "bach"));
  fs::copy_file(store.mean_path("m1", "bach"), store.mean_path("m2", "bach"));
  const auto plan = plan_runs(reg, store, {"m1", "m2"}, {TokenVariant::Cls}, 0, {"bach"});
  ASSERT_EQ(plan.cells.size(), 10u);
  for (std::size_t r = 0; r < 5; ++r) EXPECT_EQ(plan.cells[r].cache_key, plan.cells[5 + r].cache_key);
}

TEST(Planning, HestReplicatesFollowPatientCount) {
  TempDir dir("plan_hest");
  const auto reg = shipped_registry();
  populate_store(dir.path, reg, {"m1"}, 3);
  const auto plan = plan_runs(reg, DataStore(dir.path), {"m1"}, {TokenVariant::Cls}, 0, {"hest-prad"});
  ASSERT_EQ(plan.cells.size(), 3u);
  for (const auto& c : plan.cells) EXPECT_EQ(c.replicate_count, 3u);
}

TEST(Planning, MissingInputsAreAllListed) {
  TempDir dir("plan_gaps");
  const auto reg = shipped_registry();
  populate_store(dir.path, reg, {"m1"});
  const DataStore store(dir.path);
  fs::remove(store.mean_path("m1", "bach"));
  fs::remove(store.cls_path("m1", "pcam"));
  fs::remove(store.manifest_path("mhist"));
  try {
    plan_runs(reg, store, {"m1"}, kBoth);
    FAIL() << "expected a planning error";
  } catch (const PlanningError& e) {
    const auto& gaps = e.gaps();
    ASSERT_EQ(gaps.size(), 3u);
    const std::string all = e.what();
    EXPECT_NE(all.find(store.mean_path("m1", "bach").string()), std::string::npos);
    EXPECT_NE(all.find(store.cls_path("m1", "pcam").string()), std::string::npos);
    EXPECT_NE(all.find(store.manifest_path("mhist").string()), std::string::npos);
  }
  EXPECT_THROW(plan_runs(reg, store, {"m1", "nobody"}, kBoth), PlanningError);
}

TEST(Planning, CacheKeysAreStable) {
  TempDir dir("plan_stable");
  const auto reg = shipped_registry();
  populate_store(dir.path, reg, {"m1"});
  const DataStore store(dir.path);
  EXPECT_EQ(keys_of(plan_runs(reg, store, {"m1"}, kBoth)), keys_of(plan_runs(reg, store, {"m1"}, kBoth)));
  // Rewriting identical bytes keeps every key.
  const auto before = keys_of(plan_runs(reg, store, {"m1"}, kBoth));
  const auto bytes = embstore::read_file_bytes(store.cls_path("m1", "bach"));
  embstore::write_file_bytes(store.cls_path("m1", "bach"), bytes);
  EXPECT_EQ(keys_of(plan_runs(reg, store, {"m1"}, kBoth)), before);
}

TEST(Planning, CacheKeysTrackEveryInput) {
  TempDir dir("plan_sensitive");
  const auto reg = shipped_registry();
  populate_store(dir.path, reg, {"m1"});
  const DataStore store(dir.path);
  const auto base = plan_runs(reg, store, {"m1"}, kBoth);

  auto changed = [&](const RunPlan& p) {
    std::set<std::pair<std::string, TokenVariant>> out;
    for (std::size_t i = 0; i < p.cells.size(); ++i)
      if (p.cells[i].cache_key != base.cells[i].cache_key) out.insert({p.cells[i].task_id, p.cells[i].variant});
    return out;
  };

  // One byte of the mean token file: only bach's CLS+Mean cells.
  auto bytes = embstore::read_file_bytes(store.mean_path("m1", "bach"));
  bytes.back() ^= 1;
  embstore::write_file_bytes(store.mean_path("m1", "bach"), bytes);
  EXPECT_EQ(changed(plan_runs(reg, store, {"m1"}, kBoth)),
            (std::set<std::pair<std::string, TokenVariant>>{{"bach", TokenVariant::ClsMean}}));
  bytes.back() ^= 1;
  embstore::write_file_bytes(store.mean_path("m1", "bach"), bytes);
  EXPECT_TRUE(changed(plan_runs(reg, store, {"m1"}, kBoth)).empty());

  // The manifest: both variants of every task on that dataset.
  auto text = embstore::read_text_file(store.manifest_path("pcam"));
  embstore::write_file_atomic(store.manifest_path("pcam"), text + "\n");
  EXPECT_EQ(changed(plan_runs(reg, store, {"m1"}, kBoth)),
            (std::set<std::pair<std::string, TokenVariant>>{{"pcam", TokenVariant::Cls}, {"pcam", TokenVariant::ClsMean}}));
  embstore::write_file_atomic(store.manifest_path("pcam"), text);

  // A hyperparameter of one task.
  auto doc = registry_doc();
  for (auto& t : doc["tasks"])
    if (t["task_id"] == "mhist") t["hyperparameters"] = {{"total_iters", 6250}};
  EXPECT_EQ(changed(plan_runs(parse_registry(doc), store, {"m1"}, kBoth)),
            (std::set<std::pair<std::string, TokenVariant>>{{"mhist", TokenVariant::Cls}, {"mhist", TokenVariant::ClsMean}}));

  // The master seed: every cell.
  EXPECT_EQ(changed(plan_runs(reg, store, {"m1"}, kBoth, 7)).size(), 42u);
}

TEST(Planning, WarmCacheLeavesNothingToRun) {
  TempDir dir("plan_warm");
  const auto reg = shipped_registry();
  populate_store(dir.path, reg, {"m1"});
  const DataStore store(dir.path);
  const auto cold = plan_runs(reg, store, {"m1"}, kBoth);
  fs::create_directories(dir.path / "cache");
  for (const auto& c : cold.cells)
    embstore::write_file_atomic(store.cache_path(c.cache_key), R"({"status":"ok","value":0.5,"note":""})");
  const auto warm = plan_runs(reg, store, {"m1"}, kBoth);
  EXPECT_EQ(warm.cells.size(), 210u);
  EXPECT_EQ(warm.runnable(), 0u);
}

// ---------------------------------------------------------------------------
// Execution

TEST(Execution, ParallelismDoesNotChangeReports) {
  TempDir a("exec_p1"), b("exec_p8");
  generate_suite(a.path);
  generate_suite(b.path);
  const auto ex1 = run_suite(a.path, 1);
  const auto ex8 = run_suite(b.path, 8);
  ASSERT_TRUE(ex1.ok());
  ASSERT_TRUE(ex8.ok());
  const auto r1 = report_files(a.path), r8 = report_files(b.path);
  EXPECT_EQ(r1.size(), 5u);
  EXPECT_EQ(r1, r8);
}

TEST(Execution, RerunHitsCacheAndRewritesIdenticalReports) {
  TempDir dir("exec_rerun");
  generate_suite(dir.path);
  RunPlan plan;
  const auto first = run_suite(dir.path, 1, &plan);
  ASSERT_TRUE(first.ok());
  EXPECT_EQ(first.cache_hits, 0u);
  const auto reports = report_files(dir.path);

  const auto reg = load_registry(dir.path / "registry.json");
  EXPECT_EQ(plan_runs(reg, DataStore(dir.path), suite_models(dir.path), kBoth).runnable(), 0u);
  fs::remove_all(dir.path / "reports");
  const auto second = run_suite(dir.path, 3);
  EXPECT_EQ(second.cache_hits, plan.cells.size());
  EXPECT_EQ(report_files(dir.path), reports);
}

TEST(Execution, CorruptEmbeddingFailsOnlyItsCells) {
  TempDir dir("exec_nan");
  generate_suite(dir.path);
  const DataStore store(dir.path);
  inject_nan(store.cls_path("synth-blurred", "syn-blobs"));
  const auto ex = run_suite(dir.path, 2);
  ASSERT_EQ(ex.failures.size(), 2u);
  for (const auto& f : ex.failures) {
    EXPECT_EQ(f.model_id, "synth-blurred");
    EXPECT_EQ(f.task_id, "syn-blobs");
    EXPECT_NE(f.message.find("non-finite"), std::string::npos) << f.message;
  }
  EXPECT_EQ(ex.results.size(), 22u);
  // Failed cells are not cached.
  const auto reg = load_registry(dir.path / "registry.json");
  EXPECT_EQ(plan_runs(reg, store, suite_models(dir.path), kBoth).runnable(), 6u);
  const auto md = embstore::read_text_file(dir.path / "reports" / "report.md");
  EXPECT_NE(md.find("n/a"), std::string::npos);
}

TEST(Execution, ResultsDocumentRoundTrips) {
  TempDir dir("exec_json");
  generate_suite(dir.path);
  RunPlan plan;
  const auto ex = run_suite(dir.path, 1, &plan);
  const auto doc = json::parse(embstore::read_text_file(dir.path / "reports" / "results.json"));
  const auto back = results_from_json(doc);
  ASSERT_EQ(back.results.size(), ex.results.size());
  for (std::size_t i = 0; i < ex.results.size(); ++i) {
    EXPECT_EQ(back.results[i].replicate_values, ex.results[i].replicate_values);
    EXPECT_EQ(back.results[i].mean, ex.results[i].mean);
  }
  EXPECT_EQ(back.tasks, plan.task_ids);
}

// ---------------------------------------------------------------------------
// Synthetic generation

TEST(Synth, TwoClassBayesAccuracyIsPhi) {
  EXPECT_NEAR(gaussian_bayes_accuracy(2, 4.0), 0.9999683287581669, 1e-15);
  SynthSpec s;
  s.dataset_id = "g";
  s.separation = 4.0;
  s.noise = 1.0;
  s.train = 10;
  s.test = 10;
  const auto out = synth_build(s);
  EXPECT_NEAR(out.oracle["bayes_balanced_accuracy"]["cls"].get<double>(), 0.99997, 5e-6);
  EXPECT_NEAR(out.oracle["bayes_balanced_accuracy"]["cls_mean"].get<double>(), phi(4.0 * std::sqrt(2.0)), 1e-15);
}

TEST(Synth, MultiClassBayesAccuracyMatchesMonteCarlo) {
  numkit::CounterRng rng(99);
  for (std::size_t k : {3u, 5u}) {
    const double snr = 1.7;
    const int n = 200000;
    int correct = 0;
    std::vector<double> x(k);
    for (int i = 0; i < n; ++i) {
      const auto y = static_cast<std::size_t>(i) % k;
      for (std::size_t c = 0; c < k; ++c) x[c] = rng.normal() + (c == y ? snr : 0.0);
      correct += static_cast<std::size_t>(std::max_element(x.begin(), x.end()) - x.begin()) == y;
    }
    EXPECT_NEAR(gaussian_bayes_accuracy(k, snr), static_cast<double>(correct) / n, 4e-3) << k;
  }
}

TEST(Synth, GeneratedClustersReachTheOracle) {
  SynthSpec s;
  s.dataset_id = "g3";
  s.classes = 3;
  s.dim = 6;
  s.separation = 2.0;
  s.train = 30000;
  s.test = 0;
  s.val = 0;
  s.seed = 5;
  const auto out = synth_build(s);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < out.cls.size(); ++i) {
    const auto row = out.cls.items.row(i);
    const auto pred = static_cast<int>(std::max_element(row.begin(), row.begin() + 3) - row.begin());
    correct += pred == out.manifest.records[i].label;
  }
  EXPECT_NEAR(static_cast<double>(correct) / out.cls.size(),
              out.oracle["bayes_balanced_accuracy"]["cls"].get<double>(), 0.01);
}

TEST(Synth, NoiselessRegressionOracleIsOne) {
  SynthSpec s;
  s.kind = SynthKind::LinearRegression;
  s.dataset_id = "r";
  s.noise = 0.0;
  s.patients = 3;
  s.spots_per_patient = 4;
  const auto out = synth_build(s);
  for (const auto& r : out.oracle["population_pearson"]["cls"]) EXPECT_DOUBLE_EQ(r.get<double>(), 1.0);
  ASSERT_EQ(out.oracle["true_weights"].size(), s.dim);
  // Targets equal x W exactly.
  const auto& w = out.oracle["true_weights"];
  for (std::size_t i = 0; i < out.manifest.records.size(); ++i) {
    for (std::size_t g = 0; g < embstore::kRegressionTargets; g += 7) {
      double pred = 0.0;
      for (std::size_t j = 0; j < s.dim; ++j) pred += out.cls.items(i, j) * w[j][g].get<double>();
      EXPECT_NEAR(out.manifest.records[i].targets[g], pred, 1e-5);
    }
  }
}

TEST(Synth, RegressionOracleMatchesSampleCorrelation) {
  SynthSpec s;
  s.kind = SynthKind::LinearRegression;
  s.dataset_id = "r2";
  s.dim = 8;
  s.noise = 0.7;
  s.patients = 40;
  s.spots_per_patient = 500;
  const auto out = synth_build(s, {"m", 1.0, 0.5});
  const auto& w = out.oracle["true_weights"];
  const std::size_t g = 3;
  std::vector<double> pred, truth;
  for (std::size_t i = 0; i < out.manifest.records.size(); ++i) {
    double p = 0.0;
    for (std::size_t j = 0; j < s.dim; ++j) p += out.cls.items(i, j) * w[j][g].get<double>();
    pred.push_back(p);
    truth.push_back(out.manifest.records[i].targets[g]);
  }
  EXPECT_NEAR(numkit::pearson(pred, truth), out.oracle["population_pearson"]["cls"][g].get<double>(), 0.01);
}

TEST(Synth, MilPositiveRateIsClosedForm) {
  EXPECT_DOUBLE_EQ(mil_positive_rate(0.3, 20), 1.0 - std::pow(0.7, 20));
  SynthSpec s;
  s.kind = SynthKind::MilBags;
  s.dataset_id = "b";
  s.dim = 2;
  s.instances = 20;
  s.witness_rate = 0.3;
  s.train = 4000;
  s.test = 0;
  const auto out = synth_build(s);
  EXPECT_DOUBLE_EQ(out.oracle["bag_positive_rate"].get<double>(), 1.0 - std::pow(0.7, 20));
  EXPECT_NEAR(out.oracle["observed_positive_fraction"].get<double>(), 1.0 - std::pow(0.7, 20), 2e-3);
}

TEST(Synth, MilThresholdOracleMatchesMonteCarlo) {
  numkit::CounterRng rng(3);
  const double r = 0.06, s = 3.0;
  const std::size_t n = 12;
  long tp = 0, pos = 0, tn = 0, neg = 0;
  for (int b = 0; b < 100000; ++b) {
    bool label = false, pred = false;
    for (std::size_t i = 0; i < n; ++i) {
      const bool w = rng.uniform() < r;
      label = label || w;
      pred = pred || (w ? s : 0.0) + rng.normal() > s / 2;
    }
    (label ? pos : neg)++;
    if (label && pred) ++tp;
    if (!label && !pred) ++tn;
  }
  const double mc = 0.5 * (static_cast<double>(tp) / pos + static_cast<double>(tn) / neg);
  EXPECT_NEAR(mil_threshold_accuracy(r, n, s / 2), mc, 5e-3);
}

TEST(Synth, SharedManifestAndDeterministicFiles) {
  TempDir a("synth_a"), b("synth_b");
  generate_suite(a.path);
  generate_suite(b.path);
  for (const auto& e : fs::recursive_directory_iterator(a.path)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a.path);
    EXPECT_EQ(embstore::read_file_bytes(e.path()), embstore::read_file_bytes(b.path / rel)) << rel;
  }
  SynthSpec s;
  s.dataset_id = "g";
  s.train = 20;
  s.test = 10;
  const auto x = synth_build(s, {"one", 1.0, 0.0}), y = synth_build(s, {"two", 0.5, 0.0});
  EXPECT_EQ(embstore::format_manifest(x.manifest), embstore::format_manifest(y.manifest));
  EXPECT_NE(x.cls.items.values()[0], y.cls.items.values()[0]);
}

TEST(Synth, InvalidSpecsAreRejected) {
  EXPECT_THROW(synth_spec_from_json({{"kind", "spirals"}, {"dataset_id", "x"}}), ConfigError);
  EXPECT_THROW(synth_spec_from_json({{"kind", "mil-bags"}, {"dataset_id", "x"}, {"witness_rate", 1.5}, {"train", 3}}),
               ConfigError);
  EXPECT_THROW(synth_spec_from_json({{"kind", "gaussian-classification"}, {"dataset_id", "x"}, {"noise", 0.0},
                                     {"train", 4}}),
               ConfigError);
  EXPECT_THROW(synth_spec_from_json({{"kind", "linear-regression"}, {"dataset_id", "x"}, {"genes", 20},
                                     {"patients", 3}, {"spots_per_patient", 3}}),
               ConfigError);
}

// ---------------------------------------------------------------------------
// Command line

TEST(Cli, ExitCodes) {
  TempDir dir("cli");
  EXPECT_EQ(cli(""), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("fixture-check"), 0);
  EXPECT_EQ(cli("synth --spec '" + (kData / "synthetic_suite.json").string() + "'", dir.path), 0);
  EXPECT_EQ(cli("plan", dir.path), 0);
  EXPECT_EQ(cli("plan --variants cls,avg", dir.path), 2);
  EXPECT_EQ(cli("plan --tasks no-such-task", dir.path), 2);
  EXPECT_EQ(cli("report", dir.path), 2);  // nothing run yet
  EXPECT_EQ(cli("run --tasks syn-triad,syn-expression --parallelism 2", dir.path), 0);
  EXPECT_EQ(cli("report --format latex", dir.path), 0);
  EXPECT_EQ(cli("report --format html", dir.path), 2);
  EXPECT_EQ(cli("plan --registry '" + (kData / "registry.json").string() + "'", dir.path), 2);  // missing inputs

  inject_nan(DataStore(dir.path).cls_path("synth-sharp", "syn-blobs"));
  EXPECT_EQ(cli("run --tasks syn-blobs", dir.path), 1);
  EXPECT_EQ(cli("plan"), 2);  // no data root
}

TEST(Cli, ImportValidatesAndCopies) {
  TempDir src("cli_src"), dst("cli_dst");
  SynthSpec s;
  s.dataset_id = "bach";
  s.train = 8;
  s.test = 4;
  synth_generate(s, src.path, {"m1", 1.0, 0.0});
  const DataStore from(src.path), to(dst.path);
  const std::string args = "import --model m1 --dataset bach --cls '" + from.cls_path("m1", "bach").string() +
                           "' --mean '" + from.mean_path("m1", "bach").string() + "' --manifest '" +
                           from.manifest_path("bach").string() + "'";
  EXPECT_EQ(cli(args, dst.path), 0);
  EXPECT_EQ(embstore::read_file_bytes(to.cls_path("m1", "bach")), embstore::read_file_bytes(from.cls_path("m1", "bach")));
  EXPECT_TRUE(fs::is_regular_file(to.manifest_path("bach")));

  // A manifest that does not cover the embedding rows is refused.
  auto text = embstore::read_text_file(from.manifest_path("bach"));
  text.erase(text.rfind('\n', text.size() - 2) + 1);
  embstore::write_file_atomic(src.path / "short.csv", text);
  TempDir dst2("cli_dst2");
  EXPECT_EQ(cli("import --model m1 --dataset bach --cls '" + from.cls_path("m1", "bach").string() +
                    "' --manifest '" + (src.path / "short.csv").string() + "'",
                dst2.path),
            2);
  EXPECT_FALSE(fs::exists(DataStore(dst2.path).cls_path("m1", "bach")));
}

TEST(Cli, FixtureCheckSummary) {
  const auto r = check_reference_fixture(kData / "fixtures");
  EXPECT_TRUE(r.averages_ok());
  EXPECT_EQ(r.averages_checked, 63u);
  EXPECT_EQ(r.rows_checked, 21u);
  EXPECT_EQ(r.atlas_bold, 11u);
}
