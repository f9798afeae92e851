#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathbench/embstore/binary_io.hpp"
#include "pathbench/errors.hpp"
#include "pathbench/scorebook/report.hpp"
#include "pathbench/splitkit/splits.hpp"

namespace pathbench::benchctl {

using nlohmann::json;
using scorebook::Metric;
using scorebook::TaskGroup;
using splitkit::SplitStrategy;

enum class Protocol { EvaLp, InternalLr, Abmil, RidgePca };

inline std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::EvaLp: return "eva-lp";
    case Protocol::InternalLr: return "internal-lr";
    case Protocol::Abmil: return "abmil";
    case Protocol::RidgePca: return "ridge-pca";
  }
  return "?";
}

inline std::optional<Protocol> parse_protocol(std::string_view s) {
  if (s == "eva-lp") return Protocol::EvaLp;
  if (s == "internal-lr") return Protocol::InternalLr;
  if (s == "abmil") return Protocol::Abmil;
  if (s == "ridge-pca") return Protocol::RidgePca;
  return std::nullopt;
}

inline Metric metric_for(Protocol p) {
  return p == Protocol::RidgePca ? Metric::PearsonMean : Metric::BalancedAccuracy;
}

enum class ReplicatePolicy { Seeds, PerFold };

struct SplitSpec {
  SplitStrategy strategy = SplitStrategy::Predefined;
  std::array<double, 3> fractions{0.8, 0.1, 0.1};  // train, val, test
  std::size_t per_class = 100;
  std::size_t folds = 5;
};

struct TaskSpec {
  std::string task_id;
  std::string display_name;
  TaskGroup group = TaskGroup::Molecular;
  Protocol protocol = Protocol::EvaLp;
  Metric metric = Metric::BalancedAccuracy;
  std::string dataset_id;
  SplitSpec split;
  ReplicatePolicy replicate_policy = ReplicatePolicy::Seeds;
  std::size_t seed_count = 5;
  json hyper = json::object();  // protocol defaults merged with task overrides

  [[nodiscard]] bool slide_level() const { return protocol == Protocol::Abmil; }
  [[nodiscard]] double number(const std::string& key) const { return hyper.at(key).get<double>(); }
  [[nodiscard]] std::int64_t integer(const std::string& key) const { return hyper.at(key).get<std::int64_t>(); }
};

struct Registry {
  json protocols = json::object();
  std::vector<TaskSpec> tasks;

  [[nodiscard]] const TaskSpec* find(std::string_view id) const {
    for (const auto& t : tasks)
      if (t.task_id == id) return &t;
    return nullptr;
  }
};

/// Canonical form used in cache keys and results; keys are sorted.
inline json to_json(const TaskSpec& t) {
  json split = {{"strategy", splitkit::to_string(t.split.strategy)}};
  if (t.split.strategy == SplitStrategy::StratifiedRandom)
    split["fractions"] = {t.split.fractions[0], t.split.fractions[1], t.split.fractions[2]};
  if (t.split.strategy == SplitStrategy::TcgaUniformFolds) {
    split["per_class"] = t.split.per_class;
    split["folds"] = t.split.folds;
  }
  json rep = {{"policy", t.replicate_policy == ReplicatePolicy::Seeds ? "seeds" : "per-fold"}};
  if (t.replicate_policy == ReplicatePolicy::Seeds) rep["count"] = t.seed_count;
  return {{"task_id", t.task_id},
          {"display_name", t.display_name},
          {"group", scorebook::to_string(t.group)},
          {"protocol", to_string(t.protocol)},
          {"metric", scorebook::to_string(t.metric)},
          {"dataset_id", t.dataset_id},
          {"split", split},
          {"replicates", rep},
          {"hyperparameters", t.hyper}};
}

namespace detail {

/// Error messages carry the JSON path of the offending field.
[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw ConfigError("registry " + path + ": " + what);
}

inline const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) fail(path + "." + key, "missing");
  return obj.at(key);
}

inline std::string require_string(const json& obj, const std::string& key, const std::string& path) {
  const auto& v = require(obj, key, path);
  if (!v.is_string() || v.get<std::string>().empty()) fail(path + "." + key, "expected a non-empty string");
  return v.get<std::string>();
}

inline std::size_t require_count(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<std::int64_t>() <= 0) fail(path, "expected a positive integer");
  return v.get<std::size_t>();
}

inline void check_hyper(const TaskSpec& t, const std::string& path) {
  auto positive_int = [&](const char* key) {
    if (!t.hyper.contains(key)) fail(path + "." + key, "missing");
    require_count(t.hyper.at(key), path + "." + key);
  };
  auto positive_num = [&](const char* key) {
    if (!t.hyper.contains(key)) fail(path + "." + key, "missing");
    const auto& v = t.hyper.at(key);
    if (!v.is_number() || !(v.get<double>() > 0)) fail(path + "." + key, "expected a positive number");
  };
  switch (t.protocol) {
    case Protocol::EvaLp:
    case Protocol::Abmil:
      positive_int("batch_size");
      positive_int("total_iters");
      positive_int("eval_every");
      positive_num("base_lr");
      if (t.integer("total_iters") % t.integer("eval_every") != 0)
        fail(path + ".eval_every", "must divide total_iters");
      if (t.protocol == Protocol::Abmil) {
        positive_int("bag_cap");
        positive_int("hidden_dim");
        if (!t.hyper.contains("weight_decay") || !t.hyper.at("weight_decay").is_number())
          fail(path + ".weight_decay", "expected a number");
      }
      break;
    case Protocol::InternalLr: {
      positive_num("penalty_min");
      positive_num("penalty_max");
      positive_int("penalty_count");
      positive_int("cv_folds");
      if (!(t.number("penalty_max") > t.number("penalty_min"))) fail(path + ".penalty_max", "must exceed penalty_min");
      if (t.integer("penalty_count") != 15) fail(path + ".penalty_count", "the grid holds exactly 15 values");
      break;
    }
    case Protocol::RidgePca:
      positive_int("pca_factors");
      if (!t.hyper.contains("ridge_alpha") || !t.hyper.at("ridge_alpha").is_number() ||
          t.number("ridge_alpha") < 0)
        fail(path + ".ridge_alpha", "expected a non-negative number");
      break;
  }
}

inline TaskSpec parse_task(const json& j, const json& protocols, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  TaskSpec t;
  t.task_id = require_string(j, "task_id", path);
  t.display_name = j.contains("display_name") ? require_string(j, "display_name", path) : t.task_id;
  t.dataset_id = require_string(j, "dataset_id", path);

  const auto group = require_string(j, "group", path);
  if (group == "molecular") t.group = TaskGroup::Molecular;
  else if (group == "morphology") t.group = TaskGroup::Morphology;
  else fail(path + ".group", "unknown group '" + group + "' (expected molecular or morphology)");

  const auto proto = require_string(j, "protocol", path);
  const auto p = parse_protocol(proto);
  if (!p) fail(path + ".protocol", "unknown protocol '" + proto + "'");
  t.protocol = *p;

  const auto metric = require_string(j, "metric", path);
  if (metric == "balanced-accuracy") t.metric = Metric::BalancedAccuracy;
  else if (metric == "pearson-mean") t.metric = Metric::PearsonMean;
  else fail(path + ".metric", "unknown metric '" + metric + "'");
  if (t.metric != metric_for(t.protocol))
    fail(path + ".metric", "protocol " + proto + " cannot be scored with " + metric);

  const auto& split = require(j, "split", path);
  const auto strategy = require_string(split, "strategy", path + ".split");
  try {
    t.split.strategy = splitkit::parse_strategy(strategy);
  } catch (const ConfigError&) {
    fail(path + ".split.strategy", "unknown strategy '" + strategy + "'");
  }
  if (t.split.strategy == SplitStrategy::StratifiedRandom) {
    const auto& f = require(split, "fractions", path + ".split");
    if (!f.is_array() || f.size() != 3) fail(path + ".split.fractions", "expected [train, val, test]");
    double sum = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      if (!f[i].is_number() || f[i].get<double>() < 0)
        fail(path + ".split.fractions[" + std::to_string(i) + "]", "expected a non-negative number");
      t.split.fractions[i] = f[i].get<double>();
      sum += t.split.fractions[i];
    }
    if (std::abs(sum - 1.0) > 1e-9) fail(path + ".split.fractions", "must sum to 1");
  }
  if (t.split.strategy == SplitStrategy::TcgaUniformFolds) {
    t.split.per_class = require_count(require(split, "per_class", path + ".split"), path + ".split.per_class");
    t.split.folds = require_count(require(split, "folds", path + ".split"), path + ".split.folds");
    if (t.split.folds < 2) fail(path + ".split.folds", "need at least 2 folds");
  }
  if (t.protocol == Protocol::RidgePca && t.split.strategy != SplitStrategy::PatientKFold)
    fail(path + ".split.strategy", "ridge-pca tasks use patient-kfold");
  if (t.protocol != Protocol::RidgePca && t.split.strategy == SplitStrategy::PatientKFold)
    fail(path + ".split.strategy", "patient-kfold is reserved for ridge-pca tasks");
  if (t.protocol == Protocol::Abmil && t.split.strategy == SplitStrategy::TcgaUniformFolds)
    fail(path + ".split.strategy", "abmil tasks split slides (predefined or stratified-random)");

  const bool folded =
      t.split.strategy == SplitStrategy::PatientKFold || t.split.strategy == SplitStrategy::TcgaUniformFolds;
  const auto& rep = require(j, "replicates", path);
  const auto policy = require_string(rep, "policy", path + ".replicates");
  if (policy == "seeds") {
    if (folded) fail(path + ".replicates.policy", "fold-based splits use per-fold replicates");
    t.replicate_policy = ReplicatePolicy::Seeds;
    t.seed_count = require_count(require(rep, "count", path + ".replicates"), path + ".replicates.count");
  } else if (policy == "per-fold") {
    if (!folded) fail(path + ".replicates.policy", "per-fold replicates need a fold-based split");
    t.replicate_policy = ReplicatePolicy::PerFold;
  } else {
    fail(path + ".replicates.policy", "unknown policy '" + policy + "' (expected seeds or per-fold)");
  }

  if (!protocols.contains(proto)) fail("protocols." + proto, "missing defaults for a protocol used by " + path);
  t.hyper = protocols.at(proto);
  if (j.contains("hyperparameters")) {
    const auto& over = j.at("hyperparameters");
    if (!over.is_object()) fail(path + ".hyperparameters", "expected an object");
    for (const auto& [key, value] : over.items()) {
      if (!t.hyper.contains(key)) fail(path + ".hyperparameters." + key, "unknown hyperparameter for " + proto);
      t.hyper[key] = value;
    }
  }
  check_hyper(t, path + ".hyperparameters");
  return t;
}

}  // namespace detail

inline Registry parse_registry(const json& doc) {
  if (!doc.is_object()) detail::fail("$", "expected an object");
  Registry r;
  r.protocols = detail::require(doc, "protocols", "$");
  if (!r.protocols.is_object()) detail::fail("protocols", "expected an object");
  for (const auto& [name, _] : r.protocols.items())
    if (!parse_protocol(name)) detail::fail("protocols." + name, "unknown protocol");
  const auto& tasks = detail::require(doc, "tasks", "$");
  if (!tasks.is_array() || tasks.empty()) detail::fail("tasks", "expected a non-empty array");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const std::string path = "tasks[" + std::to_string(i) + "]";
    auto t = detail::parse_task(tasks[i], r.protocols, path);
    if (!seen.insert(t.task_id).second) detail::fail(path + ".task_id", "duplicate task_id '" + t.task_id + "'");
    r.tasks.push_back(std::move(t));
  }
  return r;
}

inline Registry load_registry(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(embstore::read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return parse_registry(doc);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// 10^(log10(min) + k * (log10(max) - log10(min)) / (count - 1)).
inline std::vector<double> penalty_grid(const TaskSpec& t) {
  const double lo = std::log10(t.number("penalty_min")), hi = std::log10(t.number("penalty_max"));
  const auto n = static_cast<std::size_t>(t.integer("penalty_count"));
  std::vector<double> grid(n);
  for (std::size_t k = 0; k < n; ++k)
    grid[k] = std::pow(10.0, lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1));
  return grid;
}

}  // namespace pathbench::benchctl
