#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pathbench/benchctl/registry.hpp"
#include "pathbench/benchctl/store.hpp"
#include "pathbench/splitkit/seeds.hpp"

namespace pathbench::benchctl {

/// One (task, model, variant, replicate) unit of work.
struct Cell {
  std::string task_id;
  std::string model_id;
  TokenVariant variant = TokenVariant::Cls;
  std::uint32_t replicate = 0;
  std::uint32_t replicate_count = 1;
  splitkit::SeedBundle seeds;
  std::string cache_key;
  bool cached = false;
};

struct RunPlan {
  std::uint64_t master_seed = 0;
  std::vector<std::string> task_ids;
  std::vector<std::string> models;
  std::vector<TokenVariant> variants;
  std::vector<Cell> cells;

  [[nodiscard]] std::size_t runnable() const {
    std::size_t n = 0;
    for (const auto& c : cells) n += !c.cached;
    return n;
  }
};

/// Planning failed; `gaps` lists every missing or unreadable input.
class PlanningError : public ConfigError {
 public:
  explicit PlanningError(std::vector<std::string> gaps)
      : ConfigError(format(gaps)), gaps_(std::move(gaps)) {}
  [[nodiscard]] const std::vector<std::string>& gaps() const noexcept { return gaps_; }

 private:
  static std::string format(const std::vector<std::string>& gaps) {
    std::string s = "planning failed, " + std::to_string(gaps.size()) + " missing input(s):";
    for (const auto& g : gaps) s += "\n  " + g;
    return s;
  }
  std::vector<std::string> gaps_;
};

/// Content hash of everything a cell's result depends on.
inline std::string cell_cache_key(const std::vector<std::string>& embedding_digests, const std::string& manifest_digest,
                                  const TaskSpec& task, TokenVariant variant, const splitkit::SeedBundle& seeds,
                                  std::uint32_t replicate, std::uint32_t replicate_count) {
  const json doc = {{"format", 1},
                    {"embeddings", embedding_digests},
                    {"manifest", manifest_digest},
                    {"task", to_json(task)},
                    {"variant", variant_slug(variant)},
                    {"seeds",
                     {seeds.master_seed, seeds.split_seed, seeds.shuffle_seed, seeds.init_seed}},
                    {"replicate", replicate},
                    {"replicate_count", replicate_count}};
  return sha256_hex(doc.dump());
}

inline std::size_t count_patients(const embstore::DatasetManifest& m) {
  std::set<std::string> p;
  for (const auto& r : m.records) p.insert(r.patient_id);
  return p.size();
}

/**
 * Full cross product tasks x models x variants x replicates, in that nesting
 * order. Seed tasks get `count` replicates; fold tasks one per fold (patient
 * k-fold: one per patient in the manifest). Cells whose cache entry exists
 * are marked cached.
 */
inline RunPlan plan_runs(const Registry& registry, const DataStore& store, const std::vector<std::string>& models,
                         const std::vector<TokenVariant>& variants, std::uint64_t master_seed = 0,
                         const std::vector<std::string>& task_filter = {}) {
  if (models.empty()) throw ConfigError("plan: no models selected");
  if (variants.empty()) throw ConfigError("plan: no token variants selected");
  std::vector<const TaskSpec*> tasks;
  if (task_filter.empty()) {
    for (const auto& t : registry.tasks) tasks.push_back(&t);
  } else {
    for (const auto& id : task_filter) {
      const auto* t = registry.find(id);
      if (t == nullptr) throw ConfigError("plan: unknown task '" + id + "'");
      tasks.push_back(t);
    }
  }

  std::vector<std::string> gaps;
  std::map<std::string, std::string> digests;  // path -> sha256
  auto digest = [&](const fs::path& p) -> const std::string* {
    auto it = digests.find(p.string());
    if (it != digests.end()) return &it->second;
    if (!fs::is_regular_file(p)) {
      gaps.push_back("missing file " + p.string());
      return nullptr;
    }
    return &digests.emplace(p.string(), file_digest(p)).first->second;
  };

  RunPlan plan;
  plan.master_seed = master_seed;
  plan.models = models;
  plan.variants = variants;
  std::map<std::string, std::size_t> patient_counts;
  for (const auto* task : tasks) {
    plan.task_ids.push_back(task->task_id);
    const auto* man = digest(store.manifest_path(task->dataset_id));
    std::uint32_t count = static_cast<std::uint32_t>(task->seed_count);
    if (task->replicate_policy == ReplicatePolicy::PerFold) {
      if (task->split.strategy == SplitStrategy::TcgaUniformFolds) {
        count = static_cast<std::uint32_t>(task->split.folds);
      } else if (man != nullptr) {
        auto it = patient_counts.find(task->dataset_id);
        if (it == patient_counts.end()) {
          try {
            const auto m = embstore::read_manifest(store.manifest_path(task->dataset_id), task->dataset_id);
            it = patient_counts.emplace(task->dataset_id, count_patients(m)).first;
          } catch (const Error& e) {
            gaps.push_back("unreadable manifest for task " + task->task_id + ": " + e.what());
            continue;
          }
        }
        count = static_cast<std::uint32_t>(it->second);
        if (count < 2) {
          gaps.push_back("task " + task->task_id + ": patient k-fold needs at least 2 patients, manifest has " +
                         std::to_string(count));
          continue;
        }
      }
    }
    for (const auto& model : models) {
      for (auto v : variants) {
        std::vector<std::string> emb;
        bool complete = man != nullptr;
        for (const auto& p : store.embedding_inputs(model, task->dataset_id, v)) {
          const auto* d = digest(p);
          if (d == nullptr) complete = false;
          else emb.push_back(*d);
        }
        if (!complete) continue;
        for (std::uint32_t r = 0; r < count; ++r) {
          Cell c{task->task_id, model, v, r, count, splitkit::derive_seeds(master_seed, task->task_id, r, count), {}, false};
          c.cache_key = cell_cache_key(emb, *man, *task, v, c.seeds, r, count);
          c.cached = fs::is_regular_file(store.cache_path(c.cache_key));
          plan.cells.push_back(std::move(c));
        }
      }
    }
  }
  if (!gaps.empty()) {
    std::set<std::string> seen;
    std::vector<std::string> unique;
    for (auto& g : gaps)
      if (seen.insert(g).second) unique.push_back(std::move(g));
    throw PlanningError(std::move(unique));
  }
  return plan;
}

}  // namespace pathbench::benchctl
