#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pathbench/embstore/bound_dataset.hpp"
#include "pathbench/embstore/csv.hpp"
#include "pathbench/errors.hpp"
#include "pathbench/numkit/rng.hpp"

namespace pathbench::splitkit {

using embstore::DatasetManifest;
using embstore::SplitTag;

enum class SplitStrategy { Predefined, StratifiedRandom, PatientKFold, TcgaUniformFolds };

inline std::string_view to_string(SplitStrategy s) {
  switch (s) {
    case SplitStrategy::Predefined: return "predefined";
    case SplitStrategy::StratifiedRandom: return "stratified-random";
    case SplitStrategy::PatientKFold: return "patient-kfold";
    case SplitStrategy::TcgaUniformFolds: return "tcga-uniform-folds";
  }
  return "?";
}

inline SplitStrategy parse_strategy(std::string_view s) {
  if (s == "predefined") return SplitStrategy::Predefined;
  if (s == "stratified-random") return SplitStrategy::StratifiedRandom;
  if (s == "patient-kfold") return SplitStrategy::PatientKFold;
  if (s == "tcga-uniform-folds") return SplitStrategy::TcgaUniformFolds;
  throw ConfigError("unknown split strategy '" + std::string(s) + "'");
}

/// Manifest indices of each part; lists are sorted ascending.
struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct SplitPlan {
  SplitStrategy strategy = SplitStrategy::Predefined;
  std::vector<Fold> folds;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline void sort_parts(Fold& f) {
  std::sort(f.train.begin(), f.train.end());
  std::sort(f.val.begin(), f.val.end());
  std::sort(f.test.begin(), f.test.end());
}

inline std::map<int, std::vector<std::size_t>> by_class(std::span<const int> labels) {
  std::map<int, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < labels.size(); ++i) out[labels[i]].push_back(i);
  return out;
}

}  // namespace detail

/// One fold mirroring the manifest's split tags.
inline SplitPlan predefined_split(const DatasetManifest& m) {
  SplitPlan plan;
  plan.strategy = SplitStrategy::Predefined;
  Fold f;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    switch (m.records[i].split) {
      case SplitTag::Train: f.train.push_back(i); break;
      case SplitTag::Val: f.val.push_back(i); break;
      case SplitTag::Test: f.test.push_back(i); break;
      case SplitTag::None:
        throw ConfigError("predefined split: item '" + m.records[i].item_id + "' of " + m.dataset_id +
                          " carries no split tag");
    }
  }
  if (f.train.empty()) throw ConfigError("predefined split: " + m.dataset_id + " has no training items");
  if (f.test.empty()) throw ConfigError("predefined split: " + m.dataset_id + " has no test items");
  plan.folds.push_back(std::move(f));
  return plan;
}

/**
 * Class-stratified random split of arbitrary units (items or slides).
 * Per class, floor(n * f) units go to val and test; the rounding residue
 * stays in train. A class with fewer units than non-empty parts goes
 * entirely to train, with a warning.
 */
inline SplitPlan stratified_random_split(std::span<const int> labels, std::array<double, 3> fractions,
                                         std::uint64_t seed) {
  const double sum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(sum - 1.0) > 1e-9 || fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0) {
    throw ConfigError("stratified split: fractions must be non-negative and sum to 1");
  }
  const int parts = static_cast<int>(fractions[0] > 0) + static_cast<int>(fractions[1] > 0) +
                    static_cast<int>(fractions[2] > 0);
  SplitPlan plan;
  plan.strategy = SplitStrategy::StratifiedRandom;
  plan.seed = seed;
  Fold f;
  for (auto& [label, members] : detail::by_class(labels)) {
    if (members.size() < static_cast<std::size_t>(parts)) {
      plan.warnings.push_back("class " + std::to_string(label) + " has " + std::to_string(members.size()) +
                              " items, fewer than " + std::to_string(parts) + " parts; kept in train");
      f.train.insert(f.train.end(), members.begin(), members.end());
      continue;
    }
    numkit::CounterRng rng(numkit::stream_key(seed, static_cast<std::uint64_t>(label)));
    rng.shuffle(members);
    const double n = static_cast<double>(members.size());
    const auto n_val = static_cast<std::size_t>(std::floor(n * fractions[1] + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(n * fractions[2] + 1e-9));
    std::size_t pos = 0;
    for (; pos < n_test; ++pos) f.test.push_back(members[pos]);
    for (; pos < n_test + n_val; ++pos) f.val.push_back(members[pos]);
    for (; pos < members.size(); ++pos) f.train.push_back(members[pos]);
  }
  detail::sort_parts(f);
  plan.folds.push_back(std::move(f));
  return plan;
}

inline SplitPlan stratified_random_split(const DatasetManifest& m, std::array<double, 3> fractions, std::uint64_t seed) {
  std::vector<int> labels;
  labels.reserve(m.records.size());
  for (const auto& r : m.records) labels.push_back(r.label);
  return stratified_random_split(labels, fractions, seed);
}

/**
 * Stratified k-fold over labels: each class is shuffled and dealt round-robin
 * into folds, continuing the deal position across classes so fold sizes stay
 * within one of each other. If some class has fewer than k members the fold
 * count drops to the smallest class size (warning); below 2 it is an error.
 */
inline SplitPlan stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  SplitPlan plan;
  plan.strategy = SplitStrategy::StratifiedRandom;
  plan.seed = seed;
  auto classes = detail::by_class(labels);
  std::size_t smallest = labels.size();
  for (const auto& [_, members] : classes) smallest = std::min(smallest, members.size());
  if (smallest < k) {
    if (smallest < 2) throw ConfigError("stratified k-fold: a class has fewer than 2 items");
    plan.warnings.push_back("stratified k-fold: reduced folds from " + std::to_string(k) + " to " +
                            std::to_string(smallest) + " so every class appears in every fold");
    k = smallest;
  }
  std::vector<std::size_t> assignment(labels.size());
  std::size_t deal = 0;
  for (auto& [label, members] : classes) {
    numkit::CounterRng rng(numkit::stream_key(seed, static_cast<std::uint64_t>(label)));
    rng.shuffle(members);
    for (std::size_t idx : members) assignment[idx] = deal++ % k;
  }
  plan.folds.resize(k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t f = 0; f < k; ++f) (assignment[i] == f ? plan.folds[f].test : plan.folds[f].train).push_back(i);
  }
  return plan;
}

/// Leave-one-patient-out: fold i tests the i-th patient (lexicographic order).
inline SplitPlan patient_kfold(const DatasetManifest& m) {
  std::map<std::string, std::vector<std::size_t>> patients;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& p = m.records[i].patient_id;
    if (p.empty()) throw ConfigError("patient k-fold: item '" + m.records[i].item_id + "' has an empty patient_id");
    patients[p].push_back(i);
  }
  if (patients.size() < 2) {
    throw ConfigError("patient k-fold: " + m.dataset_id + " has " + std::to_string(patients.size()) +
                      " patient(s), need at least 2");
  }
  SplitPlan plan;
  plan.strategy = SplitStrategy::PatientKFold;
  for (const auto& [patient, members] : patients) {
    Fold f;
    f.test = members;
    for (const auto& [other, rest] : patients)
      if (other != patient) f.train.insert(f.train.end(), rest.begin(), rest.end());
    detail::sort_parts(f);
    plan.folds.push_back(std::move(f));
  }
  return plan;
}

/**
 * Patient-disjoint folds with a per-class sample cap.
 *
 * Patients are packed into `n_folds` groups largest-first (by item count,
 * ties by patient id), each going to the currently smallest group (ties to
 * the lowest index). Within each group up to `per_class` items per class
 * are sampled without replacement. Fold i tests group i and trains on the
 * samples of all other groups.
 */
inline SplitPlan tcga_uniform_folds(const DatasetManifest& m, std::size_t per_class = 100, std::size_t n_folds = 5,
                                    std::uint64_t seed = 0) {
  if (n_folds < 2) throw ConfigError("tcga uniform folds: need at least 2 folds");
  std::map<std::string, std::vector<std::size_t>> patients;
  std::set<int> classes;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    if (r.patient_id.empty()) throw ConfigError("tcga uniform folds: item '" + r.item_id + "' has no patient_id");
    if (r.label < 0) throw ConfigError("tcga uniform folds: item '" + r.item_id + "' has no class label");
    patients[r.patient_id].push_back(i);
    classes.insert(r.label);
  }
  if (patients.size() < n_folds) {
    throw ConfigError("tcga uniform folds: " + std::to_string(patients.size()) + " patients cannot fill " +
                      std::to_string(n_folds) + " patient-disjoint folds");
  }
  std::vector<std::pair<std::string, std::size_t>> order;
  for (const auto& [p, members] : patients) order.emplace_back(p, members.size());
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::vector<std::size_t>> groups(n_folds);
  std::vector<std::size_t> load(n_folds, 0);
  for (const auto& [p, count] : order) {
    const auto g = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
    load[g] += count;
    const auto& members = patients[p];
    groups[g].insert(groups[g].end(), members.begin(), members.end());
  }

  SplitPlan plan;
  plan.strategy = SplitStrategy::TcgaUniformFolds;
  plan.seed = seed;
  std::vector<std::vector<std::size_t>> sampled(n_folds);
  for (std::size_t g = 0; g < n_folds; ++g) {
    std::sort(groups[g].begin(), groups[g].end());
    for (int c : classes) {
      std::vector<std::size_t> pool;
      for (std::size_t idx : groups[g])
        if (m.records[idx].label == c) pool.push_back(idx);
      if (pool.size() < per_class) {
        plan.warnings.push_back("fold " + std::to_string(g) + ": class " + std::to_string(c) + " has " +
                                std::to_string(pool.size()) + " of " + std::to_string(per_class) + " items");
      }
      numkit::CounterRng rng(numkit::stream_key(seed, g * 1000003ULL + static_cast<std::uint64_t>(c)));
      rng.shuffle(pool);
      pool.resize(std::min(pool.size(), per_class));
      sampled[g].insert(sampled[g].end(), pool.begin(), pool.end());
    }
  }
  for (std::size_t g = 0; g < n_folds; ++g) {
    Fold f;
    f.test = sampled[g];
    for (std::size_t o = 0; o < n_folds; ++o)
      if (o != g) f.train.insert(f.train.end(), sampled[o].begin(), sampled[o].end());
    detail::sort_parts(f);
    plan.folds.push_back(std::move(f));
  }
  return plan;
}

inline SplitPlan predefined_split(const embstore::BoundDataset& b) { return predefined_split(b.manifest()); }
inline SplitPlan patient_kfold(const embstore::BoundDataset& b) { return patient_kfold(b.manifest()); }
inline SplitPlan tcga_uniform_folds(const embstore::BoundDataset& b, std::size_t per_class = 100,
                                    std::size_t n_folds = 5, std::uint64_t seed = 0) {
  return tcga_uniform_folds(b.manifest(), per_class, n_folds, seed);
}
inline SplitPlan stratified_random_split(const embstore::BoundDataset& b, std::array<double, 3> fractions,
                                         std::uint64_t seed) {
  return stratified_random_split(b.manifest(), fractions, seed);
}

/// Audit export: `fold_id,part,item_id`, one line per membership.
inline std::string export_split_csv(const SplitPlan& plan, const DatasetManifest& m) {
  std::string out = "fold_id,part,item_id\n";
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    auto emit = [&](const std::vector<std::size_t>& idx, std::string_view part) {
      for (std::size_t i : idx) {
        out += std::to_string(f);
        out += ',';
        out += part;
        out += ',';
        out += embstore::csv_escape(m.records[i].item_id);
        out += '\n';
      }
    };
    emit(plan.folds[f].train, "train");
    emit(plan.folds[f].val, "val");
    emit(plan.folds[f].test, "test");
  }
  return out;
}

}  // namespace pathbench::splitkit
