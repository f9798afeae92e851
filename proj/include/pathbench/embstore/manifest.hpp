#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "pathbench/embstore/binary_io.hpp"
#include "pathbench/embstore/csv.hpp"
#include "pathbench/errors.hpp"

namespace pathbench::embstore {

enum class TaskKind { PatchClassification, SlideClassification, Regression };
enum class SplitTag { Train, Val, Test, None };

inline constexpr std::size_t kRegressionTargets = 50;

inline std::string_view to_string(SplitTag s) {
  switch (s) {
    case SplitTag::Train: return "train";
    case SplitTag::Val: return "val";
    case SplitTag::Test: return "test";
    case SplitTag::None: return "none";
  }
  return "none";
}

inline SplitTag parse_split_tag(std::string_view s) {
  if (s == "train") return SplitTag::Train;
  if (s == "val" || s == "validation") return SplitTag::Val;
  if (s == "test") return SplitTag::Test;
  if (s.empty() || s == "none") return SplitTag::None;
  throw ParseError("unknown split tag '" + std::string(s) + "'");
}

struct ManifestRecord {
  std::string item_id;
  int label = -1;               // classification only
  std::vector<double> targets;  // regression only, kRegressionTargets values
  std::string patient_id;
  std::string slide_id;
  SplitTag split = SplitTag::None;
  std::optional<int> fold_id;
};

struct DatasetManifest {
  std::string dataset_id;
  TaskKind task_kind = TaskKind::PatchClassification;
  std::vector<ManifestRecord> records;

  [[nodiscard]] bool is_regression() const noexcept { return task_kind == TaskKind::Regression; }

  [[nodiscard]] std::size_t num_classes() const {
    int mx = -1;
    for (const auto& r : records) mx = std::max(mx, r.label);
    return static_cast<std::size_t>(mx + 1);
  }

  [[nodiscard]] bool has_split(SplitTag tag) const {
    for (const auto& r : records)
      if (r.split == tag) return true;
    return false;
  }
};

inline void validate(const DatasetManifest& m) {
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    if (r.item_id.empty()) throw ParseError("manifest " + m.dataset_id + ": empty item_id at record " + std::to_string(i));
    if (!seen.insert(r.item_id).second) {
      throw ParseError("manifest " + m.dataset_id + ": duplicate item_id '" + r.item_id + "'");
    }
    if (m.is_regression()) {
      if (r.targets.size() != kRegressionTargets) {
        throw ParseError("manifest " + m.dataset_id + ": item '" + r.item_id + "' has " +
                         std::to_string(r.targets.size()) + " targets, expected 50");
      }
    } else if (r.label < 0) {
      throw ParseError("manifest " + m.dataset_id + ": item '" + r.item_id + "' has a negative label");
    }
  }
}

namespace detail {

inline int parse_int(std::string_view s, std::string_view what) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ParseError("cannot parse " + std::string(what) + " '" + std::string(s) + "' as integer");
  }
  return v;
}

inline double parse_double(std::string_view s, std::string_view what) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ParseError("cannot parse " + std::string(what) + " '" + std::string(s) + "' as number");
  }
  return v;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string gene_column(std::size_t g) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "g%03zu", g);
  return buf;
}

}  // namespace detail

inline const std::vector<std::string>& classification_header() {
  static const std::vector<std::string> h = {"item_id", "label", "patient_id", "slide_id", "split", "fold_id"};
  return h;
}

inline std::vector<std::string> regression_header() {
  std::vector<std::string> h = {"item_id", "patient_id", "slide_id", "fold_id"};
  for (std::size_t g = 0; g < kRegressionTargets; ++g) h.push_back(detail::gene_column(g));
  return h;
}

/**
 * Parses a manifest. The header decides between the classification layout
 * and the 50-target regression layout; `slide_level` marks a classification
 * manifest as slide-level (bags) rather than patch-level.
 */
inline DatasetManifest parse_manifest(std::string_view text, std::string dataset_id, bool slide_level = false) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw ParseError("manifest " + dataset_id + ": empty document");
  DatasetManifest m;
  m.dataset_id = std::move(dataset_id);
  const auto& header = rows.front();
  const bool regression = header == regression_header();
  if (!regression && header != classification_header()) {
    throw ParseError("manifest " + m.dataset_id + ": unrecognized header (expected classification or regression layout)");
  }
  m.task_kind = regression ? TaskKind::Regression
                           : (slide_level ? TaskKind::SlideClassification : TaskKind::PatchClassification);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != header.size()) {
      throw ParseError("manifest " + m.dataset_id + ": record " + std::to_string(i) + " has " +
                       std::to_string(row.size()) + " fields, expected " + std::to_string(header.size()));
    }
    ManifestRecord r;
    r.item_id = row[0];
    if (regression) {
      r.patient_id = row[1];
      r.slide_id = row[2];
      if (!row[3].empty()) r.fold_id = detail::parse_int(row[3], "fold_id");
      r.targets.reserve(kRegressionTargets);
      for (std::size_t g = 0; g < kRegressionTargets; ++g) r.targets.push_back(detail::parse_double(row[4 + g], "target"));
    } else {
      r.label = detail::parse_int(row[1], "label");
      r.patient_id = row[2];
      r.slide_id = row[3];
      r.split = parse_split_tag(row[4]);
      if (!row[5].empty()) r.fold_id = detail::parse_int(row[5], "fold_id");
    }
    m.records.push_back(std::move(r));
  }
  validate(m);
  return m;
}

inline DatasetManifest read_manifest(const std::filesystem::path& path, std::string dataset_id, bool slide_level = false) {
  try {
    return parse_manifest(read_text_file(path), std::move(dataset_id), slide_level);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline std::string format_manifest(const DatasetManifest& m) {
  validate(m);
  std::string out;
  auto join = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out.push_back(',');
      out += csv_escape(cells[i]);
    }
    out.push_back('\n');
  };
  join(m.is_regression() ? regression_header() : classification_header());
  for (const auto& r : m.records) {
    const std::string fold = r.fold_id ? std::to_string(*r.fold_id) : std::string();
    if (m.is_regression()) {
      std::vector<std::string> cells = {r.item_id, r.patient_id, r.slide_id, fold};
      for (double t : r.targets) cells.push_back(detail::format_double(t));
      join(cells);
    } else {
      join({r.item_id, std::to_string(r.label), r.patient_id, r.slide_id, std::string(to_string(r.split)), fold});
    }
  }
  return out;
}

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  write_file_atomic(path, format_manifest(m));
}

}  // namespace pathbench::embstore
