#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pathbench/embstore/csv.hpp"
#include "pathbench/embstore/embeddings.hpp"
#include "pathbench/embstore/manifest.hpp"
#include "pathbench/embstore/model_card.hpp"
#include "pathbench/errors.hpp"
#include "pathbench/scorebook/metrics.hpp"

namespace pathbench::scorebook {

using embstore::TokenVariant;

enum class Metric { BalancedAccuracy, PearsonMean };

inline std::string_view to_string(Metric m) {
  return m == Metric::BalancedAccuracy ? "balanced-accuracy" : "pearson-mean";
}

inline Metric parse_metric(std::string_view s) {
  if (s == "balanced-accuracy") return Metric::BalancedAccuracy;
  if (s == "pearson-mean") return Metric::PearsonMean;
  throw ConfigError("unknown metric '" + std::string(s) + "'");
}

/// Per-seed (or per-fold) scores of one task x model x token variant.
struct RunResult {
  std::string task_id;
  std::string model_id;
  TokenVariant variant = TokenVariant::Cls;
  std::vector<double> replicate_values;
  double mean = 0.0;
  double std = 0.0;
  Metric metric = Metric::BalancedAccuracy;

  static RunResult from_values(std::string task_id, std::string model_id, TokenVariant variant,
                               std::vector<double> values, Metric metric,
                               SpreadKind spread = SpreadKind::StdDev) {
    const auto agg = aggregate_replicates(values, spread);
    return {std::move(task_id), std::move(model_id), variant, std::move(values), agg.mean, agg.spread, metric};
  }
};

struct VariantChoice {
  RunResult result;
  TokenVariant chosen = TokenVariant::ClsMean;
};

/// The result with the larger mean; equal means pick CLS_MEAN.
inline VariantChoice select_token_variant(const RunResult& cls, const RunResult& cls_mean) {
  if (cls.variant != TokenVariant::Cls || cls_mean.variant != TokenVariant::ClsMean) {
    throw ContractViolation("select_token_variant: expected (CLS, CLS_MEAN), got (" +
                            std::string(embstore::to_string(cls.variant)) + ", " +
                            std::string(embstore::to_string(cls_mean.variant)) + ")");
  }
  if (cls.task_id != cls_mean.task_id || cls.model_id != cls_mean.model_id) {
    throw ContractViolation("select_token_variant: results belong to different cells (" + cls.task_id + "/" +
                            cls.model_id + " vs " + cls_mean.task_id + "/" + cls_mean.model_id + ")");
  }
  if (cls.mean > cls_mean.mean) return {cls, TokenVariant::Cls};
  return {cls_mean, TokenVariant::ClsMean};
}

// ---------------------------------------------------------------------------
// Report tables

enum class TaskGroup { Molecular, Morphology };

inline std::string_view to_string(TaskGroup g) { return g == TaskGroup::Molecular ? "molecular" : "morphology"; }

inline TaskGroup parse_group(std::string_view s) {
  if (s == "molecular") return TaskGroup::Molecular;
  if (s == "morphology") return TaskGroup::Morphology;
  throw ConfigError("unknown task group '" + std::string(s) + "'");
}

enum class Mark { None, Bold, Underline };

struct ReportCell {
  double value = 0.0;  // display units (percent)
  std::optional<double> std;
  std::optional<TokenVariant> variant;
};

struct ReportRow {
  std::string task_id;
  std::optional<TaskGroup> group;
  std::vector<std::optional<ReportCell>> cells;  // one per model column
};

struct ReportTable {
  std::vector<std::string> models;
  std::vector<ReportRow> rows;
  SpreadKind spread = SpreadKind::StdDev;
  std::optional<double> ridge_alpha;
};

/// Round half to even at one decimal.
inline double display_value(double v) { return std::nearbyint(v * 10.0) / 10.0; }

inline std::string format_one_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", display_value(v));
  std::string s(buf);
  return s == "-0.0" ? "0.0" : s;
}

struct GroupAverages {
  // Per model column; empty when the column has a missing cell in the group.
  std::vector<std::optional<double>> molecular, morphology, overall;
};

/// Molecular and morphology means over their tasks; overall over all tasks.
inline GroupAverages group_and_overall_averages(const ReportTable& t) {
  for (const auto& r : t.rows) {
    if (!r.group) throw ConfigError("task '" + r.task_id + "' has no group");
    if (r.cells.size() != t.models.size()) {
      throw ContractViolation("report row '" + r.task_id + "' has " + std::to_string(r.cells.size()) +
                              " cells for " + std::to_string(t.models.size()) + " models");
    }
  }
  GroupAverages out;
  auto mean_over = [&](std::size_t col, std::optional<TaskGroup> group) -> std::optional<double> {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : t.rows) {
      if (group && *r.group != *group) continue;
      if (!r.cells[col]) return std::nullopt;
      sum += r.cells[col]->value;
      ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  for (std::size_t c = 0; c < t.models.size(); ++c) {
    out.molecular.push_back(mean_over(c, TaskGroup::Molecular));
    out.morphology.push_back(mean_over(c, TaskGroup::Morphology));
    out.overall.push_back(mean_over(c, std::nullopt));
  }
  return out;
}

/**
 * Bold on the highest displayed value, underline on the next distinct one.
 * Equal displayed values share a mark. Missing cells are unmarked.
 */
inline std::vector<Mark> rank_values(std::span<const std::optional<double>> values) {
  std::set<double, std::greater<>> distinct;
  for (const auto& v : values)
    if (v) distinct.insert(display_value(*v));
  std::vector<Mark> marks(values.size(), Mark::None);
  if (distinct.empty()) return marks;
  const double first = *distinct.begin();
  const bool has_second = distinct.size() > 1;
  const double second = has_second ? *std::next(distinct.begin()) : first;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i]) continue;
    const double d = display_value(*values[i]);
    if (d == first) marks[i] = Mark::Bold;
    else if (has_second && d == second) marks[i] = Mark::Underline;
  }
  return marks;
}

inline std::vector<std::vector<Mark>> rank_rows(const ReportTable& t) {
  std::vector<std::vector<Mark>> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    std::vector<std::optional<double>> vals;
    for (const auto& c : r.cells) vals.push_back(c ? std::optional<double>(c->value) : std::nullopt);
    out.push_back(rank_values(vals));
  }
  return out;
}

/**
 * Builds a table from run results, one column per entry of `models` and one
 * row per (task, group). When both token variants are present the maximum is
 * reported; values are scaled to percent.
 */
inline ReportTable assemble_table(const std::vector<RunResult>& results, const std::vector<std::string>& models,
                                  const std::vector<std::pair<std::string, std::optional<TaskGroup>>>& tasks,
                                  SpreadKind spread = SpreadKind::StdDev) {
  std::map<std::pair<std::string, std::string>, std::map<TokenVariant, const RunResult*>> by_cell;
  for (const auto& r : results) by_cell[{r.task_id, r.model_id}][r.variant] = &r;
  ReportTable t;
  t.models = models;
  t.spread = spread;
  for (const auto& [task, group] : tasks) {
    ReportRow row{task, group, {}};
    for (const auto& m : models) {
      auto it = by_cell.find({task, m});
      if (it == by_cell.end()) {
        row.cells.emplace_back();
        continue;
      }
      const auto& v = it->second;
      const RunResult* pick = nullptr;
      if (v.contains(TokenVariant::Cls) && v.contains(TokenVariant::ClsMean)) {
        const auto choice = select_token_variant(*v.at(TokenVariant::Cls), *v.at(TokenVariant::ClsMean));
        pick = v.at(choice.chosen);
      } else {
        pick = v.begin()->second;
      }
      row.cells.push_back(ReportCell{100.0 * pick->mean, 100.0 * pick->std, pick->variant});
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Rendering

enum class ReportFormat { Markdown, Csv, Latex };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "markdown" || s == "md") return ReportFormat::Markdown;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "latex") return ReportFormat::Latex;
  throw UsageError("unknown report format '" + std::string(s) + "' (expected markdown, csv or latex)");
}

struct RenderOptions {
  bool show_std = false;
};

namespace detail {

inline std::string spread_label(SpreadKind k) { return k == SpreadKind::StdDev ? "std" : "stderr"; }

inline std::string header_stamp(const ReportTable& t) {
  std::string s = "spread=" + spread_label(t.spread);
  if (t.ridge_alpha) s += " ridge_alpha=" + embstore::detail::format_double(*t.ridge_alpha);
  return s;
}

inline std::string mark_name(Mark m) {
  switch (m) {
    case Mark::Bold: return "bold";
    case Mark::Underline: return "underline";
    case Mark::None: break;
  }
  return "";
}

struct OrderedRow {
  const ReportRow* row;
  std::size_t index;
};

/// Molecular rows first, then morphology, each in table order.
inline std::vector<OrderedRow> grouped_rows(const ReportTable& t) {
  std::vector<OrderedRow> out;
  for (auto g : {TaskGroup::Molecular, TaskGroup::Morphology})
    for (std::size_t i = 0; i < t.rows.size(); ++i)
      if (t.rows[i].group == g) out.push_back({&t.rows[i], i});
  return out;
}

}  // namespace detail

inline std::string render_report(const ReportTable& t, ReportFormat format, const RenderOptions& opt = {}) {
  const auto avg = group_and_overall_averages(t);
  const auto marks = rank_rows(t);
  const auto rows = detail::grouped_rows(t);
  const std::pair<const char*, const std::vector<std::optional<double>>*> averages[] = {
      {"molecular", &avg.molecular}, {"morphology", &avg.morphology}, {"overall", &avg.overall}};
  std::ostringstream out;

  auto cell_text = [&](const std::optional<ReportCell>& c, const std::string& pm) -> std::string {
    if (!c) return "n/a";
    std::string s = format_one_decimal(c->value);
    if (opt.show_std && c->std) s += pm + format_one_decimal(*c->std);
    return s;
  };

  switch (format) {
    case ReportFormat::Csv: {
      out << "# " << detail::header_stamp(t) << "\n";
      out << "task_id,group,model_id,value,std,mark\n";
      for (const auto& [row, idx] : rows) {
        for (std::size_t c = 0; c < t.models.size(); ++c) {
          const auto& cell = row->cells[c];
          out << embstore::csv_escape(row->task_id) << ',' << to_string(*row->group) << ','
              << embstore::csv_escape(t.models[c]) << ',' << (cell ? format_one_decimal(cell->value) : "") << ','
              << (opt.show_std && cell && cell->std ? format_one_decimal(*cell->std) : "") << ','
              << detail::mark_name(marks[idx][c]) << '\n';
        }
      }
      for (const auto& [name, vals] : averages)
        for (std::size_t c = 0; c < t.models.size(); ++c)
          out << name << ",average," << embstore::csv_escape(t.models[c]) << ','
              << ((*vals)[c] ? format_one_decimal(*(*vals)[c]) : "") << ",,\n";
      break;
    }
    case ReportFormat::Markdown: {
      out << "<!-- " << detail::header_stamp(t) << " -->\n\n";
      out << "| Group | Task |";
      for (const auto& m : t.models) out << ' ' << m << " |";
      out << "\n|---|---|";
      for (std::size_t c = 0; c < t.models.size(); ++c) out << "---:|";
      out << '\n';
      for (const auto& [row, idx] : rows) {
        out << "| " << to_string(*row->group) << " | " << row->task_id << " |";
        for (std::size_t c = 0; c < t.models.size(); ++c) {
          std::string s = cell_text(row->cells[c], " ± ");
          if (marks[idx][c] == Mark::Bold) s = "**" + s + "**";
          if (marks[idx][c] == Mark::Underline) s = "<u>" + s + "</u>";
          out << ' ' << s << " |";
        }
        out << '\n';
      }
      for (const auto& [name, vals] : averages) {
        out << "| average | " << name << " |";
        for (const auto& v : *vals) out << ' ' << (v ? format_one_decimal(*v) : "n/a") << " |";
        out << '\n';
      }
      break;
    }
    case ReportFormat::Latex: {
      out << "% " << detail::header_stamp(t) << '\n';
      out << "\\begin{tabular}{ll" << std::string(t.models.size(), 'r') << "}\n";
      out << "Group & Task";
      for (const auto& m : t.models) out << " & " << m;
      out << " \\\\\n\\midrule\n";
      for (const auto& [row, idx] : rows) {
        out << to_string(*row->group) << " & " << row->task_id;
        for (std::size_t c = 0; c < t.models.size(); ++c) {
          const auto& cell = row->cells[c];
          std::string v = cell ? format_one_decimal(cell->value) : "n/a";
          if (marks[idx][c] == Mark::Bold) v = "\\textbf{" + v + "}";
          if (marks[idx][c] == Mark::Underline) v = "\\underline{" + v + "}";
          if (opt.show_std && cell && cell->std) v += " \\scriptsize{$\\pm " + format_one_decimal(*cell->std) + "$}";
          out << " & " << v;
        }
        out << " \\\\\n";
      }
      out << "\\midrule\n";
      for (const auto& [name, vals] : averages) {
        out << "average & " << name;
        for (const auto& v : *vals) out << " & " << (v ? format_one_decimal(*v) : "n/a");
        out << " \\\\\n";
      }
      out << "\\end{tabular}\n";
      break;
    }
  }
  return out.str();
}

/// Scatter data: model size and training slides against the overall average.
inline std::string render_scatter_csv(const ReportTable& t, const std::vector<embstore::ModelCard>& cards) {
  const auto avg = group_and_overall_averages(t);
  std::ostringstream out;
  out << "model_id,parameter_count,training_slides,overall_average\n";
  for (std::size_t c = 0; c < t.models.size(); ++c) {
    auto it = std::find_if(cards.begin(), cards.end(), [&](const auto& k) { return k.model_id == t.models[c]; });
    if (it == cards.end()) throw ConfigError("no model card for '" + t.models[c] + "'");
    out << embstore::csv_escape(it->model_id) << ',' << it->parameter_count << ',' << it->training_slides << ','
        << (avg.overall[c] ? format_one_decimal(*avg.overall[c]) : "") << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Reference tables in long CSV form: task_id,group,model_id,value,std,mark

struct ReferenceRow {
  std::string task_id;
  std::string group;
  std::string model_id;
  std::optional<double> value;
  std::optional<double> std;
  Mark mark = Mark::None;
};

inline Mark parse_mark(std::string_view s) {
  if (s.empty() || s == "none") return Mark::None;
  if (s == "bold") return Mark::Bold;
  if (s == "underline") return Mark::Underline;
  throw ParseError("unknown mark '" + std::string(s) + "'");
}

/// Parses the long form written by the CSV renderer; '#' lines are skipped.
inline std::vector<ReferenceRow> parse_reference_csv(std::string_view text) {
  const auto rows = embstore::parse_csv(text);
  static const std::vector<std::string> header = {"task_id", "group", "model_id", "value", "std", "mark"};
  if (rows.empty() || rows[0] != header) throw ParseError("reference table: expected header task_id,group,model_id,value,std,mark");
  auto number = [](const std::string& s, std::size_t line) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    return embstore::detail::parse_double(s, "reference table line " + std::to_string(line) + " value");
  };
  std::vector<ReferenceRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != header.size()) {
      throw ParseError("reference table line " + std::to_string(i + 1) + ": expected 6 fields, got " +
                       std::to_string(r.size()));
    }
    out.push_back({r[0], r[1], r[2], number(r[3], i + 1), number(r[4], i + 1), parse_mark(r[5])});
  }
  return out;
}

/// Task rows of a reference table; rows whose group is "average" are skipped.
inline ReportTable table_from_reference(const std::vector<ReferenceRow>& rows) {
  ReportTable t;
  std::map<std::string, std::size_t> row_index, col_index;
  for (const auto& r : rows) {
    if (r.group == "average") continue;
    if (!col_index.contains(r.model_id)) {
      col_index[r.model_id] = t.models.size();
      t.models.push_back(r.model_id);
    }
  }
  for (const auto& r : rows) {
    if (r.group == "average") continue;
    auto [it, fresh] = row_index.try_emplace(r.task_id, t.rows.size());
    if (fresh) {
      t.rows.push_back({r.task_id, parse_group(r.group), std::vector<std::optional<ReportCell>>(t.models.size())});
    }
    auto& cell = t.rows[it->second].cells[col_index.at(r.model_id)];
    if (cell) throw ParseError("reference table: duplicate cell " + r.task_id + "/" + r.model_id);
    if (r.value) cell = ReportCell{*r.value, r.std, std::nullopt};
  }
  return t;
}

/// Marks as recorded in a reference table, in the table's row/column order.
inline std::vector<std::vector<Mark>> reference_marks(const std::vector<ReferenceRow>& rows, const ReportTable& t) {
  std::vector<std::vector<Mark>> out(t.rows.size(), std::vector<Mark>(t.models.size(), Mark::None));
  for (const auto& r : rows) {
    if (r.group == "average") continue;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      if (t.rows[i].task_id != r.task_id) continue;
      for (std::size_t c = 0; c < t.models.size(); ++c)
        if (t.models[c] == r.model_id) out[i][c] = r.mark;
    }
  }
  return out;
}

struct ReferenceAverage {
  std::string table;
  std::string group;  // molecular | morphology | overall
  std::string model_id;
  double value = 0.0;
};

/// Columns table,group,model_id,value.
inline std::vector<ReferenceAverage> parse_reference_averages(std::string_view text) {
  const auto rows = embstore::parse_csv(text);
  static const std::vector<std::string> header = {"table", "group", "model_id", "value"};
  if (rows.empty() || rows[0] != header) throw ParseError("reference averages: expected header table,group,model_id,value");
  std::vector<ReferenceAverage> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 4) throw ParseError("reference averages line " + std::to_string(i + 1) + ": expected 4 fields");
    out.push_back({r[0], r[1], r[2], embstore::detail::parse_double(r[3], "reference average")});
  }
  return out;
}

}  // namespace pathbench::scorebook
