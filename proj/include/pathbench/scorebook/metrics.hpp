#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pathbench/errors.hpp"

namespace pathbench::scorebook {

/// Mean per-class recall over the classes present in `labels`.
inline double balanced_accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (labels.empty()) throw ContractViolation("balanced_accuracy: empty input");
  if (predictions.size() != labels.size()) {
    throw ContractViolation("balanced_accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                            std::to_string(labels.size()) + " labels");
  }
  std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // hits, total
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& [hit, total] = per_class[labels[i]];
    ++total;
    if (predictions[i] == labels[i]) ++hit;
  }
  double sum = 0.0;
  for (const auto& [_, c] : per_class) sum += static_cast<double>(c.first) / static_cast<double>(c.second);
  return sum / static_cast<double>(per_class.size());
}

inline double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (labels.empty()) throw ContractViolation("accuracy: empty input");
  if (predictions.size() != labels.size()) throw ContractViolation("accuracy: length mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

enum class SpreadKind { StdDev, StdError };

struct Aggregate {
  double mean = 0.0;
  double spread = 0.0;
};

/// Arithmetic mean and sample (n-1) standard deviation; 0 spread for n = 1.
inline Aggregate aggregate_replicates(std::span<const double> values, SpreadKind kind = SpreadKind::StdDev) {
  if (values.empty()) throw ContractViolation("aggregate_replicates: no values");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  double sd = std::sqrt(ss / (n - 1.0));
  if (kind == SpreadKind::StdError) sd /= std::sqrt(n);
  return {mean, sd};
}

}  // namespace pathbench::scorebook
