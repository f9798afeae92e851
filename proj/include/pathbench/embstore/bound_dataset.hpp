#pragma once

#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pathbench/embstore/embeddings.hpp"
#include "pathbench/embstore/manifest.hpp"
#include "pathbench/errors.hpp"

namespace pathbench::embstore {

class JoinError : public Error {
 public:
  using Error::Error;
};

/**
 * Embeddings aligned to a manifest. Index i refers to manifest record i;
 * `row_of(i)` is the matching row in the embedding matrix. Both inputs are
 * shared and immutable, so a bound dataset is cheap to copy across tasks.
 */
class BoundDataset {
 public:
  BoundDataset(std::shared_ptr<const EmbeddingMatrix> emb, std::shared_ptr<const DatasetManifest> manifest,
               std::vector<std::size_t> rows)
      : emb_(std::move(emb)), manifest_(std::move(manifest)), rows_(std::move(rows)) {}

  [[nodiscard]] std::size_t size() const noexcept { return rows_.size(); }
  [[nodiscard]] std::size_t dim() const noexcept { return emb_->dim(); }
  [[nodiscard]] std::size_t row_of(std::size_t i) const noexcept { return rows_[i]; }
  [[nodiscard]] std::span<const float> embedding(std::size_t i) const noexcept { return emb_->items.row(rows_[i]); }
  [[nodiscard]] const ManifestRecord& record(std::size_t i) const noexcept { return manifest_->records[i]; }
  [[nodiscard]] const DatasetManifest& manifest() const noexcept { return *manifest_; }
  [[nodiscard]] const EmbeddingMatrix& embeddings() const noexcept { return *emb_; }

  [[nodiscard]] std::vector<int> labels() const {
    std::vector<int> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = record(i).label;
    return out;
  }

  [[nodiscard]] std::size_t num_classes() const { return manifest_->num_classes(); }

  /// Rows for the given manifest indices, widened to double.
  [[nodiscard]] numkit::MatrixD gather(std::span<const std::size_t> indices) const {
    numkit::MatrixD out(indices.size(), dim());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      auto src = embedding(indices[i]);
      auto dst = out.row(i);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] = static_cast<double>(src[j]);
    }
    return out;
  }

  [[nodiscard]] numkit::MatrixD gather_targets(std::span<const std::size_t> indices) const {
    numkit::MatrixD out(indices.size(), kRegressionTargets);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const auto& t = record(indices[i]).targets;
      std::copy(t.begin(), t.end(), out.row(i).begin());
    }
    return out;
  }

  /// Manifest index of each item id.
  [[nodiscard]] std::unordered_map<std::string, std::size_t> index_by_id() const {
    std::unordered_map<std::string, std::size_t> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.emplace(record(i).item_id, i);
    return out;
  }

 private:
  std::shared_ptr<const EmbeddingMatrix> emb_;
  std::shared_ptr<const DatasetManifest> manifest_;
  std::vector<std::size_t> rows_;
};

/// Aligns embeddings to manifest order. Both id sets must match exactly.
inline BoundDataset join_manifest(std::shared_ptr<const EmbeddingMatrix> emb,
                                  std::shared_ptr<const DatasetManifest> manifest) {
  std::unordered_map<std::string_view, std::size_t> by_id;
  by_id.reserve(emb->item_ids.size());
  for (std::size_t i = 0; i < emb->item_ids.size(); ++i) by_id.emplace(emb->item_ids[i], i);

  std::vector<std::size_t> rows;
  rows.reserve(manifest->records.size());
  std::vector<std::string> missing;
  std::size_t missing_count = 0;
  std::unordered_set<std::string_view> in_manifest;
  for (const auto& r : manifest->records) {
    in_manifest.insert(r.item_id);
    auto it = by_id.find(r.item_id);
    if (it == by_id.end()) {
      if (missing.size() < 5) missing.push_back(r.item_id);
      ++missing_count;
      continue;
    }
    rows.push_back(it->second);
  }
  std::vector<std::string> extra;
  std::size_t extra_count = 0;
  for (const auto& id : emb->item_ids) {
    if (!in_manifest.contains(id)) {
      if (extra.size() < 5) extra.push_back(id);
      ++extra_count;
    }
  }
  if (missing_count || extra_count) {
    auto list = [](const std::vector<std::string>& ids) {
      std::string s;
      for (const auto& id : ids) s += (s.empty() ? "" : ", ") + id;
      return s;
    };
    std::string msg = "join " + manifest->dataset_id + ": ";
    if (missing_count) {
      msg += std::to_string(missing_count) + " manifest ids without embeddings [" + list(missing) + "]";
    }
    if (extra_count) {
      if (missing_count) msg += "; ";
      msg += std::to_string(extra_count) + " embedding ids not in manifest [" + list(extra) + "]";
    }
    throw JoinError(msg);
  }
  return BoundDataset(std::move(emb), std::move(manifest), std::move(rows));
}

inline BoundDataset join_manifest(EmbeddingMatrix emb, DatasetManifest manifest) {
  return join_manifest(std::make_shared<const EmbeddingMatrix>(std::move(emb)),
                       std::make_shared<const DatasetManifest>(std::move(manifest)));
}

}  // namespace pathbench::embstore
