#pragma once

#include <openssl/evp.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "pathbench/embstore/bound_dataset.hpp"
#include "pathbench/embstore/embeddings.hpp"
#include "pathbench/embstore/manifest.hpp"
#include "pathbench/errors.hpp"

namespace pathbench::benchctl {

namespace fs = std::filesystem;
using embstore::TokenVariant;

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out(2 * len, '0');
  for (unsigned int i = 0; i < len; ++i) {
    out[2 * i] = hex[md[i] >> 4];
    out[2 * i + 1] = hex[md[i] & 15];
  }
  return out;
}

inline std::string file_digest(const fs::path& path) {
  const auto bytes = embstore::read_file_bytes(path);
  return sha256_hex({reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

/**
 * On-disk layout under one root directory:
 *   embeddings/<model>/<dataset>/cls.pemb   CLS tokens
 *   embeddings/<model>/<dataset>/mean.pemb  mean patch tokens (CLS+Mean = [cls | mean])
 *   manifests/<dataset>.csv
 *   cache/<key>.json                       one finished cell
 *   reports/                               results.json and rendered tables
 */
class DataStore {
 public:
  explicit DataStore(fs::path root) : root_(std::move(root)) {}

  /// Root from PATHBENCH_ROOT unless `override` is non-empty.
  static DataStore from_env(const std::string& override = {}) {
    if (!override.empty()) return DataStore(override);
    const char* env = std::getenv("PATHBENCH_ROOT");
    if (env == nullptr || *env == '\0') throw ConfigError("no data root: set PATHBENCH_ROOT or pass --root");
    return DataStore(env);
  }

  [[nodiscard]] const fs::path& root() const noexcept { return root_; }
  [[nodiscard]] fs::path embedding_dir(const std::string& model, const std::string& dataset) const {
    return root_ / "embeddings" / model / dataset;
  }
  [[nodiscard]] fs::path cls_path(const std::string& model, const std::string& dataset) const {
    return embedding_dir(model, dataset) / "cls.pemb";
  }
  [[nodiscard]] fs::path mean_path(const std::string& model, const std::string& dataset) const {
    return embedding_dir(model, dataset) / "mean.pemb";
  }
  [[nodiscard]] fs::path manifest_path(const std::string& dataset) const {
    return root_ / "manifests" / (dataset + ".csv");
  }
  [[nodiscard]] fs::path cache_path(const std::string& key) const { return root_ / "cache" / (key + ".json"); }
  [[nodiscard]] fs::path reports_dir() const { return root_ / "reports"; }

  /// Files a (model, dataset, variant) cell reads, in a fixed order.
  [[nodiscard]] std::vector<fs::path> embedding_inputs(const std::string& model, const std::string& dataset,
                                                       TokenVariant v) const {
    if (v == TokenVariant::Cls) return {cls_path(model, dataset)};
    return {cls_path(model, dataset), mean_path(model, dataset)};
  }

 private:
  fs::path root_;
};

inline std::string variant_slug(TokenVariant v) { return v == TokenVariant::Cls ? "cls" : "cls_mean"; }

inline TokenVariant parse_variant_slug(std::string_view s) {
  if (s == "cls" || s == "CLS") return TokenVariant::Cls;
  if (s == "cls_mean" || s == "CLS_MEAN" || s == "cls+mean") return TokenVariant::ClsMean;
  throw UsageError("unknown token variant '" + std::string(s) + "' (expected cls or cls_mean)");
}

/**
 * Loads each manifest and (model, dataset, variant) embedding once and
 * shares the immutable result between worker threads. A load failure is
 * remembered and rethrown to every caller of the same key.
 */
class DatasetCache {
 public:
  explicit DatasetCache(const DataStore& store) : store_(store) {}

  std::shared_ptr<const embstore::BoundDataset> get(const std::string& model, const std::string& dataset,
                                                    TokenVariant v, bool slide_level) {
    auto entry = slot(model + "\n" + dataset + "\n" + variant_slug(v) + (slide_level ? "\nslide" : ""));
    std::call_once(entry->once, [&] {
      try {
        auto manifest = load_manifest(dataset, slide_level);
        auto cls = embstore::read_embeddings(store_.cls_path(model, dataset), model, dataset);
        if (v == TokenVariant::ClsMean) {
          auto mean = embstore::read_embeddings(store_.mean_path(model, dataset), model, dataset);
          cls = embstore::concat_cls_mean(cls, mean);
        }
        entry->value = std::make_shared<const embstore::BoundDataset>(
            embstore::join_manifest(std::make_shared<const embstore::EmbeddingMatrix>(std::move(cls)), manifest));
      } catch (...) {
        entry->error = std::current_exception();
      }
    });
    if (entry->error) std::rethrow_exception(entry->error);
    return entry->value;
  }

 private:
  struct Entry {
    std::once_flag once;
    std::shared_ptr<const embstore::BoundDataset> value;
    std::exception_ptr error;
  };

  std::shared_ptr<Entry> slot(const std::string& key) {
    std::lock_guard lock(mu_);
    auto& e = entries_[key];
    if (!e) e = std::make_shared<Entry>();
    return e;
  }

  std::shared_ptr<const embstore::DatasetManifest> load_manifest(const std::string& dataset, bool slide_level) {
    auto entry = manifest_slot(dataset + (slide_level ? "\n\nslide" : ""));
    std::call_once(entry->once, [&] {
      try {
        entry->value = std::make_shared<const embstore::DatasetManifest>(
            embstore::read_manifest(store_.manifest_path(dataset), dataset, slide_level));
      } catch (...) {
        entry->error = std::current_exception();
      }
    });
    if (entry->error) std::rethrow_exception(entry->error);
    return entry->value;
  }

  struct ManifestEntry {
    std::once_flag once;
    std::shared_ptr<const embstore::DatasetManifest> value;
    std::exception_ptr error;
  };

  std::shared_ptr<ManifestEntry> manifest_slot(const std::string& key) {
    std::lock_guard lock(mu_);
    auto& e = manifests_[key];
    if (!e) e = std::make_shared<ManifestEntry>();
    return e;
  }

  const DataStore& store_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>> entries_;
  std::map<std::string, std::shared_ptr<ManifestEntry>> manifests_;
};

}  // namespace pathbench::benchctl
