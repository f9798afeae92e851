#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "pathbench/embstore/binary_io.hpp"
#include "pathbench/errors.hpp"
#include "pathbench/numkit/matrix.hpp"

namespace pathbench::embstore {

enum class TokenVariant : std::uint8_t { Cls = 0, ClsMean = 1 };

inline std::string_view to_string(TokenVariant v) { return v == TokenVariant::Cls ? "CLS" : "CLS_MEAN"; }

inline TokenVariant parse_variant(std::string_view s) {
  if (s == "CLS" || s == "cls") return TokenVariant::Cls;
  if (s == "CLS_MEAN" || s == "cls_mean" || s == "CLS+Mean") return TokenVariant::ClsMean;
  throw ParseError("unknown token variant '" + std::string(s) + "'");
}

/// One dataset's embeddings from one model and token variant, one row per item.
struct EmbeddingMatrix {
  std::string model_id;
  std::string dataset_id;
  TokenVariant variant = TokenVariant::Cls;
  numkit::Matrix items;
  std::vector<std::string> item_ids;

  [[nodiscard]] std::size_t dim() const noexcept { return items.cols(); }
  [[nodiscard]] std::size_t size() const noexcept { return items.rows(); }
};

/// Distinct failure modes of the embedding container.
class EmbeddingFormatError : public ParseError {
 public:
  enum class Code { BadMagic, BadVersion, BadVariant, Truncated, NonFinite, DuplicateId, BadId, TrailingBytes, Invalid };

  EmbeddingFormatError(Code code, std::string message, std::size_t offset = 0, std::size_t row = 0)
      : ParseError(std::move(message)), code_(code), offset_(offset), row_(row) {}

  [[nodiscard]] Code code() const noexcept { return code_; }
  [[nodiscard]] std::size_t offset() const noexcept { return offset_; }
  [[nodiscard]] std::size_t row() const noexcept { return row_; }

 private:
  Code code_;
  std::size_t offset_;
  std::size_t row_;
};

inline constexpr std::string_view kEmbeddingMagic = "PEMB";
inline constexpr std::uint32_t kFormatVersion = 1;
// magic(4) + version(4) + dim(4) + row_count(8) + variant(1) + reserved(7)
inline constexpr std::size_t kHeaderBytes = 28;

/// Checks the in-memory invariants; throws EmbeddingFormatError.
inline void validate(const EmbeddingMatrix& m) {
  using Code = EmbeddingFormatError::Code;
  if (m.dim() == 0) throw EmbeddingFormatError(Code::Invalid, "embedding dimension must be positive");
  if (m.item_ids.size() != m.items.rows()) {
    throw EmbeddingFormatError(Code::Invalid, "item id count " + std::to_string(m.item_ids.size()) +
                                                  " differs from row count " + std::to_string(m.items.rows()));
  }
  std::unordered_set<std::string_view> seen;
  seen.reserve(m.item_ids.size());
  for (std::size_t i = 0; i < m.item_ids.size(); ++i) {
    const auto& id = m.item_ids[i];
    if (id.empty() || id.size() > 0xFFFF) {
      throw EmbeddingFormatError(Code::BadId, "item id at row " + std::to_string(i) + " has invalid length", 0, i);
    }
    if (!seen.insert(id).second) {
      throw EmbeddingFormatError(Code::DuplicateId, "duplicate item id '" + id + "' at row " + std::to_string(i), 0, i);
    }
  }
  for (std::size_t r = 0; r < m.items.rows(); ++r) {
    for (float v : m.items.row(r)) {
      if (!std::isfinite(v)) {
        throw EmbeddingFormatError(Code::NonFinite, "non-finite embedding value for item '" + m.item_ids[r] + "'", 0, r);
      }
    }
  }
}

inline std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& m) {
  validate(m);
  ByteWriter w;
  w.bytes(kEmbeddingMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(m.dim()));
  w.u64(m.size());
  w.u8(static_cast<std::uint8_t>(m.variant));
  w.zeros(7);
  for (float v : m.items.values()) w.f32(v);
  for (const auto& id : m.item_ids) {
    w.u16(static_cast<std::uint16_t>(id.size()));
    w.bytes(id);
  }
  return w.buffer();
}

inline EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> data) {
  using Code = EmbeddingFormatError::Code;
  ByteReader r(data);
  if (!r.has(kHeaderBytes)) {
    throw EmbeddingFormatError(Code::Truncated, "file shorter than the " + std::to_string(kHeaderBytes) + "-byte header",
                               data.size());
  }
  if (r.bytes(4) != kEmbeddingMagic) throw EmbeddingFormatError(Code::BadMagic, "bad magic, expected PEMB", 0);
  const auto version = r.u32();
  if (version != kFormatVersion) {
    throw EmbeddingFormatError(Code::BadVersion, "unsupported format version " + std::to_string(version), 4);
  }
  const std::size_t dim = r.u32();
  const std::size_t rows = r.u64();
  const auto variant = r.u8();
  if (variant > 1) throw EmbeddingFormatError(Code::BadVariant, "unknown variant tag " + std::to_string(variant), 20);
  r.skip(7);
  if (dim == 0) throw EmbeddingFormatError(Code::Invalid, "embedding dimension is zero", 8);

  const std::size_t row_bytes = dim * 4;
  if (r.remaining() / row_bytes < rows) {
    const std::size_t complete = r.remaining() / row_bytes;
    throw EmbeddingFormatError(Code::Truncated,
                               "payload truncated at row " + std::to_string(complete) + " of " + std::to_string(rows),
                               r.offset() + complete * row_bytes, complete);
  }
  std::vector<float> values(rows * dim);
  for (auto& v : values) v = r.f32();

  EmbeddingMatrix m;
  m.variant = static_cast<TokenVariant>(variant);
  m.item_ids.reserve(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!r.has(2)) {
      throw EmbeddingFormatError(Code::Truncated, "id table truncated at row " + std::to_string(i), r.offset(), i);
    }
    const std::size_t len = r.u16();
    if (!r.has(len)) {
      throw EmbeddingFormatError(Code::Truncated, "id table truncated at row " + std::to_string(i), r.offset(), i);
    }
    m.item_ids.emplace_back(r.bytes(len));
  }
  if (r.remaining() != 0) {
    throw EmbeddingFormatError(Code::TrailingBytes, std::to_string(r.remaining()) + " trailing bytes after id table",
                               r.offset());
  }
  // Build the matrix without the constructor's finiteness check so the
  // validation error can name the item.
  m.items = numkit::Matrix(rows, dim);
  std::copy(values.begin(), values.end(), m.items.values().begin());
  validate(m);
  return m;
}

inline void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  const auto bytes = encode_embeddings(m);
  try {
    write_file_bytes(path, bytes);
  } catch (const IoError& e) {
    throw IoError(std::string("write_embeddings: ") + e.what());
  }
}

/// Reads and validates an embedding file. The ids are not stored in the
/// container, so callers pass them in (or leave them empty).
inline EmbeddingMatrix read_embeddings(const std::filesystem::path& path, std::string model_id = {},
                                       std::string dataset_id = {}) {
  const auto bytes = read_file_bytes(path);
  EmbeddingMatrix m;
  try {
    m = decode_embeddings(bytes);
  } catch (const EmbeddingFormatError& e) {
    throw EmbeddingFormatError(e.code(), path.string() + ": " + e.what(), e.offset(), e.row());
  }
  m.model_id = std::move(model_id);
  m.dataset_id = std::move(dataset_id);
  return m;
}

/**
 * Row-wise concatenation [cls | mean] producing the CLS+Mean variant.
 * Both inputs must describe the same items in the same order.
 */
inline EmbeddingMatrix concat_cls_mean(const EmbeddingMatrix& cls, const EmbeddingMatrix& mean) {
  if (cls.model_id != mean.model_id || cls.dataset_id != mean.dataset_id) {
    throw ContractViolation("concat_cls_mean: model/dataset ids differ");
  }
  if (cls.variant != TokenVariant::Cls) throw ContractViolation("concat_cls_mean: first input must be the CLS variant");
  if (cls.dim() != mean.dim()) {
    throw ContractViolation("concat_cls_mean: dims differ (" + std::to_string(cls.dim()) + " vs " +
                            std::to_string(mean.dim()) + ")");
  }
  const std::size_t n = std::min(cls.item_ids.size(), mean.item_ids.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (cls.item_ids[i] != mean.item_ids[i]) {
      throw ContractViolation("concat_cls_mean: item order diverges at index " + std::to_string(i) + " ('" +
                              cls.item_ids[i] + "' vs '" + mean.item_ids[i] + "')");
    }
  }
  if (cls.item_ids.size() != mean.item_ids.size()) {
    throw ContractViolation("concat_cls_mean: item order diverges at index " + std::to_string(n) + " (length mismatch)");
  }
  EmbeddingMatrix out;
  out.model_id = cls.model_id;
  out.dataset_id = cls.dataset_id;
  out.variant = TokenVariant::ClsMean;
  out.item_ids = cls.item_ids;
  const std::size_t d = cls.dim();
  out.items = numkit::Matrix(cls.size(), 2 * d);
  for (std::size_t i = 0; i < cls.size(); ++i) {
    auto dst = out.items.row(i);
    std::copy(cls.items.row(i).begin(), cls.items.row(i).end(), dst.begin());
    std::copy(mean.items.row(i).begin(), mean.items.row(i).end(), dst.begin() + static_cast<std::ptrdiff_t>(d));
  }
  return out;
}

}  // namespace pathbench::embstore
