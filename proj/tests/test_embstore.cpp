#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "pathbench/embstore.hpp"
#include "pathbench/numkit/rng.hpp"

using namespace pathbench;
using namespace pathbench::embstore;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("pathbench_emb_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

EmbeddingMatrix make_matrix(std::size_t n, std::size_t dim, std::uint64_t seed, TokenVariant v = TokenVariant::Cls) {
  numkit::CounterRng rng(seed);
  EmbeddingMatrix m;
  m.model_id = "model";
  m.dataset_id = "data";
  m.variant = v;
  m.items = numkit::Matrix(n, dim);
  for (float& x : m.items.values()) x = static_cast<float>(rng.normal());
  for (std::size_t i = 0; i < n; ++i) m.item_ids.push_back("slide_" + std::to_string(i % 7) + "/patch_" + std::to_string(i) + ".png");
  return m;
}

EmbeddingFormatError::Code read_error_code(const fs::path& p) {
  try {
    read_embeddings(p);
  } catch (const EmbeddingFormatError& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected EmbeddingFormatError";
  return EmbeddingFormatError::Code::Invalid;
}

}  // namespace

TEST(Embeddings, RoundTripThreeByFour) {
  TempDir dir;
  auto m = make_matrix(3, 4, 1);
  write_embeddings(m, dir.path() / "a.pemb");
  auto back = read_embeddings(dir.path() / "a.pemb", "model", "data");
  EXPECT_EQ(back.items.rows(), 3u);
  EXPECT_EQ(back.items.cols(), 4u);
  EXPECT_EQ(back.item_ids, m.item_ids);
  EXPECT_EQ(std::memcmp(back.items.values().data(), m.items.values().data(), 12 * sizeof(float)), 0);
}

TEST(Embeddings, RoundTripIsBitExactProperty) {
  TempDir dir;
  numkit::CounterRng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    const std::size_t d = 1 + rng.below(70);
    auto m = make_matrix(n, d, 1000 + static_cast<std::uint64_t>(trial),
                         trial % 2 ? TokenVariant::ClsMean : TokenVariant::Cls);
    // Include denormals, signed zeros and extremes.
    m.items(0, 0) = -0.0f;
    if (d > 1) m.items(0, 1) = 1e-45f;
    if (n > 1) m.items(n - 1, d - 1) = 3.4e38f;
    const auto p = dir.path() / "r.pemb";
    write_embeddings(m, p);
    auto back = read_embeddings(p, m.model_id, m.dataset_id);
    ASSERT_EQ(back.variant, m.variant);
    ASSERT_EQ(back.item_ids, m.item_ids);
    ASSERT_EQ(std::memcmp(back.items.values().data(), m.items.values().data(), n * d * sizeof(float)), 0);
    ASSERT_EQ(encode_embeddings(back), encode_embeddings(m));
  }
}

TEST(Embeddings, SingleItemFileSize) {
  TempDir dir;
  EmbeddingMatrix m;
  m.items = numkit::Matrix(1, 3, std::vector<float>{1, 2, 3});
  m.item_ids = {"a/b.png"};
  write_embeddings(m, dir.path() / "one.pemb");
  // 28-byte header + 3 floats + (u16 length + 7 id bytes).
  EXPECT_EQ(fs::file_size(dir.path() / "one.pemb"), 28u + 12u + 2u + 7u);
}

TEST(Embeddings, ZeroDimRejectedBeforeWrite) {
  TempDir dir;
  EmbeddingMatrix m;
  m.items = numkit::Matrix(2, 0);
  m.item_ids = {"a", "b"};
  EXPECT_THROW(write_embeddings(m, dir.path() / "z.pemb"), EmbeddingFormatError);
  EXPECT_FALSE(fs::exists(dir.path() / "z.pemb"));
}

TEST(Embeddings, TruncatedPayloadNamesRow) {
  TempDir dir;
  auto m = make_matrix(10, 4, 2);
  const auto p = dir.path() / "t.pemb";
  write_embeddings(m, p);
  fs::resize_file(p, kHeaderBytes + 9 * 4 * 4 + 5);
  try {
    read_embeddings(p);
    FAIL();
  } catch (const EmbeddingFormatError& e) {
    EXPECT_EQ(e.code(), EmbeddingFormatError::Code::Truncated);
    EXPECT_EQ(e.row(), 9u);
    EXPECT_NE(std::string(e.what()).find("row 9"), std::string::npos);
  }
}

TEST(Embeddings, DistinctCorruptionErrors) {
  TempDir dir;
  auto m = make_matrix(4, 2, 3);
  const auto good = encode_embeddings(m);
  auto write = [&](std::vector<std::uint8_t> bytes) {
    const auto p = dir.path() / "c.pemb";
    write_file_bytes(p, bytes);
    return p;
  };
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(read_error_code(write(bad_magic)), EmbeddingFormatError::Code::BadMagic);
  auto bad_version = good;
  bad_version[4] = 2;
  EXPECT_EQ(read_error_code(write(bad_version)), EmbeddingFormatError::Code::BadVersion);
  auto bad_variant = good;
  bad_variant[20] = 9;
  EXPECT_EQ(read_error_code(write(bad_variant)), EmbeddingFormatError::Code::BadVariant);
  auto short_header = std::vector<std::uint8_t>(good.begin(), good.begin() + 10);
  EXPECT_EQ(read_error_code(write(short_header)), EmbeddingFormatError::Code::Truncated);
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(read_error_code(write(trailing)), EmbeddingFormatError::Code::TrailingBytes);
  auto cut_ids = std::vector<std::uint8_t>(good.begin(), good.end() - 3);
  EXPECT_EQ(read_error_code(write(cut_ids)), EmbeddingFormatError::Code::Truncated);
}

TEST(Embeddings, NaNRowNamesItem) {
  TempDir dir;
  auto m = make_matrix(3, 2, 4);
  auto bytes = encode_embeddings(m);
  const float nan = std::nanf("");
  std::uint32_t bits;
  std::memcpy(&bits, &nan, 4);
  const std::size_t off = kHeaderBytes + (1 * 2 + 1) * 4;  // row 1, column 1
  for (int i = 0; i < 4; ++i) bytes[off + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(bits >> (8 * i));
  const auto p = dir.path() / "nan.pemb";
  write_file_bytes(p, bytes);
  try {
    read_embeddings(p);
    FAIL();
  } catch (const EmbeddingFormatError& e) {
    EXPECT_EQ(e.code(), EmbeddingFormatError::Code::NonFinite);
    EXPECT_NE(std::string(e.what()).find(m.item_ids[1]), std::string::npos);
  }
}

TEST(Embeddings, DuplicateIdRejected) {
  auto m = make_matrix(3, 2, 5);
  m.item_ids[2] = m.item_ids[0];
  try {
    encode_embeddings(m);
    FAIL();
  } catch (const EmbeddingFormatError& e) {
    EXPECT_EQ(e.code(), EmbeddingFormatError::Code::DuplicateId);
  }
}

TEST(ConcatClsMean, Definition) {
  EmbeddingMatrix cls, mean;
  cls.items = numkit::Matrix::from_rows({{1, 2}});
  mean.items = numkit::Matrix::from_rows({{3, 4}});
  cls.item_ids = mean.item_ids = {"x"};
  auto out = concat_cls_mean(cls, mean);
  EXPECT_EQ(out.variant, TokenVariant::ClsMean);
  EXPECT_EQ(out.items, numkit::Matrix::from_rows({{1, 2, 3, 4}}));
}

TEST(ConcatClsMean, MismatchedOrderReportsIndex) {
  auto cls = make_matrix(5, 3, 6);
  auto mean = make_matrix(5, 3, 7);
  std::swap(mean.item_ids[2], mean.item_ids[3]);
  try {
    concat_cls_mean(cls, mean);
    FAIL();
  } catch (const ContractViolation& e) {
    EXPECT_NE(std::string(e.what()).find("index 2"), std::string::npos);
  }
}

TEST(ConcatClsMean, DoublesViTDimensionAndKeepsClsPrefix) {
  TempDir dir;
  auto cls = make_matrix(6, 768, 8);
  auto mean = make_matrix(6, 768, 9);
  auto out = concat_cls_mean(cls, mean);
  write_embeddings(out, dir.path() / "cm.pemb");
  auto back = read_embeddings(dir.path() / "cm.pemb");
  EXPECT_EQ(back.dim(), 1536u);
  EXPECT_EQ(back.variant, TokenVariant::ClsMean);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 768; ++j) ASSERT_EQ(back.items(i, j), cls.items(i, j));
}

TEST(Manifest, ParsesClassificationAndRegression) {
  const std::string cls_text =
      "item_id,label,patient_id,slide_id,split,fold_id\n"
      "\"a,1\",0,p1,s1,train,\n"
      "b,1,p2,s2,test,3\r\n";
  auto m = parse_manifest(cls_text, "toy");
  ASSERT_EQ(m.records.size(), 2u);
  EXPECT_EQ(m.records[0].item_id, "a,1");
  EXPECT_EQ(m.records[1].fold_id.value(), 3);
  EXPECT_EQ(m.records[1].split, SplitTag::Test);
  EXPECT_EQ(m.num_classes(), 2u);
  EXPECT_EQ(parse_manifest(format_manifest(m), "toy").records[0].item_id, "a,1");

  DatasetManifest reg;
  reg.dataset_id = "hest";
  reg.task_kind = TaskKind::Regression;
  for (int i = 0; i < 3; ++i) {
    ManifestRecord r;
    r.item_id = "spot" + std::to_string(i);
    r.patient_id = "p" + std::to_string(i);
    r.slide_id = "s";
    for (std::size_t g = 0; g < kRegressionTargets; ++g) r.targets.push_back(0.1 * static_cast<double>(g) + i / 3.0);
    reg.records.push_back(r);
  }
  auto back = parse_manifest(format_manifest(reg), "hest");
  EXPECT_TRUE(back.is_regression());
  EXPECT_EQ(back.records[2].targets, reg.records[2].targets);
}

TEST(Manifest, RejectsBadInput) {
  EXPECT_THROW(parse_manifest("id,label\nx,1\n", "d"), ParseError);
  EXPECT_THROW(parse_manifest("item_id,label,patient_id,slide_id,split,fold_id\nx,1,p,s,train,\nx,0,p,s,test,\n", "d"),
               ParseError);
  EXPECT_THROW(parse_manifest("item_id,label,patient_id,slide_id,split,fold_id\nx,one,p,s,train,\n", "d"), ParseError);
  EXPECT_THROW(parse_manifest("item_id,label,patient_id,slide_id,split,fold_id\nx,1,p,s,holdout,\n", "d"), ParseError);
}

TEST(Join, ExactMatchKeepsSize) {
  auto emb = make_matrix(8, 3, 10);
  DatasetManifest man;
  man.dataset_id = "d";
  for (std::size_t i = 0; i < 8; ++i) man.records.push_back({emb.item_ids[i], static_cast<int>(i % 2), {}, "p", "s", SplitTag::Train, {}});
  auto bound = join_manifest(emb, man);
  EXPECT_EQ(bound.size(), 8u);
}

TEST(Join, SupersetManifestListsOffender) {
  auto emb = make_matrix(4, 3, 11);
  DatasetManifest man;
  man.dataset_id = "d";
  for (const auto& id : emb.item_ids) man.records.push_back({id, 0, {}, "p", "s", SplitTag::Train, {}});
  man.records.push_back({"ghost.png", 1, {}, "p", "s", SplitTag::Train, {}});
  try {
    join_manifest(emb, man);
    FAIL();
  } catch (const JoinError& e) {
    EXPECT_NE(std::string(e.what()).find("ghost.png"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("1 manifest ids"), std::string::npos);
  }
}

TEST(Join, ShuffledFileOrderRealignsById) {
  auto emb = make_matrix(30, 5, 12);
  DatasetManifest man;
  man.dataset_id = "d";
  for (std::size_t i = 0; i < 30; ++i) man.records.push_back({emb.item_ids[i], static_cast<int>(i % 3), {}, "p", "s", SplitTag::Train, {}});
  // Permute the embedding file rows; the manifest keeps its order.
  numkit::CounterRng rng(5);
  auto perm = rng.permutation(30);
  EmbeddingMatrix shuffled = emb;
  for (std::size_t i = 0; i < 30; ++i) {
    shuffled.item_ids[i] = emb.item_ids[perm[i]];
    for (std::size_t j = 0; j < 5; ++j) shuffled.items(i, j) = emb.items(perm[i], j);
  }
  auto bound = join_manifest(shuffled, man);
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_EQ(bound.record(i).item_id, emb.item_ids[i]);
    EXPECT_EQ(bound.record(i).label, static_cast<int>(i % 3));
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(bound.embedding(i)[j], emb.items(i, j));
  }
}

TEST(ModelCards, ParseAndValidate) {
  TempDir dir;
  const auto p = dir.path() / "cards.json";
  write_file_atomic(p, R"({"models":[{"model_id":"v2","display_name":"Virchow2","parameter_count":632000000,"training_slides":3100000}]})");
  auto cards = read_model_cards(p);
  ASSERT_EQ(cards.size(), 1u);
  EXPECT_EQ(cards[0].parameter_count, 632000000);
  write_file_atomic(p, R"({"model_id":"x","parameter_count":0,"training_slides":5})");
  EXPECT_THROW(read_model_cards(p), ParseError);
}
