#include "cras/tensor_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace cras {
namespace {

namespace fs = std::filesystem;

TEST(TensorStoreTest, HeaderArithmeticForSmallFloatTensor) {
  TempDir dir;
  const fs::path path = dir.path() / "zeros.crft";
  write_tensor(path, FeatureMap(3, 2, 2, 0.0f));
  EXPECT_EQ(fs::file_size(path), 68u);  // 4 + 2 + 1 + 1 + 3*4 + 12*4

  const std::string bytes = read_file(path);
  EXPECT_EQ(bytes.substr(0, 4), "CRFT");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 1);  // float32
  EXPECT_EQ(bytes[7], 3);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 3);
}

TEST(TensorStoreTest, LittleEndianPayload) {
  const std::string bytes = encode_tensor(to_stored(FeatureMap(1, 1, 1, 1.0f)));
  // 1.0f = 0x3f800000
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 4]), 0x00);
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 1]), 0x3f);
}

TEST(TensorStoreTest, RoundTripIsBitExact) {
  std::mt19937 gen(7);
  std::uniform_real_distribution<float> dist(-1e6f, 1e6f);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> dim(1, 9);
    FeatureMap map(dim(gen), dim(gen), dim(gen));
    for (auto& v : map.storage()) v = dist(gen);
    map.storage()[0] = std::numeric_limits<float>::denorm_min();
    map.storage()[map.size() - 1] = -0.0f;
    std::size_t offset = 0;
    const std::string bytes = encode_tensor(to_stored(map));
    const FeatureMap back = as_feature_map(decode_tensor(bytes, offset, true));
    ASSERT_EQ(back.channels(), map.channels());
    ASSERT_EQ(0, std::memcmp(back.storage().data(), map.storage().data(), map.size() * 4));
  }
}

TEST(TensorStoreTest, MaskRoundTripThroughFile) {
  TempDir dir;
  Mask mask(3, 5, 0);
  mask(1, 2) = 255;
  write_tensor(dir.path() / "m.crft", mask);
  const StoredTensor raw = read_tensor(dir.path() / "m.crft");
  EXPECT_EQ(raw.dtype(), DType::kUInt8);
  EXPECT_EQ(read_mask(dir.path() / "m.crft"), mask);
}

TEST(TensorStoreTest, NonFiniteValueNamesFlatIndex) {
  FeatureMap map(2, 2, 2, 0.5f);
  map(1, 0, 1) = std::nanf("");
  try {
    encode_tensor(to_stored(map));
    FAIL() << "expected kNonFinite";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
    EXPECT_NE(std::string(e.what()).find("flat index 5"), std::string::npos) << e.what();
  }
}

TEST(TensorStoreTest, DistinctErrorCodesForCorruptFiles) {
  TempDir dir;
  const fs::path good = dir.path() / "good.crft";
  write_tensor(good, FeatureMap(2, 3, 4, 1.0f));
  std::string bytes = read_file(good);

  auto expect_code = [&](const std::string& contents, ErrorCode code) {
    const fs::path p = dir.path() / "bad.crft";
    atomic_write_file(p, contents);
    try {
      read_tensor(p);
      FAIL() << "expected " << to_string(code);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), code) << e.what();
    }
  };

  std::string magic = bytes;
  magic.replace(0, 4, "XXXX");
  expect_code(magic, ErrorCode::kBadMagic);

  std::string version = bytes;
  version[4] = 2;
  expect_code(version, ErrorCode::kBadVersion);

  expect_code(bytes.substr(0, bytes.size() - 1), ErrorCode::kTruncated);
  expect_code(bytes + "x", ErrorCode::kTruncated);
  expect_code(bytes.substr(0, 5), ErrorCode::kTruncated);

  std::string ndim = bytes;
  ndim[7] = 4;
  expect_code(ndim, ErrorCode::kFormat);
}

TEST(TensorStoreTest, RejectsMissingFile) {
  TempDir dir;
  EXPECT_THROW_CODE(read_tensor(dir.path() / "nope.crft"), ErrorCode::kIo);
}

TEST(TensorStoreTest, AtomicRewriteLeavesNoTemporaries) {
  TempDir dir;
  const fs::path path = dir.path() / "t.crft";
  write_tensor(path, FeatureMap(1, 2, 2, 1.0f));
  write_tensor(path, FeatureMap(1, 2, 2, 2.0f));
  EXPECT_EQ(read_feature_map(path), FeatureMap(1, 2, 2, 2.0f));
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path())) ++files;
  EXPECT_EQ(files, 1u);
}

// ---------------------------------------------------------------------------

std::string header() { return "{\"manifest_version\":1}\n"; }

std::string record(const std::string& path, const std::string& cat, const std::string& split,
                   const std::string& label) {
  return "{\"path\":\"" + path + "\",\"category\":\"" + cat + "\",\"sample_id\":\"" + path +
         "\",\"split\":\"" + split + "\",\"label\":\"" + label + "\"}\n";
}

TEST(ManifestTest, CollectsCategoriesInLexicographicOrder) {
  const auto m = parse_manifest(header() + record("x", "b", "train", "normal") +
                                    record("y", "a", "test", "anomalous"),
                                "/data");
  ASSERT_EQ(m.categories.size(), 2u);
  EXPECT_EQ(m.categories[0], "a");
  EXPECT_EQ(m.categories[1], "b");
  EXPECT_EQ(m.resolve("x"), fs::path("/data/x"));
  EXPECT_EQ(m.category_index("b"), 1u);
}

TEST(ManifestTest, CategoryOrderIndependentOfRecordOrder) {
  std::vector<std::string> names;
  for (int i = 0; i < 15; ++i) names.push_back("cat" + std::to_string(i));
  std::mt19937 gen(3);
  std::vector<std::string> first;
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(names.begin(), names.end(), gen);
    std::string text = header();
    for (const auto& n : names) text += record(n + ".crft", n, "train", "normal");
    const auto m = parse_manifest(text, ".");
    ASSERT_EQ(m.categories.size(), 15u);
    EXPECT_TRUE(std::is_sorted(m.categories.begin(), m.categories.end()));
    if (trial == 0) first = m.categories;
    EXPECT_EQ(m.categories, first);
  }
}

TEST(ManifestTest, RejectsAnomalousTrainEntry) {
  EXPECT_THROW_CODE(parse_manifest(header() + record("x", "a", "train", "anomalous"), "."),
                    ErrorCode::kManifest);
}

TEST(ManifestTest, RejectsDuplicatePath) {
  EXPECT_THROW_CODE(parse_manifest(header() + record("x", "a", "train", "normal") +
                                       record("x", "b", "test", "normal"),
                                   "."),
                    ErrorCode::kManifest);
}

TEST(ManifestTest, RequiresVersionHeader) {
  EXPECT_THROW_CODE(parse_manifest(record("x", "a", "train", "normal"), "."),
                    ErrorCode::kManifest);
  EXPECT_THROW_CODE(parse_manifest("{\"manifest_version\":2}\n", "."), ErrorCode::kBadVersion);
}

TEST(ManifestTest, EagerValidationReportsMissingFile) {
  TempDir dir;
  atomic_write_file(dir.path() / "m.jsonl", header() + record("missing.crft", "a", "train", "normal"));
  EXPECT_NO_THROW(load_manifest(dir.path() / "m.jsonl"));
  EXPECT_THROW_CODE(load_manifest(dir.path() / "m.jsonl", {.eager_validation = true}),
                    ErrorCode::kIo);
}

TEST(ManifestTest, SerializeParseRoundTrip) {
  std::vector<ManifestEntry> entries = {
      {"f/a.crft", "bottle", "a", Split::kTrain, Label::kNormal, {}, 2},
      {"f/b.crft", "bottle", "a", Split::kTrain, Label::kNormal, {}, 3},
      {"f/c.crft", "cable", "c", Split::kTest, Label::kAnomalous, "m/c.crft", {}},
  };
  const auto m = parse_manifest(serialize_manifest(entries), ".");
  EXPECT_EQ(m.entries, entries);
}

TEST(ManifestTest, GroupsLevelsPerSample) {
  std::vector<ManifestEntry> entries = {
      {"a3", "k", "a", Split::kTrain, Label::kNormal, {}, 3},
      {"a2", "k", "a", Split::kTrain, Label::kNormal, {}, 2},
      {"b", "k", "b", Split::kTest, Label::kNormal, {}, {}},
  };
  const auto m = parse_manifest(serialize_manifest(entries), ".");
  const auto train = group_samples(m, Split::kTrain);
  ASSERT_EQ(train.size(), 1u);
  ASSERT_EQ(train[0].levels.size(), 2u);
  EXPECT_EQ(train[0].levels[0], (std::pair<int, std::string>{2, "a2"}));
  const auto test = group_samples(m, Split::kTest);
  ASSERT_EQ(test.size(), 1u);
  EXPECT_EQ(test[0].merged_path, "b");
}

}  // namespace
}  // namespace cras
