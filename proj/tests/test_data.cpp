#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "tpp/data.hpp"
#include "tpp/error.hpp"
#include "tpp/hawkes.hpp"

using namespace tpp;
namespace fs = std::filesystem;

namespace {

fs::path tmp_file(const std::string& name) {
  fs::create_directories(TPP_TEST_TMP);
  return fs::path(TPP_TEST_TMP) / name;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

EventSequence seq(std::vector<double> t, std::vector<int> k, double t_end) { return {std::move(t), std::move(k), t_end}; }

std::vector<EventSequence> numbered(std::size_t n) {
  std::vector<EventSequence> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(seq({1.0 + static_cast<double>(i)}, {0}, 100.0));
  return out;
}

}  // namespace

TEST(Data, LoadsSingleRecordAndInfersK) {
  const auto p = tmp_file("one.jsonl");
  fs::remove(metadata_path(p));
  write_text(p, R"({"times":[1.0,2.5],"types":[0,1],"t_end":3.0})" "\n");
  const Dataset d = load_dataset(p);
  ASSERT_EQ(d.sequences.size(), 1u);
  EXPECT_GE(d.num_types, 2);
  EXPECT_EQ(d.sequences[0].times, (std::vector<double>{1.0, 2.5}));
  EXPECT_EQ(d.sequences[0].t_end, 3.0);
}

TEST(Data, TEndDefaultsToLastEvent) {
  const auto p = tmp_file("noend.jsonl");
  fs::remove(metadata_path(p));
  write_text(p, R"({"times":[0.5,2.0],"types":[0,0],"extra":"ignored"})" "\n");
  EXPECT_EQ(load_dataset(p).sequences[0].t_end, 2.0);
}

TEST(Data, RejectsBadRecords) {
  const auto p = tmp_file("bad.jsonl");
  fs::remove(metadata_path(p));
  write_text(p, R"({"times":[1.0],"types":[0]})" "\n" R"({"times":[2.0,1.0],"types":[0,0]})" "\n");
  try {
    load_dataset(p);
    FAIL() << "expected NonMonotoneTimestamps";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonMonotoneTimestamps);
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
  write_text(p, R"({"times":[1.0,1.0],"types":[0,0]})" "\n");
  EXPECT_THROW(load_dataset(p), Error);
  write_text(p, R"({"times":[1.0,2.0],"types":[0]})" "\n");
  try {
    load_dataset(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaMismatch);
  }
  write_text(p, R"({"stamps":[1.0],"types":[0]})" "\n");
  EXPECT_THROW(load_dataset(p), Error);
  try {
    load_dataset(tmp_file("does_not_exist.jsonl"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingFile);
  }
}

TEST(Data, TypeOutOfDeclaredRange) {
  const auto p = tmp_file("range.jsonl");
  fs::remove(metadata_path(p));
  write_text(p, R"({"times":[1.0],"types":[3]})" "\n");
  DatasetSchema s;
  s.num_types = 2;
  try {
    load_dataset(p, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TypeOutOfRange);
  }
}

TEST(Data, RoundTripIsBitExact) {
  Dataset d;
  d.num_types = 3;
  d.name = "rt";
  d.sequences = generate_hawkes(HawkesParams::univariate(0.5, 0.3, 2.0), 20.0, 5, 11);
  d.sequences.push_back(seq({0.1, 1.0 / 3.0, 2.718281828459045}, {2, 0, 1}, 5.0));
  const auto p = tmp_file("roundtrip.jsonl");
  write_dataset(p, d);
  const Dataset back = load_dataset(p);
  EXPECT_EQ(back.num_types, 3);
  ASSERT_EQ(back.sequences.size(), d.sequences.size());
  for (std::size_t i = 0; i < d.sequences.size(); ++i) EXPECT_EQ(back.sequences[i], d.sequences[i]);
  EXPECT_TRUE(fs::exists(metadata_path(p)));
}

TEST(Data, SplitSizesAndDeterminism) {
  const auto a = split_dataset(numbered(10), {0.8, 0.1, 0.1}, 7);
  EXPECT_EQ(a[0].sequences.size(), 8u);
  EXPECT_EQ(a[1].sequences.size(), 1u);
  EXPECT_EQ(a[2].sequences.size(), 1u);
  const auto b = split_dataset(numbered(10), {0.8, 0.1, 0.1}, 7);
  for (int s = 0; s < 3; ++s) EXPECT_EQ(a[s].sequences, b[s].sequences);

  const auto big = split_dataset(numbered(1800), {1200.0 / 1800, 200.0 / 1800, 400.0 / 1800}, 3);
  EXPECT_EQ(big[0].sequences.size(), 1200u);
  EXPECT_EQ(big[1].sequences.size(), 200u);
  EXPECT_EQ(big[2].sequences.size(), 400u);
}

TEST(Data, SplitIsAPartition) {
  const auto parts = split_dataset(numbered(57), {0.5, 0.3, 0.2}, 99);
  std::multiset<double> seen;
  for (const auto& p : parts)
    for (const auto& s : p.sequences) seen.insert(s.times[0]);
  EXPECT_EQ(seen.size(), 57u);
  EXPECT_EQ(std::set<double>(seen.begin(), seen.end()).size(), 57u);
  EXPECT_EQ(parts[0].split, Split::Train);
  EXPECT_EQ(parts[2].split, Split::Test);
}

TEST(Data, SplitRejectsBadRatios) {
  try {
    split_dataset(numbered(10), {0.5, 0.5, 0.5}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadRatios);
  }
  EXPECT_THROW(split_dataset(numbered(10), {1.0, 0.0, 0.0}, 1), Error);
}

TEST(Data, PadBatchMasks) {
  const auto b = pad_batch({seq({1.0, 2.0, 3.0}, {0, 1, 0}, 4.0), seq({1.0, 2.5, 4.0, 5.0, 6.0}, {1, 1, 0, 0, 1}, 7.0)}, 2);
  EXPECT_EQ(b.max_len, 5u);
  const std::vector<std::uint8_t> row0(b.seq_mask.begin(), b.seq_mask.begin() + 5);
  EXPECT_EQ(row0, (std::vector<std::uint8_t>{1, 1, 1, 0, 0}));
  EXPECT_EQ(b.type(0, 4), 2);
  EXPECT_EQ(b.time(0, 4), 0.0);
  EXPECT_EQ(b.dtime(1, 0), 1.0);
  EXPECT_EQ(b.dtime(1, 1), 1.5);
  EXPECT_EQ(b.dtime(1, 2), 1.5);
  std::size_t mask_sum = 0;
  for (auto m : b.seq_mask) mask_sum += m;
  EXPECT_EQ(mask_sum, 8u);
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_TRUE(b.attn(r, 0, 0));
    for (std::size_t j = 1; j < 5; ++j) EXPECT_FALSE(b.attn(r, 0, j));
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        if (b.attn(r, i, j)) EXPECT_TRUE(b.mask(r, i) && b.mask(r, j) && j <= i);
  }
}

TEST(Data, UnpadRecoversSequences) {
  const std::vector<EventSequence> in = {seq({0.5}, {0}, 1.0), seq({}, {}, 2.0), seq({0.1, 0.2, 0.9}, {1, 0, 1}, 1.5)};
  EXPECT_EQ(unpad(pad_batch(in, 2)), in);
}

TEST(Data, PadBatchErrors) {
  try {
    pad_batch({}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyBatch);
  }
  EXPECT_THROW(pad_batch({seq({1.0}, {0}, 1.0)}, 2, 5), Error);
}
