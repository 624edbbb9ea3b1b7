#include <gtest/gtest.h>

#include <atomic>
#include <bit>
#include <filesystem>
#include <limits>

#include <unistd.h>

#include "fixtures.hpp"

namespace xeval {
namespace {

namespace fs = std::filesystem;

fs::path TempPath(const std::string& name) {
  return fs::temp_directory_path() / ("xeval_io_test_" + std::to_string(::getpid()) + "_" + name);
}

TEST(DumpTest, RoundTripIsBitExact) {
  AttributionDump dump;
  dump.feature_names = {"a", "b", "c"};
  dump.metadata["seed"] = 7;
  dump.metadata["explainers"] = {"grad", "shapley_wls"};
  dump.rows.push_back({{0.1, -1.0 / 3.0, 1e-300}, 4, "grad", true});
  dump.rows.push_back({{std::numeric_limits<double>::denorm_min(), 0.0, -0.0}, std::nullopt, "mean", false});
  const std::string text = FormatDump(dump);
  const AttributionDump back = ParseDump(text);
  EXPECT_EQ(back.feature_names, dump.feature_names);
  EXPECT_EQ(back.metadata, dump.metadata);
  ASSERT_EQ(back.rows.size(), 2u);
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_EQ(back.rows[r].input_id, dump.rows[r].input_id);
    EXPECT_EQ(back.rows[r].explainer_name, dump.rows[r].explainer_name);
    EXPECT_EQ(back.rows[r].normalized, dump.rows[r].normalized);
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(std::bit_cast<std::uint64_t>(back.rows[r].values[j]),
                std::bit_cast<std::uint64_t>(dump.rows[r].values[j]));
    }
  }
  EXPECT_EQ(FormatDump(back), text);
}

TEST(DumpTest, ParseErrors) {
  auto code = [](const std::string& text) {
    try {
      ParseDump(text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInvalidArgument;
  };
  EXPECT_EQ(code(""), ErrorCode::kParseError);
  EXPECT_EQ(code("input_id\texplainer\tnormalized\ta\n1\tgrad\t1\n"), ErrorCode::kParseError);
  EXPECT_EQ(code("input_id\texplainer\tnormalized\ta\n1\tgrad\t1\tx\n"), ErrorCode::kParseError);
  EXPECT_EQ(code("# k\t{bad\ninput_id\texplainer\tnormalized\ta\n"), ErrorCode::kParseError);
  AttributionDump bad;
  bad.feature_names = {"a"};
  bad.rows.push_back({{1.0, 2.0}, 0, "grad", false});
  EXPECT_THROW(FormatDump(bad), Error);
}

TEST(FileTest, AtomicWriteReplacesContent) {
  const fs::path p = TempPath("atomic.txt");
  WriteFileAtomic(p, "first");
  WriteFileAtomic(p, "second");
  EXPECT_EQ(ReadFile(p), "second");
  EXPECT_FALSE(fs::exists(p.string() + ".tmp"));
  fs::remove(p);
  try {
    ReadFile(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoError);
  }
  EXPECT_THROW(WriteFileAtomic(TempPath("missing_dir") / "x.txt", "x"), Error);
}

TEST(ParallelTest, CoversEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(1000);
  ParallelFor(hits.size(), [&](std::size_t i) { hits[i]++; }, 8);
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  ParallelFor(0, [](std::size_t) { FAIL(); }, 4);
}

TEST(ParallelTest, RethrowsLowestIndexError) {
  for (std::size_t workers : {1u, 4u}) {
    try {
      ParallelFor(100, [](std::size_t i) {
        if (i % 10 == 3) Fail(ErrorCode::kInvalidArgument, std::to_string(i));
      }, workers);
      FAIL();
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
    }
  }
}

}  // namespace
}  // namespace xeval
