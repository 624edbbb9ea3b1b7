#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "fixtures.hpp"

namespace xeval {
namespace {

std::filesystem::path WriteTemp(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / ("xeval_data_test_" + name);
  std::ofstream out(p);
  out << body;
  return p;
}

TEST(LoadCsvTest, BasicShape) {
  const auto p = WriteTemp("basic.csv", "a,b,label\n1,2,0\n3,4,1\n5,6,0\n");
  const Dataset ds = LoadCsv(p, "label", false);
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.dim(), 2u);
  EXPECT_EQ(ds.feature_names(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(ds.label(1), 1);
  EXPECT_EQ(ds.row(2)[1], 6.0);
}

TEST(LoadCsvTest, LabelColumnAnywhere) {
  const auto p = WriteTemp("mid.csv", "a,y,b\n1,2,3\n");
  const Dataset ds = LoadCsv(p, "y", false);
  EXPECT_EQ(ds.label(0), 2);
  EXPECT_EQ(ds.row(0)[1], 3.0);
}

TEST(LoadCsvTest, BadCellNamesRowAndColumn) {
  const auto p = WriteTemp("bad.csv", "a,b,label\n1,2,0\n3,abc,1\n");
  try {
    LoadCsv(p, "label", false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 2"), std::string::npos);
    EXPECT_NE(msg.find("'b'"), std::string::npos);
  }
}

TEST(LoadCsvTest, MissingLabelColumn) {
  const auto p = WriteTemp("nolabel.csv", "a,b\n1,2\n");
  try {
    LoadCsv(p, "label", false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingLabelColumn);
  }
}

TEST(LoadCsvTest, MissingFile) {
  try {
    LoadCsv("/nonexistent/x.csv", "label", false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoError);
  }
}

TEST(LoadCsvTest, NormalizeGivesZeroMeanUnitStd) {
  const Dataset ds = testing::LoadIris();
  ASSERT_TRUE(ds.normalization().has_value());
  for (std::size_t j = 0; j < ds.dim(); ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) m += ds.row(i)[j];
    m /= static_cast<double>(ds.size());
    double ss = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) ss += (ds.row(i)[j] - m) * (ds.row(i)[j] - m);
    EXPECT_NEAR(m, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(ss / static_cast<double>(ds.size() - 1)), 1.0, 1e-9);
  }
}

TEST(LoadCsvTest, ConstantColumnStaysZero) {
  const auto p = WriteTemp("const.csv", "a,b,label\n1,7,0\n2,7,1\n3,7,0\n");
  const Dataset ds = LoadCsv(p, "label", true);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(ds.row(i)[1], 0.0);
  EXPECT_EQ((*ds.normalization())[1].stddev, 1.0);
}

TEST(SaveCsvTest, RoundTripIsExact) {
  Rng rng(4);
  Dataset ds = testing::Blobs(rng, {{0, 0, 0}, {1, 2, 3}}, 20, 0.7);
  const auto p = std::filesystem::temp_directory_path() / "xeval_data_test_rt.csv";
  SaveCsv(ds, p, "label");
  const Dataset back = LoadCsv(p, "label", false);
  EXPECT_TRUE(BitEqual(ds.features(), back.features()));
  EXPECT_EQ(ds.labels(), back.labels());
}

TEST(BaselineTest, Kinds) {
  const Dataset ds(2, {1, 3, 3, 5}, {0, 1});
  EXPECT_EQ(MakeBaseline(ds, BaselineKind::kZero).values, (Vector{0, 0}));
  EXPECT_EQ(MakeBaseline(ds, BaselineKind::kTrainingMean).values, (Vector{2, 4}));
  EXPECT_EQ(MakeBaseline(ds, BaselineKind::kExplicit, Vector{7, 8}).values, (Vector{7, 8}));
  try {
    MakeBaseline(ds, BaselineKind::kExplicit, Vector{1, 2, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
  EXPECT_EQ(ZeroBaseline(4).values, Vector(4, 0.0));
}

TEST(NeighborhoodTest, RadiusBelowMinDistanceIsEmpty) {
  const Dataset ds(1, {0, 1, 2}, {0, 0, 0});
  NeighborhoodSpec spec{0.5, Norm::kLInf, false};
  EXPECT_TRUE(Neighborhood(ds, nullptr, Vector{10}, spec).empty());
}

TEST(NeighborhoodTest, ExcludesExactQueryRow) {
  const Dataset ds(2, {0, 0, 0, 0.5, 0, 2}, {0, 0, 0});
  const auto n = Neighborhood(ds, nullptr, Vector{0, 0}, {1.0, Norm::kLInf, false});
  ASSERT_EQ(n.size(), 1u);
  EXPECT_EQ(n[0].row, 1u);
  EXPECT_DOUBLE_EQ(n[0].distance, 0.5);
}

TEST(NeighborhoodTest, SamePredictionMatchesBruteForce) {
  Rng rng(8);
  const Model m = testing::RandomModel(rng, {3, 5, 3});
  Dataset ds = testing::Blobs(rng, {{0, 0, 0}}, 200, 1.0);
  for (int t = 0; t < 20; ++t) {
    const Vector x = testing::RandomVector(rng, 3);
    const NeighborhoodSpec spec{1.2, Norm::kL2, true};
    const auto got = Neighborhood(ds, &m, x, spec);
    std::vector<std::size_t> expect;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 3; ++j) s += (x[j] - ds.row(i)[j]) * (x[j] - ds.row(i)[j]);
      if (std::sqrt(s) <= 1.2 && m.PredictedClass(ds.row(i)) == m.PredictedClass(x)) expect.push_back(i);
    }
    std::vector<std::size_t> rows;
    for (const auto& nb : got) rows.push_back(nb.row);
    std::sort(rows.begin(), rows.end());
    EXPECT_EQ(rows, expect);
    for (std::size_t i = 1; i < got.size(); ++i) EXPECT_LE(got[i - 1].distance, got[i].distance);
  }
}

TEST(NeighborhoodTest, MonotoneInRadius) {
  Rng rng(12);
  Dataset ds = testing::Blobs(rng, {{0, 0}}, 100, 1.0);
  const Vector x{0.1, -0.2};
  std::size_t prev = 0;
  for (double r : {0.1, 0.3, 0.6, 1.0, 2.0}) {
    const auto n = Neighborhood(ds, nullptr, x, {r, Norm::kLInf, false});
    EXPECT_GE(n.size(), prev);
    prev = n.size();
  }
}

TEST(NearestNeighborsTest, SingleNearest) {
  const Dataset ds(1, {0, 10}, {0, 0});
  const auto n = NearestNeighbors(ds, Vector{1}, 1, Norm::kLInf);
  ASSERT_EQ(n.size(), 1u);
  EXPECT_EQ(n[0].row, 0u);
  EXPECT_DOUBLE_EQ(n[0].distance, 1.0);
}

TEST(NearestNeighborsTest, MatchesSortOracle) {
  Rng rng(21);
  Dataset ds = testing::Blobs(rng, {{0, 0, 0}}, 50, 1.0);
  for (int t = 0; t < 10; ++t) {
    const Vector x = testing::RandomVector(rng, 3);
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < ds.size(); ++i) all.emplace_back(Distance(x, ds.row(i), Norm::kL1), i);
    std::sort(all.begin(), all.end());
    const auto n = NearestNeighbors(ds, x, 5, Norm::kL1);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(n[i].row, all[i].second);
    const auto n6 = NearestNeighbors(ds, x, 6, Norm::kL1);
    EXPECT_GE(n6[5].distance, n[4].distance);
  }
  const auto whole = NearestNeighbors(ds, Vector{0, 0, 0}, ds.size(), Norm::kL2);
  EXPECT_EQ(whole.size(), ds.size());
}

TEST(NearestNeighborsTest, KTooLargeAfterExcludingDuplicates) {
  const Dataset ds(1, {0, 1}, {0, 0});
  try {
    NearestNeighbors(ds, Vector{0}, 2, Norm::kLInf);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kKTooLarge);
  }
}

TEST(NearestNeighborsTest, DistanceClamped) {
  const Dataset ds(1, {1e-300, 5}, {0, 0});
  const auto n = NearestNeighbors(ds, Vector{0}, 1, Norm::kLInf);
  EXPECT_EQ(n[0].distance, kMinDistance);
}

TEST(SplitTest, DeterministicPartition) {
  const Split a = TrainTestSplit(150, 0.8, 3), b = TrainTestSplit(150, 0.8, 3);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.train.size(), 120u);
  EXPECT_EQ(a.test.size(), 30u);
  std::vector<std::size_t> all = a.train;
  all.insert(all.end(), a.test.begin(), a.test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 150; ++i) EXPECT_EQ(all[i], i);
}

}  // namespace
}  // namespace xeval
