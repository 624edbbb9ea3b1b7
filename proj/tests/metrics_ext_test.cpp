#include <gtest/gtest.h>

#include <cmath>
#include <optional>

#include "fixtures.hpp"

namespace xeval {
namespace {

using testing::RandomModel;
using testing::RandomVector;

Explainer Configured(const Model& m, ExplainerKind kind, std::size_t permutations = 1000,
                     TargetKind target = TargetKind::kProba) {
  ExplainerConfig c;
  c.kind = kind;
  c.permutations = permutations;
  c.target = target;
  return MakeExplainer(m, c);
}

TEST(IdentityTest, DeterministicExplainersScoreZero) {
  Rng rng(1);
  const Model m = RandomModel(rng, {4, 5, 3});
  const Dataset ds = testing::Blobs(rng, {{0, 0, 0, 0}}, 15, 1.0);
  EXPECT_EQ(IdentityScore(Configured(m, ExplainerKind::kGrad), ds), 0.0);
  EXPECT_EQ(IdentityScore(Configured(m, ExplainerKind::kExactShapley), ds), 0.0);
  EXPECT_EQ(IdentityScore(Configured(m, ExplainerKind::kShapleyWls), ds), 0.0);
}

TEST(IdentityTest, SamplingDiffersAndMatchesLoopOracle) {
  Rng rng(2);
  const Model m = RandomModel(rng, {4, 5, 3});
  const Dataset ds = testing::Blobs(rng, {{0, 0, 0, 0}}, 15, 1.0);
  const Explainer g = Configured(m, ExplainerKind::kShapleySampling, 10);
  double oracle = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Vector a = g(ds.row(i), 0), b = g(ds.row(i), 1);
    for (std::size_t j = 0; j < a.size(); ++j) oracle += std::abs(a[j] - b[j]) > 1e-12 ? 1.0 : 0.0;
  }
  oracle /= static_cast<double>(ds.size());
  const double score = IdentityScore(g, ds);
  EXPECT_GT(score, 0.0);
  EXPECT_DOUBLE_EQ(score, oracle);
}

TEST(SeparabilityTest, ConstantAndAllDistinct) {
  const Vector w{1.0, -2.0, 0.5};
  const Model m = testing::LinearScore(w);
  Rng rng(3);
  const Dataset ds = testing::Blobs(rng, {{0, 0, 0}}, 10, 1.0);
  ExplainerConfig c;
  c.kind = ExplainerKind::kGrad;
  c.target = TargetKind::kLogit;
  EXPECT_EQ(SeparabilityScore(MakeExplainer(m, c), ds), 0.0);
  c.kind = ExplainerKind::kGradTimesInput;
  EXPECT_EQ(SeparabilityScore(MakeExplainer(m, c), ds), 3.0);
}

TEST(SeparabilityTest, MatchesAllPairsOracle) {
  Rng rng(4);
  const Model m = RandomModel(rng, {3, 4, 2}, Activation::Relu());
  const Dataset ds = testing::Blobs(rng, {{0, 0, 0}}, 20, 1.0);
  const Explainer g = Configured(m, ExplainerKind::kGrad);
  double total = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t j = i + 1; j < 20; ++j) {
      const Vector a = g(ds.row(i)), b = g(ds.row(j));
      for (std::size_t k = 0; k < 3; ++k) total += std::abs(a[k] - b[k]) > 1e-12 ? 1.0 : 0.0;
      ++pairs;
    }
  }
  const double score = SeparabilityScore(g, ds);
  EXPECT_DOUBLE_EQ(score, total / pairs);
  EXPECT_GE(score, 0.0);
  EXPECT_LE(score, 3.0);
}

TEST(SeparabilityTest, TooFewPoints) {
  const Dataset ds(1, {1.0, 1.0}, {0, 0});
  try {
    SeparabilityScore(ConstantExplainer({1}), ds);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooFewPoints);
  }
}

TEST(ConvictionTest, IdenticalExplanationsGiveOne) {
  const std::vector<Vector> support(5, Vector{0.2, -0.3});
  const DensityEstimator density = DensityEstimator::Fit(support);
  EXPECT_NEAR(ConvictionScore(Vector{0.2, -0.3}, density), 1.0, 1e-12);
}

TEST(ConvictionTest, TailQueryBelowOneAndMatchesKdeLoop) {
  Rng rng(5);
  std::vector<Vector> support;
  for (int i = 0; i < 40; ++i) support.push_back(RandomVector(rng, 2, 3.0));
  const DensityEstimator density = DensityEstimator::Fit(support);
  const Vector query{12.0, -12.0};
  const auto& h = density.bandwidth();
  auto pdf = [&](ConstSpan q) {
    long double total = 0.0L;
    for (const auto& s : support) {
      long double k = 1.0L;
      for (std::size_t j = 0; j < 2; ++j) {
        const long double u = (q[j] - s[j]) / h[j];
        k *= std::exp(-0.5L * u * u) / (h[j] * std::sqrt(2.0L * 3.14159265358979323846L));
      }
      total += k;
    }
    return static_cast<double>(total / support.size());
  };
  double mean_info = 0.0;
  for (const auto& s : support) mean_info += -std::log(pdf(s));
  mean_info /= support.size();
  const double expected = mean_info / -std::log(pdf(query));
  const double score = ConvictionScore(query, density);
  EXPECT_LT(score, 1.0);
  EXPECT_NEAR(score, expected, 1e-9);
}

TEST(ConvictionTest, DegenerateDensity) {
  try {
    DensityEstimator::Fit({Vector{1, 2}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateDensity);
  }
  EXPECT_THROW(DensityEstimator::Fit({Vector{1}, Vector{2}}, Vector{0.0}), Error);
}

TEST(ConvictionTest, NonPositiveSelfInformation) {
  // Tight support makes the density exceed 1 near it.
  const DensityEstimator density = DensityEstimator::Fit({Vector{0.0}, Vector{1e-3}});
  try {
    ConvictionScore(Vector{5e-4}, density);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonPositiveSelfInformation);
  }
}

TEST(ConvictionTest, ConditionalUsesSameClassOnly) {
  // Model predicts class 1 iff x > 0.
  const Model m = testing::LinearModel(2, 1, {-1, 1}, {0, 0});
  const std::vector<Vector> support{{0.0}, {0.5}, {1.0}, {30.0}, {31.0}};
  const std::vector<std::size_t> classes{1, 1, 1, 0, 0};
  const Explainer g = ConstantExplainer({0.4});
  const double cond = ConditionalConvictionScore(m, g, Vector{2.0}, support, classes);
  const DensityEstimator same = DensityEstimator::Fit({{0.0}, {0.5}, {1.0}});
  EXPECT_DOUBLE_EQ(cond, ConvictionScore(Vector{0.4}, same));
}

TEST(CompatibilityTest, ZeroExplainerGivesMeanTarget) {
  Rng rng(6);
  const Model m = RandomModel(rng, {3, 4, 2});
  const Dataset ds = testing::Blobs(rng, {{0, 0, 0}}, 10, 1.0);
  double expected = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    expected += std::abs(m.Evaluate(ds.row(i), {TargetKind::kProba, m.PredictedClass(ds.row(i))}));
  }
  EXPECT_NEAR(CompatibilityScore(m, ConstantExplainer({0, 0, 0}), ds, TargetKind::kProba),
              expected / ds.size(), 1e-15);
}

TEST(CompatibilityTest, GradTimesInputOnLinearModelIsComplete) {
  const Model m = testing::LinearScore({1.0, -2.0, 0.5});
  Rng rng(7);
  const Dataset ds = testing::Blobs(rng, {{0, 0, 0}}, 10, 1.0);
  ExplainerConfig c;
  c.kind = ExplainerKind::kGradTimesInput;
  c.target = TargetKind::kLogit;
  EXPECT_NEAR(CompatibilityScore(m, MakeExplainer(m, c), ds, TargetKind::kLogit), 0.0, 1e-14);
}

TEST(CompatibilityTest, IntegratedGradientsMatchesLoop) {
  Rng rng(8);
  const Model m = RandomModel(rng, {3, 5, 2});
  const Dataset ds = testing::Blobs(rng, {{0, 0, 0}}, 12, 1.0);
  const Explainer g = Configured(m, ExplainerKind::kIntegratedGradients);
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const ConstSpan x = ds.row(i);
    total += std::abs(Sum(g(x)) - m.Evaluate(x, {TargetKind::kProba, m.PredictedClass(x)}));
  }
  const double score = CompatibilityScore(m, g, ds, TargetKind::kProba);
  EXPECT_NEAR(score, total / ds.size(), 1e-15);
  EXPECT_GE(score, 0.0);
}

// Two logits [0, w.x + b]: the log-odds of class 1 equal w.x + b.
Model Logistic(const Vector& w, double b) {
  Vector weights(w.size(), 0.0);
  weights.insert(weights.end(), w.begin(), w.end());
  return testing::LinearModel(2, w.size(), weights, {0.0, b});
}

TEST(DeletionTest, ConstantModelIsZero) {
  const Model m = testing::LinearModel(2, 2, {0, 0, 0, 0}, {0.1, 0.3});
  const Explainer g = ConstantExplainer({1, 2});
  EXPECT_EQ(DeletionScore(m, g, Vector{1, 1}, 1, Vector{0, 0}), 0.0);
  EXPECT_EQ(AdditionScore(m, g, Vector{1, 1}, 1, Vector{0, 0}), 0.0);
}

TEST(DeletionTest, LogisticClosedForm) {
  const Vector w{1.0, -0.5, 2.0};
  const double b = 0.25;
  const Model m = Logistic(w, b);
  const Vector x{0.8, -0.4, 0.6}, base{0.1, 0.1, 0.1};
  const Explainer g = ConstantExplainer({0.1, -3.0, 2.0});  // top-2 = {1, 2}
  // Predicted class 1 since w.x + b > 0.
  const double sx = w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + b;
  const double s_masked = w[0] * x[0] + w[1] * base[1] + w[2] * base[2] + b;
  const double s_base = w[0] * base[0] + w[1] * base[1] + w[2] * base[2] + b;
  EXPECT_NEAR(DeletionScore(m, g, x, 2, base), sx - s_masked, 1e-9);
  EXPECT_NEAR(AdditionScore(m, g, x, 2, base), s_masked - s_base, 1e-9);
  // k = d: deletion is the full drop and addition vanishes.
  EXPECT_NEAR(DeletionScore(m, g, x, 3, base), sx - s_base, 1e-9);
  EXPECT_NEAR(AdditionScore(m, g, x, 3, base), 0.0, 1e-12);
}

TEST(DeletionTest, TelescopingIdentity) {
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const Model m = RandomModel(rng, {5, 6, 3});
    const Vector x = RandomVector(rng, 5), base = RandomVector(rng, 5, 0.2);
    const std::size_t k = 1 + rng.UniformIndex(5);
    const auto subset = TopKFeatures(RandomVector(rng, 5), k);
    const std::size_t y = m.PredictedClass(x);
    const double total = LogOdds(m, x, y) - LogOdds(m, base, y);
    EXPECT_NEAR(DeletionScoreForSubset(m, x, base, subset) + AdditionScoreForSubset(m, x, base, subset),
                total, 1e-9);
  }
}

TEST(DeletionTest, TopKTiesGoLow) {
  EXPECT_EQ(TopKFeatures(Vector{1, -3, 3, 0}, 2), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(TopKFeatures(Vector{2, 2, 2}, 1), (std::vector<std::size_t>{0}));
  EXPECT_THROW(DeletionScore(testing::LinearScore({1}), ConstantExplainer({1}), Vector{1}, 0, Vector{0}), Error);
}

TEST(DeletionTest, SaturatedProbabilitiesStayFinite) {
  const Model m = Logistic({100.0}, 0.0);
  EXPECT_TRUE(std::isfinite(LogOdds(m, Vector{10.0}, 1)));
  EXPECT_NEAR(LogOdds(m, Vector{10.0}, 1), std::log(1 - 1e-7) - std::log(1e-7), 1e-6);
}

class RetrainTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(10);
    // Features 0 and 1 separate the classes; feature 2 is noise.
    Vector f;
    std::vector<int> labels;
    for (int i = 0; i < 120; ++i) {
      const int y = i % 2;
      f.push_back((y ? 1.5 : -1.5) + 0.6 * rng.Normal());
      f.push_back((y ? -1.0 : 1.0) + 0.6 * rng.Normal());
      f.push_back(rng.Normal());
      labels.push_back(y);
    }
    data_.emplace(3, std::move(f), std::move(labels));
    config_.train.epochs = 60;
    config_.train.hidden_layers = {8};
    model_.emplace(Train(*data_, config_.train).model);
  }

  std::optional<Dataset> data_;
  std::optional<Model> model_;
  RetrainConfig config_;
};

TEST_F(RetrainTest, IgnoredFeatureCostsNothing) {
  const auto r = RoarScore(*model_, ConstantExplainer({0, 0, 1}), *data_, 1, Vector(3, 0.0), config_);
  EXPECT_NEAR(r.score, 0.0, 0.05);
  EXPECT_EQ(r.per_seed_accuracy.size(), 5u);
  EXPECT_EQ(r.eval_rows.size(), 24u);
}

TEST_F(RetrainTest, RemovingInformativeFeaturesHurts) {
  const auto roar = RoarScore(*model_, ConstantExplainer({2, 1, 0}), *data_, 2, Vector(3, 0.0), config_);
  const auto kar = KarScore(*model_, ConstantExplainer({2, 1, 0}), *data_, 2, Vector(3, 0.0), config_);
  EXPECT_GT(roar.score, 0.2);
  EXPECT_LT(kar.score, roar.score);
}

TEST_F(RetrainTest, KarKeepAllIsFree) {
  const auto r = KarScore(*model_, ConstantExplainer({2, 1, 0}), *data_, 3, Vector(3, 0.0), config_);
  EXPECT_NEAR(r.score, 0.0, 0.05);
}

TEST_F(RetrainTest, KarKeepNothingFallsToMajorityRate) {
  const auto r = KarScore(*model_, ConstantExplainer({2, 1, 0}), *data_, 0, Vector(3, 0.0), config_);
  // Constant inputs: the retrained model predicts one class everywhere.
  const Split split = TrainTestSplit(data_->size(), 0.8, config_.split_seed);
  double ones = 0.0;
  for (std::size_t i : split.test) ones += data_->label(i);
  const double majority = std::max(ones, split.test.size() - ones) / split.test.size();
  const double minority = std::min(ones, split.test.size() - ones) / split.test.size();
  for (double acc : r.per_seed_accuracy) EXPECT_TRUE(acc == majority || acc == minority) << acc << " " << majority;
}

TEST_F(RetrainTest, PreconditionsOnK) {
  EXPECT_THROW(RoarScore(*model_, ConstantExplainer({1, 1, 1}), *data_, 0, Vector(3, 0.0), config_), Error);
  EXPECT_THROW(RoarScore(*model_, ConstantExplainer({1, 1, 1}), *data_, 3, Vector(3, 0.0), config_), Error);
  EXPECT_THROW(KarScore(*model_, ConstantExplainer({1, 1, 1}), *data_, 4, Vector(3, 0.0), config_), Error);
}

}  // namespace
}  // namespace xeval
