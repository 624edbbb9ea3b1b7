/*
 * Copyright 2026 The xeval Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Additional criteria: identity, separability, conviction, compatibility,
// deletion, addition, ROAR and KAR.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "xeval/data.hpp"
#include "xeval/explain.hpp"
#include "xeval/model.hpp"
#include "xeval/rng.hpp"
#include "xeval/train.hpp"
#include "xeval/vector_ops.hpp"

namespace xeval {

inline constexpr double kIdenticalTolerance = 1e-12;
inline constexpr double kProbabilityClamp = 1e-7;
inline constexpr std::size_t kMaxSeparabilityPairs = 10000;

// Number of coordinates differing by more than the tolerance.
inline std::size_t CountDiffering(ConstSpan a, ConstSpan b) {
  CheckSameSize(a, b, "CountDiffering");
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > kIdenticalTolerance) ++n;
  }
  return n;
}

// Mean l0 distance between two calls of g on the same input, each call using
// a different internal random stream.
inline double IdentityScore(const Explainer& g, const Dataset& ds) {
  Require(ds.size() > 0, ErrorCode::kEmptyDataset, "identity needs at least one input");
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    total += static_cast<double>(CountDiffering(g(ds.row(i), 0), g(ds.row(i), 1)));
  }
  return total / static_cast<double>(ds.size());
}

// Mean l0 distance between explanations of distinct inputs. All pairs when
// there are at most 10,000, otherwise 10,000 seeded random pairs.
inline double SeparabilityScore(const Explainer& g, const Dataset& ds, std::uint64_t seed = 0) {
  const std::size_t n = ds.size();
  std::vector<Vector> explanations;
  explanations.reserve(n);
  for (std::size_t i = 0; i < n; ++i) explanations.push_back(g(ds.row(i)));
  auto distinct = [&](std::size_t i, std::size_t j) {
    const ConstSpan a = ds.row(i), b = ds.row(j);
    return !std::equal(a.begin(), a.end(), b.begin());
  };
  double total = 0.0;
  std::size_t pairs = 0;
  const double all_pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n > 0 ? n - 1 : 0);
  if (all_pairs <= static_cast<double>(kMaxSeparabilityPairs)) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!distinct(i, j)) continue;
        total += static_cast<double>(CountDiffering(explanations[i], explanations[j]));
        ++pairs;
      }
    }
  } else {
    Rng rng(seed);
    std::size_t attempts = 0;
    while (pairs < kMaxSeparabilityPairs && attempts < 20 * kMaxSeparabilityPairs) {
      ++attempts;
      const std::size_t i = rng.UniformIndex(n);
      const std::size_t j = rng.UniformIndex(n);
      if (i == j || !distinct(i, j)) continue;
      total += static_cast<double>(CountDiffering(explanations[i], explanations[j]));
      ++pairs;
    }
  }
  Require(pairs > 0, ErrorCode::kTooFewPoints, "separability needs two distinct inputs");
  return total / static_cast<double>(pairs);
}

// Product-kernel Gaussian density over explanation vectors. Bandwidths follow
// Silverman's rule per dimension; a dimension with zero spread gets
// bandwidth 1.
class DensityEstimator {
 public:
  static DensityEstimator Fit(std::vector<Vector> support, Vector bandwidth = {}) {
    Require(support.size() >= 2, ErrorCode::kDegenerateDensity,
            "density needs at least two support explanations");
    const std::size_t d = support.front().size();
    for (const auto& s : support) {
      Require(s.size() == d, ErrorCode::kDimensionMismatch, "support explanations differ in length");
    }
    if (bandwidth.empty()) {
      const double n = static_cast<double>(support.size());
      const double factor = std::pow(4.0 / ((static_cast<double>(d) + 2.0) * n),
                                     1.0 / (static_cast<double>(d) + 4.0));
      bandwidth.resize(d);
      for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (const auto& s : support) mean += s[j];
        mean /= n;
        double ss = 0.0;
        for (const auto& s : support) ss += (s[j] - mean) * (s[j] - mean);
        const double sd = std::sqrt(ss / (n - 1.0));
        bandwidth[j] = sd > 0.0 ? sd * factor : 1.0;
      }
    }
    Require(bandwidth.size() == d, ErrorCode::kDimensionMismatch, "bandwidth length mismatch");
    for (double h : bandwidth) {
      Require(h > 0.0 && std::isfinite(h), ErrorCode::kDegenerateDensity,
              "bandwidths must be positive");
    }
    return DensityEstimator(std::move(support), std::move(bandwidth));
  }

  const std::vector<Vector>& support() const { return support_; }
  const Vector& bandwidth() const { return bandwidth_; }

  double LogDensity(ConstSpan x) const {
    CheckSameSize(x, bandwidth_, "density query");
    Vector logs;
    logs.reserve(support_.size());
    double norm = 0.0;
    for (double h : bandwidth_) norm -= std::log(h) + 0.5 * std::log(2.0 * M_PI);
    for (const auto& s : support_) {
      double acc = norm;
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double u = (x[j] - s[j]) / bandwidth_[j];
        acc -= 0.5 * u * u;
      }
      logs.push_back(acc);
    }
    const double top = *std::max_element(logs.begin(), logs.end());
    double total = 0.0;
    for (double l : logs) total += std::exp(l - top);
    return top + std::log(total) - std::log(static_cast<double>(support_.size()));
  }

  // -ln p(x), with p floored at 1e-300.
  double SelfInformation(ConstSpan x) const {
    return -std::max(LogDensity(x), std::log(1e-300));
  }

  double MeanSupportSelfInformation() const {
    double total = 0.0;
    for (const auto& s : support_) total += SelfInformation(s);
    return total / static_cast<double>(support_.size());
  }

 private:
  DensityEstimator(std::vector<Vector> support, Vector bandwidth)
      : support_(std::move(support)), bandwidth_(std::move(bandwidth)) {}

  std::vector<Vector> support_;
  Vector bandwidth_;
};

// Mean self-information of the fitted explanations over that of g(x).
inline double ConvictionScore(ConstSpan query_explanation, const DensityEstimator& density) {
  const double info = density.SelfInformation(query_explanation);
  Require(info > 0.0, ErrorCode::kNonPositiveSelfInformation,
          "density at the query is >= 1 (self-information " + std::to_string(info) + ")");
  return density.MeanSupportSelfInformation() / info;
}

inline double ConvictionScore(const Explainer& g, ConstSpan x, const DensityEstimator& density) {
  return ConvictionScore(g(x), density);
}

// Conditional variant: the density is fitted only on support explanations
// whose predicted class matches that of x.
inline double ConditionalConvictionScore(const Model& model, const Explainer& g, ConstSpan x,
                                         const std::vector<Vector>& support,
                                         const std::vector<std::size_t>& support_classes) {
  Require(support.size() == support_classes.size(), ErrorCode::kDimensionMismatch,
          "support and class tags differ in length");
  const std::size_t cls = model.PredictedClass(x);
  std::vector<Vector> same;
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (support_classes[i] == cls) same.push_back(support[i]);
  }
  return ConvictionScore(g, x, DensityEstimator::Fit(std::move(same)));
}

// (1/N) sum |sum_i phi_i - f(x)| where f(x) is the explained target value.
inline double CompatibilityScore(const Model& model, const Explainer& g, const Dataset& ds,
                                 TargetKind target) {
  Require(ds.size() > 0, ErrorCode::kEmptyDataset, "compatibility needs inputs");
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const ConstSpan x = ds.row(i);
    const double fx = model.Evaluate(x, {target, model.PredictedClass(x)});
    total += std::abs(Sum(g(x)) - fx);
  }
  return total / static_cast<double>(ds.size());
}

// Indices of the k largest |phi_i|; ties resolved toward the lower index.
inline std::vector<std::size_t> TopKFeatures(ConstSpan phi, std::size_t k) {
  Require(k <= phi.size(), ErrorCode::kInvalidArgument, "k exceeds the attribution length");
  std::vector<std::size_t> idx(phi.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(phi[a]) > std::abs(phi[b]);
  });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline Vector ReplaceWithBaseline(ConstSpan x, ConstSpan baseline, std::span<const std::size_t> features) {
  Vector out(x.begin(), x.end());
  for (std::size_t i : features) out[i] = baseline[i];
  return out;
}

// s_f(y|x) = log p - log(1 - p), p clamped to [1e-7, 1 - 1e-7].
inline double LogOdds(const Model& model, ConstSpan x, std::size_t cls) {
  const double p = std::clamp(model.Evaluate(x, {TargetKind::kProba, cls}), kProbabilityClamp,
                              1.0 - kProbabilityClamp);
  return std::log(p) - std::log1p(-p);
}

inline double DeletionScoreForSubset(const Model& model, ConstSpan x, ConstSpan baseline,
                                     std::span<const std::size_t> subset) {
  const std::size_t y = model.PredictedClass(x);
  return LogOdds(model, x, y) - LogOdds(model, ReplaceWithBaseline(x, baseline, subset), y);
}

inline double AdditionScoreForSubset(const Model& model, ConstSpan x, ConstSpan baseline,
                                     std::span<const std::size_t> subset) {
  const std::size_t y = model.PredictedClass(x);
  return LogOdds(model, ReplaceWithBaseline(x, baseline, subset), y) - LogOdds(model, baseline, y);
}

inline void CheckSubsetSize(std::size_t k, std::size_t d) {
  Require(k >= 1 && k <= d, ErrorCode::kInvalidArgument,
          "k must lie in [1, d]; got " + std::to_string(k));
}

inline double DeletionScore(const Model& model, const Explainer& g, ConstSpan x, std::size_t k,
                            ConstSpan baseline) {
  CheckSubsetSize(k, x.size());
  CheckSameSize(x, baseline, "deletion baseline");
  return DeletionScoreForSubset(model, x, baseline, TopKFeatures(g(x), k));
}

// Implements the stated formula s(y | x with x_S at baseline) - s(y | baseline).
inline double AdditionScore(const Model& model, const Explainer& g, ConstSpan x, std::size_t k,
                            ConstSpan baseline) {
  CheckSubsetSize(k, x.size());
  CheckSameSize(x, baseline, "addition baseline");
  return AdditionScoreForSubset(model, x, baseline, TopKFeatures(g(x), k));
}

// --- Retraining criteria --------------------------------------------------------

struct RetrainConfig {
  TrainConfig train;
  std::size_t num_seeds = 5;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
};

struct RetrainReport {
  double score = 0.0;                   // mean over seeds of the accuracy drop
  double original_accuracy = 0.0;       // f on unmodified evaluation rows
  Vector per_seed_accuracy;             // retrained model on modified evaluation rows
  Vector per_seed_score;
  std::vector<std::size_t> eval_rows;
};

enum class RemovalMode { kRemoveTop, kKeepTop };

namespace detail {

inline RetrainReport RetrainScore(const Model& model, const Explainer& g, const Dataset& ds,
                                  std::size_t k, ConstSpan baseline, const RetrainConfig& config,
                                  RemovalMode mode) {
  const std::size_t d = ds.dim();
  Require(baseline.size() == d, ErrorCode::kDimensionMismatch, "retrain baseline length mismatch");
  Require(config.num_seeds >= 1, ErrorCode::kInvalidArgument, "need at least one retrain seed");
  Vector modified = ds.features();
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const auto top = TopKFeatures(g(ds.row(r)), k);
    std::vector<bool> in_top(d, false);
    for (std::size_t i : top) in_top[i] = true;
    for (std::size_t i = 0; i < d; ++i) {
      const bool replace = mode == RemovalMode::kRemoveTop ? in_top[i] : !in_top[i];
      if (replace) modified[r * d + i] = baseline[i];
    }
  }
  const Dataset modified_ds = ds.WithFeatures(std::move(modified));
  const Split split = TrainTestSplit(ds.size(), config.train_fraction, config.split_seed);
  const Dataset train_rows = modified_ds.Subset(split.train);
  const Dataset eval_modified = modified_ds.Subset(split.test);
  const Dataset eval_original = ds.Subset(split.test);

  RetrainReport report;
  report.eval_rows = split.test;
  report.original_accuracy = Accuracy(model, eval_original);
  TrainConfig tc = config.train;
  if (tc.num_classes == 0) tc.num_classes = model.output_dim();
  for (std::size_t s = 0; s < config.num_seeds; ++s) {
    tc.seed = DeriveSeed(config.train.seed, s);
    const TrainResult retrained = Train(train_rows, tc);
    const double acc = Accuracy(retrained.model, eval_modified);
    report.per_seed_accuracy.push_back(acc);
    report.per_seed_score.push_back(report.original_accuracy - acc);
  }
  report.score = Summarize(report.per_seed_score).mean;
  return report;
}

}  // namespace detail

// Accuracy drop after retraining on data whose k most important features
// (per g) are set to the baseline.
inline RetrainReport RoarScore(const Model& model, const Explainer& g, const Dataset& ds,
                               std::size_t k, ConstSpan baseline, const RetrainConfig& config) {
  Require(k >= 1 && k < ds.dim(), ErrorCode::kInvalidArgument, "ROAR needs 1 <= k < d");
  return detail::RetrainScore(model, g, ds, k, baseline, config, RemovalMode::kRemoveTop);
}

// Accuracy drop after retraining on data that keeps only the k most important
// features; the remaining d - k are set to the baseline.
inline RetrainReport KarScore(const Model& model, const Explainer& g, const Dataset& ds,
                              std::size_t k, ConstSpan baseline, const RetrainConfig& config) {
  Require(k <= ds.dim(), ErrorCode::kInvalidArgument, "KAR needs 0 <= k <= d");
  return detail::RetrainScore(model, g, ds, k, baseline, config, RemovalMode::kKeepTop);
}

// Uniform random scores; a reference ranking for the retraining criteria.
inline Explainer RandomExplainer(std::uint64_t seed) {
  return Explainer("random", [seed](ConstSpan x, std::uint64_t nonce) {
    Rng rng = StreamFor(seed, x, nonce);
    Vector out(x.size());
    for (double& v : out) v = rng.Uniform();
    return out;
  }, true);
}

}  // namespace xeval
