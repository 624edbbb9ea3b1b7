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

// Sensitivity (max and average), faithfulness and complexity of attributions.

#pragma once

#include <cmath>
#include <functional>
#include <mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "xeval/data.hpp"
#include "xeval/explain.hpp"
#include "xeval/model.hpp"
#include "xeval/rng.hpp"
#include "xeval/vector_ops.hpp"

namespace xeval {

enum class ExplanationMetric { kL2, kL1, kCosine };

inline double ExplanationDistance(ConstSpan a, ConstSpan b, ExplanationMetric metric) {
  switch (metric) {
    case ExplanationMetric::kL2: return Distance(a, b, Norm::kL2);
    case ExplanationMetric::kL1: return Distance(a, b, Norm::kL1);
    case ExplanationMetric::kCosine: {
      const double na = NormOf(a, Norm::kL2);
      const double nb = NormOf(b, Norm::kL2);
      if (na == 0.0 && nb == 0.0) return 0.0;
      if (na == 0.0 || nb == 0.0) return 1.0;
      return 1.0 - Dot(a, b) / (na * nb);
    }
  }
  return 0.0;
}

inline std::string ExplanationMetricName(ExplanationMetric metric) {
  switch (metric) {
    case ExplanationMetric::kL2: return "l2";
    case ExplanationMetric::kL1: return "l1";
    case ExplanationMetric::kCosine: return "cos";
  }
  return "l2";
}

inline ExplanationMetric ParseExplanationMetric(const std::string& name) {
  if (name == "l2") return ExplanationMetric::kL2;
  if (name == "l1") return ExplanationMetric::kL1;
  if (name == "cos" || name == "cosine") return ExplanationMetric::kCosine;
  Fail(ErrorCode::kInvalidArgument, "unknown explanation metric '" + name + "'");
}

struct FaithfulnessConfig {
  std::size_t subset_size = 0;  // 0: max(1, round(d / 4))
  std::size_t num_subsets = 100;
};

struct CriterionConfig {
  ExplanationMetric metric = ExplanationMetric::kL2;
  NeighborhoodSpec neighborhood;
  FaithfulnessConfig faithfulness;
  Baseline baseline;                       // empty values: zero baseline
  TargetKind target = TargetKind::kLogit;  // faithfulness read-out
  bool unit_normalize = true;              // sensitivity compares unit-norm explanations
  std::uint64_t seed = 0;

  std::size_t SubsetSize(std::size_t d) const {
    if (faithfulness.subset_size > 0) return faithfulness.subset_size;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(d) / 4.0)));
  }
};

inline nlohmann::json ToJson(const CriterionConfig& c) {
  return {{"explanation_metric", ExplanationMetricName(c.metric)},
          {"radius", c.neighborhood.radius},
          {"input_metric", NormName(c.neighborhood.input_metric)},
          {"require_same_prediction", c.neighborhood.require_same_prediction},
          {"subset_size", c.faithfulness.subset_size},
          {"num_subsets", c.faithfulness.num_subsets},
          {"baseline", BaselineKindName(c.baseline.kind)},
          {"target", TargetKindName(c.target)},
          {"unit_normalize", c.unit_normalize},
          {"seed", c.seed}};
}

// Memoizes an explainer on exact input content; shared neighbors across
// queries are explained once. Thread safe.
class ExplanationCache {
 public:
  explicit ExplanationCache(Explainer inner) : inner_(std::move(inner)) {}

  Vector Get(ConstSpan x, std::uint64_t nonce = 0) {
    const std::uint64_t key = DeriveSeed(HashValues(x), nonce);
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto [begin, end] = entries_.equal_range(key);
      for (auto it = begin; it != end; ++it) {
        if (it->second.nonce == nonce && std::equal(x.begin(), x.end(), it->second.input.begin(),
                                                    it->second.input.end())) {
          return it->second.value;
        }
      }
    }
    Vector value = inner_(x, nonce);
    std::lock_guard<std::mutex> lock(mu_);
    entries_.emplace(key, Entry{Vector(x.begin(), x.end()), nonce, value});
    return value;
  }

  // An Explainer view; the cache must outlive it.
  Explainer AsExplainer() {
    return Explainer(inner_.name(), [this](ConstSpan x, std::uint64_t nonce) {
      return Get(x, nonce);
    }, inner_.stochastic());
  }

 private:
  struct Entry {
    Vector input;
    std::uint64_t nonce;
    Vector value;
  };
  Explainer inner_;
  std::mutex mu_;
  std::unordered_multimap<std::uint64_t, Entry> entries_;
};

// --- Sensitivity ------------------------------------------------------------------

struct SensitivityTerm {
  std::size_t row = 0;
  double explanation_distance = 0.0;  // D(g(x), g(z))
  double input_distance = 0.0;        // rho(x, z), clamped
};

struct SensitivityResult {
  std::vector<SensitivityTerm> terms;
  double max_sensitivity = 0.0;  // max D
  double avg_sensitivity = 0.0;  // mean D / rho
};

inline SensitivityResult Sensitivity(const Model& model, const Explainer& g, ConstSpan x,
                                     const Dataset& reference, const CriterionConfig& config) {
  const auto neighbors = Neighborhood(reference, &model, x, config.neighborhood);
  Require(!neighbors.empty(), ErrorCode::kEmptyNeighborhood,
          "no reference rows within radius " + std::to_string(config.neighborhood.radius));
  auto prepare = [&](ConstSpan p) {
    Vector e = g(p);
    return config.unit_normalize ? UnitNormalized(e) : e;
  };
  const Vector gx = prepare(x);
  SensitivityResult out;
  double ratio_sum = 0.0;
  for (const Neighbor& nb : neighbors) {
    const Vector gz = prepare(reference.row(nb.row));
    const double dist = ExplanationDistance(gx, gz, config.metric);
    out.terms.push_back({nb.row, dist, nb.distance});
    out.max_sensitivity = std::max(out.max_sensitivity, dist);
    ratio_sum += dist / nb.distance;
  }
  out.avg_sensitivity = ratio_sum / static_cast<double>(neighbors.size());
  return out;
}

inline double MaxSensitivity(const Model& model, const Explainer& g, ConstSpan x,
                             const Dataset& reference, const CriterionConfig& config) {
  return Sensitivity(model, g, x, reference, config).max_sensitivity;
}

inline double AvgSensitivity(const Model& model, const Explainer& g, ConstSpan x,
                             const Dataset& reference, const CriterionConfig& config) {
  return Sensitivity(model, g, x, reference, config).avg_sensitivity;
}

// --- Faithfulness -------------------------------------------------------------------

inline double PearsonCorrelation(ConstSpan a, ConstSpan b) {
  CheckSameSize(a, b, "PearsonCorrelation");
  Require(a.size() >= 2, ErrorCode::kZeroVariance, "correlation needs at least two samples");
  const double ma = Sum(a) / static_cast<double>(a.size());
  const double mb = Sum(b) / static_cast<double>(b.size());
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  // Relative floor: differences at rounding level are not variance.
  const double scale_a = std::max(1.0, ma * ma) * static_cast<double>(a.size());
  const double scale_b = std::max(1.0, mb * mb) * static_cast<double>(b.size());
  Require(saa > 1e-24 * scale_a && sbb > 1e-24 * scale_b, ErrorCode::kZeroVariance,
          "attribution sums or output drops are constant across subsets");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

struct FaithfulnessResult {
  double correlation = 0.0;
  std::vector<std::vector<std::size_t>> subsets;
  Vector attribution_sums;
  Vector output_drops;
};

// Correlation between sum_{i in S} phi_i and target(x) - target(x with x_S
// set to the baseline), over independently drawn size-|S| subsets.
inline FaithfulnessResult FaithfulnessDetail(const Model& model, ConstSpan phi, ConstSpan x,
                                             const CriterionConfig& config) {
  const std::size_t d = x.size();
  CheckSameSize(phi, x, "faithfulness attribution");
  const std::size_t k = config.SubsetSize(d);
  Require(k >= 1 && k <= d, ErrorCode::kInvalidArgument, "subset size must lie in [1, d]");
  Require(config.faithfulness.num_subsets >= 2, ErrorCode::kInvalidArgument,
          "faithfulness needs at least two subsets");
  Vector baseline = config.baseline.values;
  if (baseline.empty()) baseline.assign(d, 0.0);
  CheckSameSize(baseline, x, "faithfulness baseline");
  const Target target{config.target, model.PredictedClass(x)};
  const double fx = model.Evaluate(x, target);
  Rng rng = StreamFor(config.seed, x, 0x6661697468ULL);
  FaithfulnessResult out;
  for (std::size_t n = 0; n < config.faithfulness.num_subsets; ++n) {
    auto subset = rng.SampleWithoutReplacement(d, k);
    std::sort(subset.begin(), subset.end());
    Vector masked(x.begin(), x.end());
    double sum = 0.0;
    for (std::size_t i : subset) {
      masked[i] = baseline[i];
      sum += phi[i];
    }
    out.attribution_sums.push_back(sum);
    out.output_drops.push_back(fx - model.Evaluate(masked, target));
    out.subsets.push_back(std::move(subset));
  }
  out.correlation = PearsonCorrelation(out.attribution_sums, out.output_drops);
  return out;
}

inline double Faithfulness(const Model& model, const Explainer& g, ConstSpan x,
                           const CriterionConfig& config) {
  return FaithfulnessDetail(model, g(x), x, config).correlation;
}

// --- Complexity ------------------------------------------------------------------------

// P_g(i) = |phi_i| / sum_j |phi_j|
inline Vector FractionalContribution(ConstSpan phi) {
  Require(AllFinite(phi), ErrorCode::kNonFiniteInput, "attribution is not finite");
  const double total = NormOf(phi, Norm::kL1);
  Require(total > 0.0, ErrorCode::kZeroAttribution, "attribution is identically zero");
  Vector p(phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) p[i] = std::abs(phi[i]) / total;
  return p;
}

// Shannon entropy (nats) of the fractional contribution; 0 ln 0 = 0.
inline double Complexity(ConstSpan phi) {
  double h = 0.0;
  for (double p : FractionalContribution(phi)) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

// --- Reports ---------------------------------------------------------------------------

struct CriterionReport {
  std::string criterion;
  std::vector<std::pair<std::size_t, double>> per_point;
  std::vector<std::pair<std::size_t, std::string>> skipped;
  Summary summary;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();

  void Finalize() {
    Vector values;
    for (const auto& [id, v] : per_point) values.push_back(v);
    summary = Summarize(values);
  }
};

// Runs `fn` for each id, collecting values. Errors that make a criterion
// undefined at a point (empty neighborhood, zero variance, zero attribution)
// are recorded as skips; anything else propagates.
inline CriterionReport RunPerPoint(const std::string& criterion,
                                   std::span<const std::size_t> ids,
                                   const std::function<double(std::size_t)>& fn) {
  CriterionReport report;
  report.criterion = criterion;
  for (std::size_t id : ids) {
    try {
      report.per_point.emplace_back(id, fn(id));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kEmptyNeighborhood || e.code() == ErrorCode::kZeroVariance ||
          e.code() == ErrorCode::kZeroAttribution ||
          e.code() == ErrorCode::kNonPositiveSelfInformation) {
        report.skipped.emplace_back(id, std::string(ErrorCodeName(e.code())));
      } else {
        throw;
      }
    }
  }
  report.Finalize();
  return report;
}

inline nlohmann::json ToJson(const CriterionReport& r) {
  nlohmann::json per_point = nlohmann::json::array();
  for (const auto& [id, v] : r.per_point) per_point.push_back({{"input_id", id}, {"value", v}});
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& [id, why] : r.skipped) skipped.push_back({{"input_id", id}, {"reason", why}});
  nlohmann::json summary = {{"count", r.summary.count}, {"skipped", r.skipped.size()}};
  if (r.summary.count > 0) {
    summary["mean"] = r.summary.mean;
    summary["std"] = r.summary.stddev;
  }
  nlohmann::json doc = {{"criterion", r.criterion},
                        {"config", r.config},
                        {"summary", summary},
                        {"per_point", per_point},
                        {"skipped", skipped}};
  if (!r.extra.empty()) doc["extra"] = r.extra;
  return doc;
}

}  // namespace xeval
