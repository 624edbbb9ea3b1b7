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

// Combining several attributions of one input into a consensus attribution.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "xeval/data.hpp"
#include "xeval/explain.hpp"
#include "xeval/metrics.hpp"
#include "xeval/vector_ops.hpp"

namespace xeval {

// m attributions of the same input.
class ExplanationSet {
 public:
  // Members are unit-normalized unless `normalize` is false.
  explicit ExplanationSet(std::vector<Vector> members, bool normalize = true)
      : normalized_(normalize) {
    Require(!members.empty(), ErrorCode::kInvalidArgument, "explanation set is empty");
    const std::size_t d = members.front().size();
    Require(d >= 1, ErrorCode::kInvalidArgument, "explanations must be non-empty");
    for (auto& g : members) {
      Require(g.size() == d, ErrorCode::kDimensionMismatch, "members differ in length");
      Require(AllFinite(g), ErrorCode::kNonFiniteInput, "member is not finite");
      if (normalize) g = UnitNormalized(g);
    }
    members_ = std::move(members);
  }

  std::size_t size() const { return members_.size(); }
  std::size_t dim() const { return members_.front().size(); }
  const Vector& operator[](std::size_t i) const { return members_[i]; }
  const std::vector<Vector>& members() const { return members_; }
  bool normalized() const { return normalized_; }

 private:
  std::vector<Vector> members_;
  bool normalized_;
};

// Minimizes the summed squared l2 distance to the members.
inline Vector AggregateMean(const ExplanationSet& set) {
  Vector out(set.dim(), 0.0);
  for (const auto& g : set.members()) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += g[j];
  }
  for (double& v : out) v /= static_cast<double>(set.size());
  return out;
}

// Minimizes the summed l1 distance. Even m takes the midpoint of the two
// central values.
inline Vector AggregateMedian(const ExplanationSet& set) {
  const std::size_t m = set.size();
  Vector out(set.dim());
  Vector column(m);
  for (std::size_t j = 0; j < out.size(); ++j) {
    for (std::size_t i = 0; i < m; ++i) column[i] = set[i][j];
    std::sort(column.begin(), column.end());
    out[j] = m % 2 == 1 ? column[m / 2] : 0.5 * (column[m / 2 - 1] + column[m / 2]);
  }
  return out;
}

// --- Complexity lowering --------------------------------------------------------

inline double ComplexityOrInf(ConstSpan phi) {
  return IsZero(phi) ? std::numeric_limits<double>::infinity() : Complexity(phi);
}

// Partial derivative of the complexity with respect to |phi_k|:
//   -(1 + ln a) * sum_{l != k} |phi_l| / T^2 + sum_{l != k} (1 + ln b_l) |phi_l| / T^2
// with T = sum_j |phi_j|, a = |phi_k| / T and b_l = |phi_l| / T.
inline double ComplexityPartialAbs(ConstSpan phi, std::size_t k) {
  const double total = NormOf(phi, Norm::kL1);
  Require(total > 0.0, ErrorCode::kZeroAttribution, "complexity undefined at zero");
  const double a = std::abs(phi[k]) / total;
  double rest = 0.0, weighted = 0.0;
  for (std::size_t l = 0; l < phi.size(); ++l) {
    if (l == k) continue;
    const double mag = std::abs(phi[l]);
    rest += mag;
    if (mag > 0.0) weighted += (1.0 + std::log(mag / total)) * mag;
  }
  if (rest == 0.0) return 0.0;
  if (a == 0.0) return std::numeric_limits<double>::infinity();
  return (-(1.0 + std::log(a)) * rest + weighted) / (total * total);
}

// Directional derivative of the complexity when phi_k moves in `direction`
// (+1 or -1). At phi_k = 0 any move grows |phi_k|.
inline double ComplexityDirectionalDerivative(ConstSpan phi, std::size_t k, double direction) {
  const double d_abs = phi[k] == 0.0 ? 1.0 : (phi[k] > 0.0 ? direction : -direction);
  const double partial = ComplexityPartialAbs(phi, k);
  if (std::isinf(partial)) return d_abs > 0 ? partial : -partial;
  return partial * d_abs;
}

struct LoweringConfig {
  double step_size = 0.01;
  double improvement_tolerance = 1e-9;
  std::size_t max_steps = 10000;
  std::size_t region_iterations = 10;
  std::size_t kept_points = 0;  // 0: m
  std::size_t line_grid = 1001;

  void Validate() const {
    Require(step_size > 0.0 && improvement_tolerance > 0.0 && max_steps > 0 &&
                region_iterations > 0 && line_grid >= 2,
            ErrorCode::kInvalidArgument, "lowering config values must be positive");
  }
};

struct LoweringResult {
  Vector explanation;
  double complexity = 0.0;
  bool step_budget_exceeded = false;
  bool degenerate_pair = false;
  std::vector<double> iteration_minima;  // region shrinking only
  std::size_t steps_taken = 0;
};

namespace detail {

struct Walk {
  Vector best;
  double best_complexity = std::numeric_limits<double>::infinity();
  std::size_t steps = 0;
  bool budget_exceeded = false;
};

// Coordinate-wise walk from `start` toward `destination`, accepting a move of
// size step_size (clipped at the destination and at zero) only when the
// complexity derivative points downhill and the complexity actually drops by
// more than the tolerance.
inline Walk WalkToward(const Vector& start, const Vector& destination, const LoweringConfig& config,
                       std::size_t step_allowance) {
  Walk walk;
  Vector t = start;
  double current = ComplexityOrInf(t);
  walk.best = t;
  walk.best_complexity = current;
  if (std::isinf(current)) return walk;
  const std::size_t d = t.size();
  while (true) {
    bool moved = false;
    for (std::size_t j = 0; j < d; ++j) {
      if (t[j] == destination[j]) continue;
      const double dir = destination[j] > t[j] ? 1.0 : -1.0;
      if (!(ComplexityDirectionalDerivative(t, j, dir) < 0.0)) continue;
      double candidate = t[j] + dir * config.step_size;
      if ((dir > 0 && candidate > destination[j]) || (dir < 0 && candidate < destination[j])) {
        candidate = destination[j];
      }
      if ((t[j] > 0.0 && candidate < 0.0) || (t[j] < 0.0 && candidate > 0.0)) candidate = 0.0;
      const double saved = t[j];
      t[j] = candidate;
      const double next = ComplexityOrInf(t);
      if (next < current - config.improvement_tolerance) {
        current = next;
        moved = true;
        ++walk.steps;
        if (current < walk.best_complexity) {
          walk.best_complexity = current;
          walk.best = t;
        }
        if (walk.steps >= step_allowance) {
          walk.budget_exceeded = true;
          return walk;
        }
      } else {
        t[j] = saved;
      }
    }
    if (!moved || t == destination) break;
  }
  return walk;
}

}  // namespace detail

// Greedy coordinate walks: from each member toward the mean and from the mean
// toward each member. Returns the least complex point visited; never more
// complex than the least complex member.
inline LoweringResult LowerComplexityDescent(const ExplanationSet& set, const LoweringConfig& config = {}) {
  config.Validate();
  for (const auto& g : set.members()) {
    Require(!IsZero(g), ErrorCode::kZeroAttribution, "member explanation is identically zero");
  }
  const Vector mean = AggregateMean(set);
  LoweringResult result;
  result.complexity = std::numeric_limits<double>::infinity();
  auto consider = [&](const detail::Walk& w) {
    result.steps_taken += w.steps;
    result.step_budget_exceeded |= w.budget_exceeded;
    if (w.best_complexity < result.complexity) {
      result.complexity = w.best_complexity;
      result.explanation = w.best;
    }
  };
  for (const auto& g : set.members()) {
    const std::size_t left = config.max_steps > result.steps_taken ? config.max_steps - result.steps_taken : 0;
    consider(detail::WalkToward(g, mean, config, std::max<std::size_t>(left, 1)));
    const std::size_t left2 = config.max_steps > result.steps_taken ? config.max_steps - result.steps_taken : 0;
    consider(detail::WalkToward(mean, g, config, std::max<std::size_t>(left2, 1)));
  }
  return result;
}

struct SegmentMinimum {
  Vector point;
  double complexity = std::numeric_limits<double>::infinity();
  double weight = 0.0;  // point = weight * a + (1 - weight) * b
  bool degenerate = false;
};

// Least complex point on the segment between a and b: a uniform grid over the
// weight followed by golden-section refinement inside the best grid cell.
// Zero points are skipped and flag the pair as degenerate.
inline SegmentMinimum MinimizeComplexityOnSegment(const Vector& a, const Vector& b, std::size_t grid) {
  SegmentMinimum best;
  const std::size_t n = std::max<std::size_t>(grid, 2);
  std::size_t best_index = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double w = static_cast<double>(k) / static_cast<double>(n - 1);
    const Vector p = Mix(a, b, w);
    if (IsZero(p)) {
      best.degenerate = true;
      continue;
    }
    const double c = Complexity(p);
    if (c < best.complexity) {
      best = {p, c, w, best.degenerate};
      best_index = k;
    }
  }
  if (std::isinf(best.complexity)) return best;
  const double cell = 1.0 / static_cast<double>(n - 1);
  double lo = std::max(0.0, static_cast<double>(best_index) * cell - cell);
  double hi = std::min(1.0, static_cast<double>(best_index) * cell + cell);
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  auto eval = [&](double w) { return ComplexityOrInf(Mix(a, b, w)); };
  double x1 = hi - ratio * (hi - lo), x2 = lo + ratio * (hi - lo);
  double f1 = eval(x1), f2 = eval(x2);
  for (int it = 0; it < 60; ++it) {
    if (f1 <= f2) {
      hi = x2; x2 = x1; f2 = f1;
      x1 = hi - ratio * (hi - lo); f1 = eval(x1);
    } else {
      lo = x1; x1 = x2; f1 = f2;
      x2 = lo + ratio * (hi - lo); f2 = eval(x2);
    }
  }
  const double w = f1 <= f2 ? x1 : x2;
  const double c = std::min(f1, f2);
  if (c < best.complexity) {
    best.point = Mix(a, b, w);
    best.complexity = c;
    best.weight = w;
  }
  return best;
}

// Repeatedly replaces the current point set by the least complex points of
// all pairwise segments, keeping the N best each round.
inline LoweringResult LowerComplexityRegion(const ExplanationSet& set, const LoweringConfig& config = {}) {
  config.Validate();
  Require(set.size() >= 2, ErrorCode::kInvalidArgument, "region shrinking needs m >= 2");
  for (const auto& g : set.members()) {
    Require(!IsZero(g), ErrorCode::kZeroAttribution, "member explanation is identically zero");
  }
  const std::size_t keep = config.kept_points > 0 ? config.kept_points : set.size();
  std::vector<std::pair<double, Vector>> current;
  LoweringResult result;
  result.complexity = std::numeric_limits<double>::infinity();
  for (const auto& g : set.members()) {
    const double c = Complexity(g);
    current.emplace_back(c, g);
    if (c < result.complexity) {
      result.complexity = c;
      result.explanation = g;
    }
  }
  for (std::size_t iter = 0; iter < config.region_iterations; ++iter) {
    if (current.size() < 2) {
      result.iteration_minima.push_back(result.iteration_minima.empty() ? current.front().first
                                                                        : result.iteration_minima.back());
      continue;
    }
    std::vector<std::pair<double, Vector>> next;
    for (std::size_t i = 0; i < current.size(); ++i) {
      for (std::size_t j = i + 1; j < current.size(); ++j) {
        SegmentMinimum s = MinimizeComplexityOnSegment(current[i].second, current[j].second, config.line_grid);
        result.degenerate_pair |= s.degenerate;
        if (std::isinf(s.complexity)) continue;
        next.emplace_back(s.complexity, std::move(s.point));
      }
    }
    if (next.empty()) {
      result.iteration_minima.push_back(result.iteration_minima.empty() ? current.front().first
                                                                        : result.iteration_minima.back());
      continue;
    }
    std::stable_sort(next.begin(), next.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    if (next.size() > keep) next.resize(keep);
    current = std::move(next);
    result.iteration_minima.push_back(current.front().first);
    if (current.front().first < result.complexity) {
      result.complexity = current.front().first;
      result.explanation = current.front().second;
    }
  }
  return result;
}

// --- Convex combination of two explainers ------------------------------------------

struct ConvexWeightResult {
  double weight = 0.0;
  double objective = 0.0;
  double objective_at_zero = 0.0;
  double objective_at_one = 0.0;
  bool is_vertex = false;
  std::size_t points_used = 0;
  std::vector<std::size_t> point_ids;
  std::vector<Vector> aggregated;  // combined explanation of each used point at the optimum
};

namespace detail {

inline Vector NormalizedOrZero(const Vector& v) {
  const double n = NormOf(v, Norm::kL2);
  return n > 0.0 ? Scaled(v, 1.0 / n) : v;
}

struct ConvexTerms {
  Vector g1x, g2x;
  std::vector<Vector> g1z, g2z;
  Vector rho;
};

}  // namespace detail

// Chooses w in [0, 1] minimizing the dataset-mean average sensitivity of
// w * g1 + (1 - w) * g2. Members are unit-normalized before combining and the
// combination is unit-normalized again when config.unit_normalize is set.
// A 101-point grid is refined by golden-section search around its best cell;
// ties (up to 1e-12 relative) go to the smaller w.
inline ConvexWeightResult OptimizeConvexWeight(const Model& model, const Explainer& g1,
                                               const Explainer& g2, const Dataset& points,
                                               const Dataset& reference,
                                               const CriterionConfig& config) {
  std::vector<detail::ConvexTerms> terms;
  ConvexWeightResult result;
  auto member = [&](const Explainer& g, ConstSpan x) {
    const Vector e = g(x);
    return config.unit_normalize ? detail::NormalizedOrZero(e) : e;
  };
  for (std::size_t i = 0; i < points.size(); ++i) {
    const ConstSpan x = points.row(i);
    const auto neighbors = Neighborhood(reference, &model, x, config.neighborhood);
    if (neighbors.empty()) continue;
    detail::ConvexTerms t;
    t.g1x = member(g1, x);
    t.g2x = member(g2, x);
    for (const auto& nb : neighbors) {
      t.g1z.push_back(member(g1, reference.row(nb.row)));
      t.g2z.push_back(member(g2, reference.row(nb.row)));
      t.rho.push_back(nb.distance);
    }
    terms.push_back(std::move(t));
    result.point_ids.push_back(i);
  }
  Require(!terms.empty(), ErrorCode::kEmptyNeighborhoodEverywhere,
          "no evaluation point has a non-empty neighborhood");
  result.points_used = terms.size();

  auto combine = [&](const Vector& a, const Vector& b, double w) {
    Vector c = Mix(a, b, w);
    return config.unit_normalize ? detail::NormalizedOrZero(c) : c;
  };
  auto objective = [&](double w) {
    double total = 0.0;
    for (const auto& t : terms) {
      const Vector cx = combine(t.g1x, t.g2x, w);
      double acc = 0.0;
      for (std::size_t n = 0; n < t.rho.size(); ++n) {
        acc += ExplanationDistance(cx, combine(t.g1z[n], t.g2z[n], w), config.metric) / t.rho[n];
      }
      total += acc / static_cast<double>(t.rho.size());
    }
    return total / static_cast<double>(terms.size());
  };

  constexpr std::size_t kGrid = 101;
  // Objectives within rounding noise of each other count as ties.
  auto improves = [](double f, double best) { return f < best - 1e-12 * (1.0 + std::abs(best)); };
  double best_w = 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < kGrid; ++k) {
    const double w = static_cast<double>(k) / static_cast<double>(kGrid - 1);
    const double f = objective(w);
    if (k == 0) result.objective_at_zero = f;
    if (k == kGrid - 1) result.objective_at_one = f;
    if (k == 0 || improves(f, best)) {
      best = f;
      best_w = w;
    }
  }
  const double cell = 1.0 / static_cast<double>(kGrid - 1);
  double lo = std::max(0.0, best_w - cell), hi = std::min(1.0, best_w + cell);
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - ratio * (hi - lo), x2 = lo + ratio * (hi - lo);
  double f1 = objective(x1), f2 = objective(x2);
  for (int it = 0; it < 50; ++it) {
    if (f1 <= f2) {
      hi = x2; x2 = x1; f2 = f1;
      x1 = hi - ratio * (hi - lo); f1 = objective(x1);
    } else {
      lo = x1; x1 = x2; f1 = f2;
      x2 = lo + ratio * (hi - lo); f2 = objective(x2);
    }
  }
  const double refined_w = f1 <= f2 ? x1 : x2;
  const double refined = std::min(f1, f2);
  if (improves(refined, best)) {
    best = refined;
    best_w = refined_w;
  }
  result.weight = best_w;
  result.objective = best;
  result.is_vertex = best_w == 0.0 || best_w == 1.0;
  for (const auto& t : terms) result.aggregated.push_back(combine(t.g1x, t.g2x, best_w));
  return result;
}

// --- Property harnesses ---------------------------------------------------------------

struct BoundCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

// Average sensitivity of the raw combination w*g1 + (1-w)*g2 against the same
// combination of the individual sensitivities.
inline BoundCheck CheckConvexityBound(const Explainer& g1, const Explainer& g2, double w,
                                      const Model& model, ConstSpan x, const Dataset& reference,
                                      CriterionConfig config, double tolerance = 1e-9) {
  Require(w >= 0.0 && w <= 1.0, ErrorCode::kInvalidArgument, "w must lie in [0, 1]");
  Require(config.metric == ExplanationMetric::kL2, ErrorCode::kInvalidArgument,
          "the convexity bound is stated for the l2 explanation distance");
  config.unit_normalize = false;
  const Explainer combined("convex", [&](ConstSpan p, std::uint64_t nonce) {
    return Mix(g1(p, nonce), g2(p, nonce), w);
  });
  BoundCheck out;
  out.lhs = AvgSensitivity(model, combined, x, reference, config);
  out.rhs = w * AvgSensitivity(model, g1, x, reference, config) +
            (1.0 - w) * AvgSensitivity(model, g2, x, reference, config);
  out.holds = out.lhs <= out.rhs + tolerance;
  return out;
}

struct ErrorBoundCheck {
  double eps_agg = 0.0;
  double mean_individual_error = 0.0;
  bool holds = false;
};

// Mean-aggregate error against a known optimal explanation per input, versus
// the average error of the individual members.
inline ErrorBoundCheck CheckErrorBound(const std::vector<ExplanationSet>& sets,
                                       const std::vector<Vector>& optimal, double tolerance = 1e-9) {
  Require(sets.size() == optimal.size() && !sets.empty(), ErrorCode::kDimensionMismatch,
          "need one optimal explanation per explanation set");
  double agg = 0.0, individual = 0.0;
  std::size_t members = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    Require(optimal[i].size() == sets[i].dim(), ErrorCode::kDimensionMismatch,
            "optimal explanation length mismatch");
    agg += Distance(optimal[i], AggregateMean(sets[i]), Norm::kL2);
    for (const auto& g : sets[i].members()) {
      individual += Distance(optimal[i], g, Norm::kL2);
      ++members;
    }
  }
  ErrorBoundCheck out;
  out.eps_agg = agg / static_cast<double>(sets.size());
  out.mean_individual_error = individual / static_cast<double>(members);
  out.holds = out.eps_agg <= out.mean_individual_error + tolerance;
  return out;
}

}  // namespace xeval
