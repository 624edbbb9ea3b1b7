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

// Attribution methods: gradient saliency, gradient x input, integrated
// gradients, permutation-sampled Shapley values, kernel-weighted least squares
// Shapley values and exact Shapley values by subset enumeration.

#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xeval/data.hpp"
#include "xeval/error.hpp"
#include "xeval/model.hpp"
#include "xeval/rng.hpp"
#include "xeval/vector_ops.hpp"

namespace xeval {

struct AttributionVector {
  Vector values;
  std::optional<std::size_t> input_id;
  std::string explainer_name;
  bool normalized = false;

  std::size_t size() const { return values.size(); }
};

inline Vector UnitNormalized(ConstSpan phi) {
  Require(AllFinite(phi), ErrorCode::kNonFiniteInput, "attribution is not finite");
  const double norm = NormOf(phi, Norm::kL2);
  Require(norm > 0.0, ErrorCode::kZeroAttribution, "cannot unit-normalize a zero attribution");
  return Scaled(phi, 1.0 / norm);
}

inline AttributionVector UnitNormalize(const AttributionVector& phi) {
  AttributionVector out = phi;
  out.values = UnitNormalized(phi.values);
  out.normalized = true;
  return out;
}

// --- Cooperative games ---------------------------------------------------------

// Coalitions are bitmasks: bit i set means feature i keeps its value from x.
using Coalition = std::uint64_t;
using SetFunction = std::function<double(Coalition)>;

inline constexpr std::size_t kMaxExactPlayers = 12;
inline constexpr std::size_t kMaxFullWlsPlayers = 20;

inline Coalition FullCoalition(std::size_t d) {
  return d >= 64 ? ~Coalition{0} : ((Coalition{1} << d) - 1);
}

// v(S) = target(x with the features outside S replaced by the baseline).
class CharacteristicGame {
 public:
  CharacteristicGame(const Model& model, Vector x, Vector baseline,
                     TargetKind value_kind = TargetKind::kProba,
                     std::optional<std::size_t> class_index = std::nullopt)
      : model_(&model), x_(std::move(x)), baseline_(std::move(baseline)),
        value_kind_(value_kind) {
    CheckSameSize(x_, baseline_, "CharacteristicGame");
    Require(x_.size() == model.input_dim(), ErrorCode::kDimensionMismatch,
            "game input does not match the model");
    class_index_ = class_index ? *class_index : model.PredictedClass(x_);
  }

  std::size_t players() const { return x_.size(); }
  const Vector& x() const { return x_; }
  const Vector& baseline() const { return baseline_; }
  Target target() const { return {value_kind_, class_index_}; }
  const Model& model() const { return *model_; }

  double Evaluate(ConstSpan point) const { return model_->Evaluate(point, target()); }

  double Value(Coalition s) const {
    Require(x_.size() <= 64, ErrorCode::kDimensionTooLarge, "bitmask games need d <= 64");
    Vector point(baseline_);
    for (std::size_t i = 0; i < x_.size(); ++i) {
      if ((s >> i) & 1U) point[i] = x_[i];
    }
    return Evaluate(point);
  }

  double Value(std::span<const std::size_t> members) const {
    Vector point(baseline_);
    for (std::size_t i : members) {
      Require(i < x_.size(), ErrorCode::kInvalidArgument, "coalition member out of range");
      point[i] = x_[i];
    }
    return Evaluate(point);
  }

  SetFunction AsSetFunction() const {
    return [this](Coalition s) { return Value(s); };
  }

 private:
  const Model* model_;
  Vector x_;
  Vector baseline_;
  TargetKind value_kind_;
  std::size_t class_index_ = 0;
};

inline std::vector<double> EvaluateAllCoalitions(const SetFunction& v, std::size_t d) {
  std::vector<double> table(std::size_t{1} << d);
  for (Coalition s = 0; s < table.size(); ++s) table[s] = v(s);
  return table;
}

// phi_i = sum over S not containing i of |S|!(d-|S|-1)!/d! (v(S+i) - v(S)).
inline Vector ExactShapleyFromTable(std::span<const double> table, std::size_t d) {
  Require(table.size() == (std::size_t{1} << d), ErrorCode::kDimensionMismatch,
          "coalition table has the wrong size");
  Vector weight(d, 0.0);
  for (std::size_t s = 0; s < d; ++s) {
    // s!(d-s-1)!/d! = 1 / (d * C(d-1, s))
    double binom = 1.0;
    for (std::size_t j = 1; j <= s; ++j) {
      binom = binom * static_cast<double>(d - 1 - s + j) / static_cast<double>(j);
    }
    weight[s] = 1.0 / (static_cast<double>(d) * binom);
  }
  Vector phi(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const Coalition bit = Coalition{1} << i;
    double acc = 0.0;
    for (Coalition s = 0; s < table.size(); ++s) {
      if (s & bit) continue;
      acc += weight[static_cast<std::size_t>(std::popcount(s))] * (table[s | bit] - table[s]);
    }
    phi[i] = acc;
  }
  return phi;
}

inline Vector ExactShapley(const SetFunction& v, std::size_t d) {
  Require(d >= 1, ErrorCode::kInvalidArgument, "game needs at least one player");
  Require(d <= kMaxExactPlayers, ErrorCode::kDimensionTooLarge,
          "exact Shapley enumerates 2^d coalitions; d = " + std::to_string(d) + " exceeds " +
              std::to_string(kMaxExactPlayers));
  const auto table = EvaluateAllCoalitions(v, d);
  return ExactShapleyFromTable(table, d);
}

inline AttributionVector ExactShapley(const CharacteristicGame& game) {
  return {ExactShapley(game.AsSetFunction(), game.players()), std::nullopt, "exact_shapley", false};
}

// Monte Carlo over uniformly random feature orderings. Each ordering walks from
// the baseline to x one feature at a time and credits each feature with its
// marginal change.
inline Vector ShapleySampling(const CharacteristicGame& game, std::size_t permutations, Rng& rng) {
  Require(permutations >= 1, ErrorCode::kInvalidArgument, "permutations must be at least 1");
  const std::size_t d = game.players();
  Vector phi(d, 0.0);
  std::vector<std::size_t> order(d);
  for (std::size_t i = 0; i < d; ++i) order[i] = i;
  const double empty_value = game.Evaluate(game.baseline());
  Vector point(d);
  for (std::size_t p = 0; p < permutations; ++p) {
    rng.Shuffle(order);
    point = game.baseline();
    double previous = empty_value;
    for (std::size_t i : order) {
      point[i] = game.x()[i];
      const double current = game.Evaluate(point);
      phi[i] += current - previous;
      previous = current;
    }
  }
  for (double& v : phi) v /= static_cast<double>(permutations);
  return phi;
}

// Shapley kernel weight for a coalition of size s out of d players.
inline double ShapleyKernelWeight(std::size_t d, std::size_t s) {
  double binom = 1.0;
  for (std::size_t j = 1; j <= s; ++j) {
    binom = binom * static_cast<double>(d - s + j) / static_cast<double>(j);
  }
  return static_cast<double>(d - 1) /
         (binom * static_cast<double>(s) * static_cast<double>(d - s));
}

// 0 requests full enumeration of the 2^d - 2 proper coalitions.
inline constexpr std::size_t kFullEnumeration = 0;

// Kernel-weighted least squares with v(empty) as the intercept and the
// efficiency constraint sum(phi) = v(full) - v(empty) eliminated through the
// last coordinate.
inline Vector ShapleyWls(const CharacteristicGame& game, std::size_t coalition_budget, Rng& rng) {
  const std::size_t d = game.players();
  Require(d <= 64, ErrorCode::kDimensionTooLarge, "weighted least squares supports d <= 64");
  const double v_empty = game.Evaluate(game.baseline());
  const double v_full = game.Evaluate(game.x());
  const double delta = v_full - v_empty;
  if (d == 1) return {delta};

  const double proper = std::ldexp(1.0, static_cast<int>(std::min<std::size_t>(d, 63))) - 2.0;
  const bool full = coalition_budget == kFullEnumeration ||
                    static_cast<double>(coalition_budget) >= proper;
  if (full) {
    Require(d <= kMaxFullWlsPlayers, ErrorCode::kDimensionTooLarge,
            "full enumeration needs d <= " + std::to_string(kMaxFullWlsPlayers));
  } else {
    Require(coalition_budget >= d + 2, ErrorCode::kSingularSystem,
            "coalition budget " + std::to_string(coalition_budget) +
                " is below d + 2 = " + std::to_string(d + 2));
  }

  const std::size_t m = d - 1;
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  Eigen::VectorXd row(static_cast<Eigen::Index>(m));
  auto accumulate = [&](Coalition s, double weight) {
    const double last = static_cast<double>((s >> m) & 1U);
    for (std::size_t j = 0; j < m; ++j) {
      row[static_cast<Eigen::Index>(j)] = static_cast<double>((s >> j) & 1U) - last;
    }
    const double y = game.Value(s) - v_empty - last * delta;
    normal.selfadjointView<Eigen::Lower>().rankUpdate(row, weight);
    rhs += weight * y * row;
  };

  if (full) {
    const Coalition all = FullCoalition(d);
    for (Coalition s = 1; s < all; ++s) {
      accumulate(s, ShapleyKernelWeight(d, static_cast<std::size_t>(std::popcount(s))));
    }
  } else {
    const Coalition all = FullCoalition(d);
    for (std::size_t i = 0; i < d; ++i) {
      const Coalition single = Coalition{1} << i;
      accumulate(single, ShapleyKernelWeight(d, 1));
      if (d > 2) accumulate(all & ~single, ShapleyKernelWeight(d, d - 1));
    }
    const std::size_t mandatory = d > 2 ? 2 * d : d;
    const std::size_t samples = coalition_budget > mandatory ? coalition_budget - mandatory : 0;
    if (d >= 4 && samples > 0) {
      Vector size_mass;
      double total_mass = 0.0;
      for (std::size_t s = 2; s + 2 <= d; ++s) {
        const double mass = static_cast<double>(d - 1) /
                            (static_cast<double>(s) * static_cast<double>(d - s));
        size_mass.push_back(mass);
        total_mass += mass;
      }
      const double each = total_mass / static_cast<double>(samples);
      for (std::size_t n = 0; n < samples; ++n) {
        double u = rng.Uniform() * total_mass;
        std::size_t pick = 0;
        while (pick + 1 < size_mass.size() && u >= size_mass[pick]) {
          u -= size_mass[pick];
          ++pick;
        }
        const std::size_t size = pick + 2;
        Coalition s = 0;
        for (std::size_t i : rng.SampleWithoutReplacement(d, size)) s |= Coalition{1} << i;
        accumulate(s, each);
      }
    }
  }

  Eigen::MatrixXd sym = normal.selfadjointView<Eigen::Lower>();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().maxCoeff();
  const double bottom = eig.eigenvalues().minCoeff();
  Require(top > 0.0 && bottom > 1e-12 * top, ErrorCode::kSingularSystem,
          "sampled coalitions do not determine the attribution");
  sym.diagonal().array() += 1e-10;
  const Eigen::VectorXd solution = sym.ldlt().solve(rhs);

  Vector phi(d);
  double partial = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    phi[j] = solution[static_cast<Eigen::Index>(j)];
    partial += phi[j];
  }
  phi[m] = delta - partial;
  return phi;
}

// --- Gradient methods ------------------------------------------------------------

struct IntegratedGradientsResult {
  Vector attribution;
  double completeness_residual = 0.0;
};

// Midpoint Riemann sum of the gradient along the straight path baseline -> x.
inline IntegratedGradientsResult IntegratedGradients(const Model& model, ConstSpan x,
                                                     ConstSpan baseline, const Target& target,
                                                     std::size_t steps) {
  Require(steps >= 2, ErrorCode::kInvalidArgument, "integrated gradients needs steps >= 2");
  CheckSameSize(x, baseline, "IntegratedGradients");
  const std::size_t d = x.size();
  Vector mean_grad(d, 0.0);
  Vector point(d);
  for (std::size_t k = 0; k < steps; ++k) {
    const double alpha = (static_cast<double>(k) + 0.5) / static_cast<double>(steps);
    for (std::size_t i = 0; i < d; ++i) point[i] = baseline[i] + alpha * (x[i] - baseline[i]);
    const Vector g = model.InputGradient(point, target);
    for (std::size_t i = 0; i < d; ++i) mean_grad[i] += g[i];
  }
  IntegratedGradientsResult out;
  out.attribution.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    out.attribution[i] = (x[i] - baseline[i]) * mean_grad[i] / static_cast<double>(steps);
  }
  const double drop = model.Evaluate(x, target) - model.Evaluate(baseline, target);
  out.completeness_residual = std::abs(Sum(out.attribution) - drop);
  return out;
}

// --- Configured explainers -------------------------------------------------------

enum class ExplainerKind {
  kGrad,
  kGradTimesInput,
  kIntegratedGradients,
  kShapleySampling,
  kShapleyWls,
  kExactShapley,
};

struct ExplainerConfig {
  ExplainerKind kind = ExplainerKind::kShapleyWls;
  std::size_t steps = 128;            // integrated gradients
  std::size_t permutations = 1000;    // shapley sampling
  std::size_t coalition_budget = kFullEnumeration;  // shapley_wls
  Baseline baseline;                  // values must match the model's input_dim
  TargetKind target = TargetKind::kProba;
  std::uint64_t seed = 0;

  bool IsStochastic() const {
    return kind == ExplainerKind::kShapleySampling ||
           (kind == ExplainerKind::kShapleyWls && coalition_budget != kFullEnumeration);
  }
  bool IsShapley() const {
    return kind == ExplainerKind::kShapleySampling || kind == ExplainerKind::kShapleyWls ||
           kind == ExplainerKind::kExactShapley;
  }
};

inline std::string ExplainerKindName(ExplainerKind kind) {
  switch (kind) {
    case ExplainerKind::kGrad: return "grad";
    case ExplainerKind::kGradTimesInput: return "grad_times_input";
    case ExplainerKind::kIntegratedGradients: return "integrated_gradients";
    case ExplainerKind::kShapleySampling: return "shapley_sampling";
    case ExplainerKind::kShapleyWls: return "shapley_wls";
    case ExplainerKind::kExactShapley: return "exact_shapley";
  }
  return "unknown";
}

inline ExplainerKind ParseExplainerKind(const std::string& name) {
  if (name == "grad") return ExplainerKind::kGrad;
  if (name == "grad_times_input" || name == "gxi") return ExplainerKind::kGradTimesInput;
  if (name == "integrated_gradients" || name == "ig") return ExplainerKind::kIntegratedGradients;
  if (name == "shapley_sampling" || name == "ss") return ExplainerKind::kShapleySampling;
  if (name == "shapley_wls" || name == "shap") return ExplainerKind::kShapleyWls;
  if (name == "exact_shapley" || name == "exact") return ExplainerKind::kExactShapley;
  Fail(ErrorCode::kInvalidArgument, "unknown explainer '" + name + "'");
}

// A named attribution function bound to a model. `nonce` selects an
// independent random stream for stochastic methods; deterministic methods
// ignore it.
class Explainer {
 public:
  using Fn = std::function<Vector(ConstSpan x, std::uint64_t nonce)>;

  Explainer(std::string name, Fn fn, bool stochastic = false)
      : name_(std::move(name)), fn_(std::move(fn)), stochastic_(stochastic) {}

  const std::string& name() const { return name_; }
  bool stochastic() const { return stochastic_; }

  Vector operator()(ConstSpan x, std::uint64_t nonce = 0) const { return fn_(x, nonce); }

  AttributionVector Explain(ConstSpan x, std::optional<std::size_t> input_id = std::nullopt,
                            std::uint64_t nonce = 0) const {
    return {fn_(x, nonce), input_id, name_, false};
  }

  // Same explainer with its output unit-normalized.
  Explainer Normalized() const {
    return Explainer(name_, [fn = fn_](ConstSpan x, std::uint64_t nonce) {
      return UnitNormalized(fn(x, nonce));
    }, stochastic_);
  }

 private:
  std::string name_;
  Fn fn_;
  bool stochastic_;
};

inline Explainer ConstantExplainer(Vector value, std::string name = "constant") {
  return Explainer(std::move(name), [value = std::move(value)](ConstSpan, std::uint64_t) {
    return value;
  });
}

// Per-call random stream keyed on (seed, input content, nonce), so serial and
// parallel runs agree.
inline Rng StreamFor(std::uint64_t seed, ConstSpan x, std::uint64_t nonce) {
  return Rng(DeriveSeed(DeriveSeed(seed, HashValues(x)), nonce));
}

inline Vector ExplainWith(const Model& model, ConstSpan x, const ExplainerConfig& config,
                          std::uint64_t nonce = 0) {
  Require(x.size() == model.input_dim(), ErrorCode::kDimensionMismatch,
          "input does not match the model");
  Vector baseline = config.baseline.values;
  if (baseline.empty()) baseline.assign(x.size(), 0.0);
  CheckSameSize(x, baseline, "baseline");
  const Target target{config.target, model.PredictedClass(x)};
  switch (config.kind) {
    case ExplainerKind::kGrad:
      return model.InputGradient(x, target);
    case ExplainerKind::kGradTimesInput: {
      Vector g = model.InputGradient(x, target);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= x[i];
      return g;
    }
    case ExplainerKind::kIntegratedGradients:
      return IntegratedGradients(model, x, baseline, target, config.steps).attribution;
    case ExplainerKind::kShapleySampling: {
      const CharacteristicGame game(model, Vector(x.begin(), x.end()), baseline, config.target,
                                    target.class_index);
      Rng rng = StreamFor(config.seed, x, nonce);
      return ShapleySampling(game, config.permutations, rng);
    }
    case ExplainerKind::kShapleyWls: {
      const CharacteristicGame game(model, Vector(x.begin(), x.end()), baseline, config.target,
                                    target.class_index);
      Rng rng = StreamFor(config.seed, x, nonce);
      return ShapleyWls(game, config.coalition_budget, rng);
    }
    case ExplainerKind::kExactShapley: {
      const CharacteristicGame game(model, Vector(x.begin(), x.end()), baseline, config.target,
                                    target.class_index);
      return ExactShapley(game.AsSetFunction(), game.players());
    }
  }
  return {};
}

inline Explainer MakeExplainer(const Model& model, const ExplainerConfig& config) {
  auto shared = std::make_shared<const Model>(model);
  return Explainer(ExplainerKindName(config.kind),
                   [shared, config](ConstSpan x, std::uint64_t nonce) {
                     return ExplainWith(*shared, x, config, nonce);
                   },
                   config.IsStochastic());
}

}  // namespace xeval
