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

// Aggregate valuation of antecedents: a test point is explained by the
// inverse-distance-weighted Shapley values of its nearest training rows.

#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "xeval/data.hpp"
#include "xeval/explain.hpp"
#include "xeval/model.hpp"

namespace xeval {

struct AvaConfig {
  std::size_t k = 5;
  Norm input_metric = Norm::kLInf;
  ExplainerConfig backend;  // shapley_wls, full enumeration
  bool normalize_weights = true;
  bool cache = true;

  void Validate() const {
    Require(k >= 1, ErrorCode::kInvalidArgument, "k must be at least 1");
    Require(backend.IsShapley(), ErrorCode::kInvalidArgument,
            "the AVA backend must be a Shapley explainer");
  }
};

struct AvaResult {
  Vector values;
  std::vector<Neighbor> neighbors;
  std::vector<double> weights;
};

// Weighted sum of neighbor explanations with weights 1/rho, divided by the
// total weight when `normalize` is set.
inline AvaResult CombineNeighborExplanations(const std::vector<Vector>& explanations,
                                             const std::vector<Neighbor>& neighbors,
                                             bool normalize) {
  Require(!explanations.empty() && explanations.size() == neighbors.size(),
          ErrorCode::kDimensionMismatch, "need one explanation per neighbor");
  AvaResult out;
  out.neighbors = neighbors;
  double total = 0.0;
  for (const auto& nb : neighbors) {
    Require(nb.distance > 0.0, ErrorCode::kInvalidArgument, "neighbor distance must be positive");
    out.weights.push_back(1.0 / nb.distance);
    total += out.weights.back();
  }
  if (normalize) {
    for (double& w : out.weights) w /= total;
  }
  const std::size_t d = explanations.front().size();
  out.values.assign(d, 0.0);
  for (std::size_t n = 0; n < explanations.size(); ++n) {
    Require(explanations[n].size() == d, ErrorCode::kDimensionMismatch,
            "neighbor explanations differ in length");
    for (std::size_t j = 0; j < d; ++j) out.values[j] += out.weights[n] * explanations[n][j];
  }
  return out;
}

class AvaExplainer {
 public:
  AvaExplainer(const Model& model, Dataset training, AvaConfig config)
      : state_(std::make_shared<State>(model, std::move(training), std::move(config))) {
    state_->config.Validate();
    Require(state_->training.dim() == model.input_dim(), ErrorCode::kDimensionMismatch,
            "training data does not match the model");
  }

  const AvaConfig& config() const { return state_->config; }
  const Dataset& training() const { return state_->training; }

  std::string name() const { return "ava:k=" + std::to_string(state_->config.k); }

  // Shapley explanation of training row `row` under the backend config.
  Vector NeighborExplanation(std::size_t row) const { return state_->Neighbor(row); }

  AvaResult Explain(ConstSpan x) const {
    const auto neighbors =
        NearestNeighbors(state_->training, x, state_->config.k, state_->config.input_metric);
    std::vector<Vector> explanations;
    explanations.reserve(neighbors.size());
    for (const auto& nb : neighbors) explanations.push_back(state_->Neighbor(nb.row));
    return CombineNeighborExplanations(explanations, neighbors, state_->config.normalize_weights);
  }

  // Copies share the neighbor cache.
  Explainer AsExplainer() const {
    return Explainer(name(), [state = state_](ConstSpan x, std::uint64_t) {
      const auto neighbors =
          NearestNeighbors(state->training, x, state->config.k, state->config.input_metric);
      std::vector<Vector> explanations;
      for (const auto& nb : neighbors) explanations.push_back(state->Neighbor(nb.row));
      return CombineNeighborExplanations(explanations, neighbors, state->config.normalize_weights)
          .values;
    });
  }

 private:
  struct State {
    State(const Model& m, Dataset t, AvaConfig c)
        : model(m), training(std::move(t)), config(std::move(c)) {}

    Vector Neighbor(std::size_t row) {
      if (config.cache) {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(row);
        if (it != cache.end()) return it->second;
      }
      Vector value = ExplainWith(model, training.row(row), config.backend);
      if (config.cache) {
        std::lock_guard<std::mutex> lock(mu);
        cache.insert_or_assign(row, value);
      }
      return value;
    }

    Model model;
    Dataset training;
    AvaConfig config;
    std::mutex mu;
    std::unordered_map<std::size_t, Vector> cache;
  };
  std::shared_ptr<State> state_;
};

struct LinearityCheck {
  Vector combined;        // Shapley value of the weighted-sum game
  Vector sum_of_scaled;   // weighted sum of the per-game Shapley values
  double max_abs_diff = 0.0;
};

inline constexpr std::size_t kMaxLinearityPlayers = 8;

// Compares the Shapley value of sum_k w_k v_k with sum_k w_k phi(v_k).
inline LinearityCheck VerifyShapleyLinearity(const std::vector<CharacteristicGame>& games,
                                             const std::vector<double>& weights) {
  Require(!games.empty() && games.size() == weights.size(), ErrorCode::kDimensionMismatch,
          "need one weight per game");
  const std::size_t d = games.front().players();
  Require(d <= kMaxLinearityPlayers, ErrorCode::kDimensionTooLarge,
          "linearity check enumerates coalitions exactly; d = " + std::to_string(d));
  std::vector<std::vector<double>> tables;
  for (const auto& g : games) {
    Require(g.players() == d, ErrorCode::kDimensionMismatch, "games differ in player count");
    tables.push_back(EvaluateAllCoalitions(g.AsSetFunction(), d));
  }
  std::vector<double> combined_table(tables.front().size(), 0.0);
  LinearityCheck out;
  out.sum_of_scaled.assign(d, 0.0);
  for (std::size_t k = 0; k < games.size(); ++k) {
    for (std::size_t s = 0; s < combined_table.size(); ++s) combined_table[s] += weights[k] * tables[k][s];
    const Vector phi = ExactShapleyFromTable(tables[k], d);
    for (std::size_t j = 0; j < d; ++j) out.sum_of_scaled[j] += weights[k] * phi[j];
  }
  out.combined = ExactShapleyFromTable(combined_table, d);
  for (std::size_t j = 0; j < d; ++j) {
    out.max_abs_diff = std::max(out.max_abs_diff, std::abs(out.combined[j] - out.sum_of_scaled[j]));
  }
  return out;
}

}  // namespace xeval
