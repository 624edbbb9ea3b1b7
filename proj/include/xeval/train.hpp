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

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "xeval/data.hpp"
#include "xeval/model.hpp"
#include "xeval/rng.hpp"

namespace xeval {

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double l2_penalty = 0.0;
  std::vector<std::size_t> hidden_layers = {16};
  Activation activation = Activation::LeakyRelu(0.01);
  // 0 means max label + 1.
  std::size_t num_classes = 0;

  void Validate() const {
    Require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorCode::kInvalidArgument,
            "learning_rate must be positive");
    Require(epochs >= 1, ErrorCode::kInvalidArgument, "epochs must be at least 1");
    Require(batch_size >= 1, ErrorCode::kInvalidArgument, "batch_size must be at least 1");
    Require(l2_penalty >= 0.0, ErrorCode::kInvalidArgument, "l2_penalty must be non-negative");
    for (std::size_t h : hidden_layers) {
      Require(h >= 1, ErrorCode::kInvalidArgument, "hidden layer width must be at least 1");
    }
  }
};

struct TrainResult {
  Model model;
  double train_accuracy = 0.0;
};

inline double Accuracy(const Model& model, const Dataset& ds) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (static_cast<int>(model.PredictedClass(ds.row(i))) == ds.label(i)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

// Mini-batch SGD on softmax cross-entropy (+ optional L2 on weights).
// Deterministic for a fixed config.
inline TrainResult Train(const Dataset& ds, const TrainConfig& config) {
  config.Validate();
  Require(ds.size() > 0, ErrorCode::kEmptyDataset, "cannot train on an empty dataset");
  const std::size_t classes =
      config.num_classes > 0 ? config.num_classes : static_cast<std::size_t>(ds.max_label()) + 1;
  for (int y : ds.labels()) {
    Require(y >= 0 && static_cast<std::size_t>(y) < classes, ErrorCode::kLabelOutOfRange,
            "label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
  }

  Rng rng(config.seed);
  std::vector<std::size_t> widths{ds.dim()};
  widths.insert(widths.end(), config.hidden_layers.begin(), config.hidden_layers.end());
  widths.push_back(classes);

  std::vector<DenseLayer> layers;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    DenseLayer l;
    l.cols = widths[k];
    l.rows = widths[k + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(l.rows + l.cols));
    l.weights.resize(l.rows * l.cols);
    for (double& w : l.weights) w = rng.Uniform(-limit, limit);
    l.bias.assign(l.rows, 0.0);
    layers.push_back(std::move(l));
  }
  const Activation act = config.activation;
  const std::size_t depth = layers.size();

  std::vector<Vector> grad_w(depth), grad_b(depth);
  std::vector<Vector> acts(depth + 1), pre(depth);
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.Shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (std::size_t k = 0; k < depth; ++k) {
        grad_w[k].assign(layers[k].weights.size(), 0.0);
        grad_b[k].assign(layers[k].bias.size(), 0.0);
      }
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const ConstSpan x = ds.row(i);
        acts[0].assign(x.begin(), x.end());
        for (std::size_t k = 0; k < depth; ++k) {
          pre[k] = layers[k].Apply(acts[k]);
          acts[k + 1] = pre[k];
          if (k + 1 < depth) {
            for (double& v : acts[k + 1]) v = act.Apply(v);
          }
        }
        Vector delta = Softmax(acts[depth]);
        delta[static_cast<std::size_t>(ds.label(i))] -= 1.0;
        for (std::size_t k = depth; k-- > 0;) {
          const DenseLayer& l = layers[k];
          if (k + 1 < depth) {
            for (std::size_t r = 0; r < l.rows; ++r) delta[r] *= act.Derivative(pre[k][r]);
          }
          Vector back(l.cols, 0.0);
          for (std::size_t r = 0; r < l.rows; ++r) {
            const double g = delta[r];
            grad_b[k][r] += g;
            double* gw = grad_w[k].data() + r * l.cols;
            const double* w = l.weights.data() + r * l.cols;
            for (std::size_t c = 0; c < l.cols; ++c) {
              gw[c] += g * acts[k][c];
              back[c] += g * w[c];
            }
          }
          delta = std::move(back);
        }
      }
      const double scale = config.learning_rate / static_cast<double>(end - start);
      for (std::size_t k = 0; k < depth; ++k) {
        DenseLayer& l = layers[k];
        for (std::size_t j = 0; j < l.weights.size(); ++j) {
          l.weights[j] -= scale * grad_w[k][j] + config.learning_rate * config.l2_penalty * l.weights[j];
        }
        for (std::size_t j = 0; j < l.bias.size(); ++j) l.bias[j] -= scale * grad_b[k][j];
      }
    }
  }
  Model model(std::move(layers), act);
  const double acc = Accuracy(model, ds);
  return {std::move(model), acc};
}

}  // namespace xeval
