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

// Feed-forward classifier: dense layers, a shared hidden activation and raw
// logits at the output. Immutable once built; every query is a pure function.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "xeval/error.hpp"
#include "xeval/vector_ops.hpp"

namespace xeval {

enum class ActivationKind { kLeakyRelu, kRelu, kIdentity };

struct Activation {
  ActivationKind kind = ActivationKind::kLeakyRelu;
  double slope = 0.01;  // negative-side slope; leaky_relu only

  static Activation LeakyRelu(double slope = 0.01) {
    return {ActivationKind::kLeakyRelu, slope};
  }
  static Activation Relu() { return {ActivationKind::kRelu, 0.0}; }
  static Activation Identity() { return {ActivationKind::kIdentity, 1.0}; }

  double Apply(double z) const {
    switch (kind) {
      case ActivationKind::kLeakyRelu: return z > 0.0 ? z : slope * z;
      case ActivationKind::kRelu: return z > 0.0 ? z : 0.0;
      case ActivationKind::kIdentity: return z;
    }
    return z;
  }

  // Derivative at exactly 0 is the negative-side slope.
  double Derivative(double z) const {
    switch (kind) {
      case ActivationKind::kLeakyRelu: return z > 0.0 ? 1.0 : slope;
      case ActivationKind::kRelu: return z > 0.0 ? 1.0 : 0.0;
      case ActivationKind::kIdentity: return 1.0;
    }
    return 1.0;
  }

  bool HasKinks() const { return kind != ActivationKind::kIdentity; }
};

inline std::string ActivationName(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::kLeakyRelu: return "leaky_relu";
    case ActivationKind::kRelu: return "relu";
    case ActivationKind::kIdentity: return "identity";
  }
  return "identity";
}

// Dense layer, weights row-major [rows = out][cols = in].
struct DenseLayer {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vector weights;
  Vector bias;

  double Weight(std::size_t r, std::size_t c) const { return weights[r * cols + c]; }

  Vector Apply(ConstSpan x) const {
    Vector out(bias);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* w = weights.data() + r * cols;
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += w[c] * x[c];
      out[r] += acc;
    }
    return out;
  }
};

enum class TargetKind { kLogit, kProba, kLogProba };

// A scalar read-out of the model: the logit, probability or log-probability
// of one class.
struct Target {
  TargetKind kind = TargetKind::kLogit;
  std::size_t class_index = 0;
};

inline std::string TargetKindName(TargetKind kind) {
  switch (kind) {
    case TargetKind::kLogit: return "logit";
    case TargetKind::kProba: return "proba";
    case TargetKind::kLogProba: return "log_proba";
  }
  return "logit";
}

inline TargetKind ParseTargetKind(const std::string& name) {
  if (name == "logit") return TargetKind::kLogit;
  if (name == "proba") return TargetKind::kProba;
  if (name == "log_proba") return TargetKind::kLogProba;
  Fail(ErrorCode::kInvalidArgument, "unknown target kind '" + name + "'");
}

inline Vector Softmax(ConstSpan logits) {
  Vector p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double top = *std::max_element(p.begin(), p.end());
  double total = 0.0;
  for (double& v : p) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : p) v /= total;
  return p;
}

inline double LogSoftmaxAt(ConstSpan logits, std::size_t index) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - top);
  return logits[index] - top - std::log(total);
}

inline std::size_t ArgMax(ConstSpan values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

class Model {
 public:
  Model(std::vector<DenseLayer> layers, Activation activation)
      : layers_(std::move(layers)), activation_(activation) {
    Validate(layers_);
    input_dim_ = layers_.front().cols;
    output_dim_ = layers_.back().rows;
  }

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }
  const Activation& activation() const { return activation_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  // Raw logits.
  Vector Forward(ConstSpan x) const {
    CheckInput(x);
    Vector a(x.begin(), x.end());
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      a = layers_[k].Apply(a);
      if (k + 1 < layers_.size()) {
        for (double& v : a) v = activation_.Apply(v);
      }
    }
    return a;
  }

  Vector PredictProba(ConstSpan x) const { return Softmax(Forward(x)); }

  // Ties go to the lowest class index.
  std::size_t PredictedClass(ConstSpan x) const { return ArgMax(Forward(x)); }

  double Evaluate(ConstSpan x, const Target& target) const {
    CheckClass(target.class_index);
    const Vector logits = Forward(x);
    switch (target.kind) {
      case TargetKind::kLogit: return logits[target.class_index];
      case TargetKind::kProba: return Softmax(logits)[target.class_index];
      case TargetKind::kLogProba: return LogSoftmaxAt(logits, target.class_index);
    }
    return 0.0;
  }

  // d target / d x by reverse-mode accumulation through the layer recurrence.
  Vector InputGradient(ConstSpan x, const Target& target) const {
    CheckInput(x);
    CheckClass(target.class_index);
    std::vector<Vector> pre;  // pre-activations of hidden layers
    pre.reserve(layers_.size());
    Vector a(x.begin(), x.end());
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      Vector z = layers_[k].Apply(a);
      if (k + 1 < layers_.size()) {
        a = z;
        for (double& v : a) v = activation_.Apply(v);
        pre.push_back(std::move(z));
      } else {
        a = std::move(z);
      }
    }
    Vector grad = OutputSensitivity(a, target);
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const DenseLayer& layer = layers_[k];
      if (k + 1 < layers_.size()) {
        const Vector& z = pre[k];
        for (std::size_t r = 0; r < layer.rows; ++r) grad[r] *= activation_.Derivative(z[r]);
      }
      Vector back(layer.cols, 0.0);
      for (std::size_t r = 0; r < layer.rows; ++r) {
        const double g = grad[r];
        if (g == 0.0) continue;
        const double* w = layer.weights.data() + r * layer.cols;
        for (std::size_t c = 0; c < layer.cols; ++c) back[c] += g * w[c];
      }
      grad = std::move(back);
    }
    return grad;
  }

  // Smallest |pre-activation| over hidden units; distance-to-kink proxy used
  // by gradient checks.
  double MinAbsPreActivation(ConstSpan x) const {
    CheckInput(x);
    double best = INFINITY;
    Vector a(x.begin(), x.end());
    for (std::size_t k = 0; k + 1 < layers_.size(); ++k) {
      a = layers_[k].Apply(a);
      for (double& v : a) {
        best = std::min(best, std::abs(v));
        v = activation_.Apply(v);
      }
    }
    return best;
  }

  friend bool operator==(const Model& a, const Model& b) {
    if (a.activation_.kind != b.activation_.kind ||
        a.activation_.slope != b.activation_.slope ||
        a.layers_.size() != b.layers_.size()) {
      return false;
    }
    for (std::size_t k = 0; k < a.layers_.size(); ++k) {
      const auto& la = a.layers_[k];
      const auto& lb = b.layers_[k];
      if (la.rows != lb.rows || la.cols != lb.cols ||
          !BitEqual(la.weights, lb.weights) || !BitEqual(la.bias, lb.bias)) {
        return false;
      }
    }
    return true;
  }

 private:
  static void Validate(const std::vector<DenseLayer>& layers) {
    Require(!layers.empty(), ErrorCode::kInvalidArgument, "model has no layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const DenseLayer& l = layers[k];
      const std::string where = "layer " + std::to_string(k);
      Require(l.rows > 0 && l.cols > 0, ErrorCode::kDimensionMismatch,
              where + " has an empty dimension");
      Require(l.weights.size() == l.rows * l.cols, ErrorCode::kDimensionMismatch,
              where + " weight count does not match rows*cols");
      Require(l.bias.size() == l.rows, ErrorCode::kDimensionMismatch,
              where + " bias length does not match rows");
      Require(k == 0 || l.cols == layers[k - 1].rows, ErrorCode::kDimensionMismatch,
              where + " input width does not chain with the previous layer");
      Require(AllFinite(l.weights) && AllFinite(l.bias), ErrorCode::kNonFiniteInput,
              where + " has non-finite parameters");
    }
  }

  void CheckInput(ConstSpan x) const {
    Require(x.size() == input_dim_, ErrorCode::kDimensionMismatch,
            "input has length " + std::to_string(x.size()) + ", model expects " +
                std::to_string(input_dim_));
    Require(AllFinite(x), ErrorCode::kNonFiniteInput, "input contains non-finite values");
  }

  void CheckClass(std::size_t c) const {
    Require(c < output_dim_, ErrorCode::kInvalidClass,
            "class " + std::to_string(c) + " out of range for " +
                std::to_string(output_dim_) + " outputs");
  }

  static Vector OutputSensitivity(ConstSpan logits, const Target& target) {
    Vector g(logits.size(), 0.0);
    switch (target.kind) {
      case TargetKind::kLogit:
        g[target.class_index] = 1.0;
        break;
      case TargetKind::kProba: {
        const Vector p = Softmax(logits);
        const double pc = p[target.class_index];
        for (std::size_t j = 0; j < g.size(); ++j) g[j] = -pc * p[j];
        g[target.class_index] += pc;
        break;
      }
      case TargetKind::kLogProba: {
        const Vector p = Softmax(logits);
        for (std::size_t j = 0; j < g.size(); ++j) g[j] = -p[j];
        g[target.class_index] += 1.0;
        break;
      }
    }
    return g;
  }

  std::vector<DenseLayer> layers_;
  Activation activation_;
  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
};

// --- Serialization ---------------------------------------------------------
//
// One JSON object: input_dim, output_dim, activation {name, slope}, layers
// [{rows, cols, weights (row-major), bias}]. Doubles are written in shortest
// round-trip form (at most 17 significant digits), so load(save(m)) == m
// bit for bit.

inline nlohmann::json ModelToJson(const Model& model) {
  nlohmann::json doc;
  doc["input_dim"] = model.input_dim();
  doc["output_dim"] = model.output_dim();
  doc["activation"] = {{"name", ActivationName(model.activation().kind)},
                       {"slope", model.activation().slope}};
  nlohmann::json layers = nlohmann::json::array();
  for (const DenseLayer& l : model.layers()) {
    layers.push_back({{"rows", l.rows}, {"cols", l.cols}, {"weights", l.weights}, {"bias", l.bias}});
  }
  doc["layers"] = std::move(layers);
  return doc;
}

namespace detail {

[[noreturn]] inline void Malformed(const std::string& field, const std::string& why) {
  Fail(ErrorCode::kMalformedModelFile, "field '" + field + "': " + why);
}

inline const nlohmann::json& Field(const nlohmann::json& obj, const std::string& key,
                                   const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) Malformed(path + key, "missing");
  return obj.at(key);
}

inline std::size_t CountField(const nlohmann::json& obj, const std::string& key,
                              const std::string& path) {
  const auto& v = Field(obj, key, path);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    Malformed(path + key, "expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

inline Vector RealsField(const nlohmann::json& obj, const std::string& key,
                         const std::string& path) {
  const auto& v = Field(obj, key, path);
  if (!v.is_array()) Malformed(path + key, "expected a list of reals");
  Vector out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) Malformed(path + key + "[" + std::to_string(i) + "]", "not a number");
    const double x = v[i].get<double>();
    if (!std::isfinite(x)) Malformed(path + key + "[" + std::to_string(i) + "]", "non-finite");
    out.push_back(x);
  }
  return out;
}

}  // namespace detail

inline Model ModelFromJson(const nlohmann::json& doc) {
  using detail::Malformed;
  const std::size_t input_dim = detail::CountField(doc, "input_dim", "");
  const std::size_t output_dim = detail::CountField(doc, "output_dim", "");
  const auto& act = detail::Field(doc, "activation", "");
  const auto& act_name = detail::Field(act, "name", "activation.");
  if (!act_name.is_string()) Malformed("activation.name", "expected a string");
  Activation activation;
  const std::string name = act_name.get<std::string>();
  if (name == "leaky_relu") {
    const auto& slope = detail::Field(act, "slope", "activation.");
    if (!slope.is_number() || !std::isfinite(slope.get<double>())) {
      Malformed("activation.slope", "expected a finite real");
    }
    activation = Activation::LeakyRelu(slope.get<double>());
  } else if (name == "relu") {
    activation = Activation::Relu();
  } else if (name == "identity") {
    activation = Activation::Identity();
  } else {
    Malformed("activation.name", "unknown activation '" + name + "'");
  }

  const auto& layers_json = detail::Field(doc, "layers", "");
  if (!layers_json.is_array() || layers_json.empty()) Malformed("layers", "expected a non-empty list");
  std::vector<DenseLayer> layers;
  std::size_t expected_cols = input_dim;
  for (std::size_t k = 0; k < layers_json.size(); ++k) {
    const std::string path = "layers[" + std::to_string(k) + "].";
    DenseLayer l;
    l.rows = detail::CountField(layers_json[k], "rows", path);
    l.cols = detail::CountField(layers_json[k], "cols", path);
    l.weights = detail::RealsField(layers_json[k], "weights", path);
    l.bias = detail::RealsField(layers_json[k], "bias", path);
    if (l.cols != expected_cols) {
      Malformed(path + "cols", "is " + std::to_string(l.cols) + ", expected " +
                                   std::to_string(expected_cols));
    }
    if (l.weights.size() != l.rows * l.cols) Malformed(path + "weights", "length != rows*cols");
    if (l.bias.size() != l.rows) Malformed(path + "bias", "length != rows");
    expected_cols = l.rows;
    layers.push_back(std::move(l));
  }
  if (expected_cols != output_dim) {
    Malformed("output_dim", "does not match the last layer's rows");
  }
  return Model(std::move(layers), activation);
}

inline void SaveModel(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIoError, "cannot open '" + path.string() + "' for writing");
  out << ModelToJson(model).dump(1) << '\n';
  if (!out) Fail(ErrorCode::kIoError, "write failed for '" + path.string() + "'");
}

inline Model LoadModel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIoError, "cannot open '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kMalformedModelFile, std::string("not a valid document: ") + e.what());
  }
  return ModelFromJson(doc);
}

}  // namespace xeval
