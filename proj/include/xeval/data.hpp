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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xeval/error.hpp"
#include "xeval/model.hpp"
#include "xeval/rng.hpp"
#include "xeval/vector_ops.hpp"

namespace xeval {

// Distance clamp for neighbor distances; keeps inverse-distance weights finite.
inline constexpr double kMinDistance = 1e-12;

struct FeatureStats {
  double mean = 0.0;
  double stddev = 1.0;
};

// Labeled rows, row-major [n x d]. Row order is the load order.
class Dataset {
 public:
  Dataset(std::size_t dim, Vector features, std::vector<int> labels,
          std::vector<std::string> feature_names = {})
      : dim_(dim), features_(std::move(features)), labels_(std::move(labels)),
        feature_names_(std::move(feature_names)) {
    Require(dim_ >= 1, ErrorCode::kInvalidArgument, "dataset needs at least one feature");
    Require(!labels_.empty(), ErrorCode::kEmptyDataset, "dataset has no rows");
    Require(features_.size() == dim_ * labels_.size(), ErrorCode::kDimensionMismatch,
            "feature matrix size does not match rows x dim");
    Require(AllFinite(features_), ErrorCode::kNonFiniteInput, "dataset has non-finite features");
    if (feature_names_.empty()) {
      for (std::size_t j = 0; j < dim_; ++j) feature_names_.push_back("x" + std::to_string(j));
    }
    Require(feature_names_.size() == dim_, ErrorCode::kDimensionMismatch,
            "feature name count does not match dim");
  }

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return dim_; }
  ConstSpan row(std::size_t i) const { return {features_.data() + i * dim_, dim_}; }
  int label(std::size_t i) const { return labels_[i]; }
  const std::vector<int>& labels() const { return labels_; }
  const Vector& features() const { return features_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::optional<std::vector<FeatureStats>>& normalization() const { return normalization_; }

  int max_label() const { return *std::max_element(labels_.begin(), labels_.end()); }

  // z-score every column in place. Constant columns keep std 1.
  void Normalize() {
    const std::size_t n = size();
    std::vector<FeatureStats> stats(dim_);
    for (std::size_t j = 0; j < dim_; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += features_[i * dim_ + j];
      mean /= static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double dv = features_[i * dim_ + j] - mean;
        ss += dv * dv;
      }
      double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
      if (!(sd > 0.0)) sd = 1.0;
      stats[j] = {mean, sd};
      for (std::size_t i = 0; i < n; ++i) {
        double& v = features_[i * dim_ + j];
        v = (v - mean) / sd;
      }
    }
    normalization_ = std::move(stats);
  }

  Dataset Subset(std::span<const std::size_t> rows) const {
    Vector f;
    std::vector<int> l;
    f.reserve(rows.size() * dim_);
    for (std::size_t r : rows) {
      const ConstSpan src = row(r);
      f.insert(f.end(), src.begin(), src.end());
      l.push_back(labels_[r]);
    }
    Dataset out(dim_, std::move(f), std::move(l), feature_names_);
    out.normalization_ = normalization_;
    return out;
  }

  Dataset WithFeatures(Vector features) const {
    Dataset out(dim_, std::move(features), labels_, feature_names_);
    out.normalization_ = normalization_;
    return out;
  }

 private:
  std::size_t dim_;
  Vector features_;
  std::vector<int> labels_;
  std::vector<std::string> feature_names_;
  std::optional<std::vector<FeatureStats>> normalization_;
};

// Seeded shuffle split; the first `train_fraction` of the permutation trains.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline Split TrainTestSplit(std::size_t n, double train_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.Shuffle(order);
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, n > 1 ? 1 : n, n > 1 ? n - 1 : n);
  Split split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// --- CSV -------------------------------------------------------------------

namespace detail {

inline std::vector<std::string_view> SplitCsvLine(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.remove_prefix(1);
    while (!c.empty() && (c.back() == ' ' || c.back() == '\t' || c.back() == '\r')) c.remove_suffix(1);
  }
  return cells;
}

inline std::optional<double> ParseReal(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

}  // namespace detail

// Loads a header-first CSV. Every non-label cell must be a decimal real; the
// label column must hold non-negative integers.
inline Dataset LoadCsv(const std::filesystem::path& path, const std::string& label_column,
                       bool normalize) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIoError, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) Fail(ErrorCode::kParseError, "row 0: missing header");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header;
  for (auto cell : detail::SplitCsvLine(line)) header.emplace_back(cell);
  std::optional<std::size_t> label_index;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == label_column) {
      label_index = c;
    } else {
      names.emplace_back(header[c]);
    }
  }
  if (!label_index) {
    Fail(ErrorCode::kMissingLabelColumn, "column '" + label_column + "' not in header of '" +
                                             path.string() + "'");
  }
  Vector features;
  std::vector<int> labels;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::SplitCsvLine(line);
    if (cells.size() != header.size()) {
      Fail(ErrorCode::kParseError, "row " + std::to_string(row) + ": expected " +
                                       std::to_string(header.size()) + " cells, got " +
                                       std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto value = detail::ParseReal(cells[c]);
      if (!value || (c == *label_index && (*value < 0 || std::floor(*value) != *value))) {
        Fail(ErrorCode::kParseError, "row " + std::to_string(row) + ", column '" +
                                         std::string(header[c]) + "': cannot parse '" +
                                         std::string(cells[c]) + "'");
      }
      if (c == *label_index) {
        labels.push_back(static_cast<int>(*value));
      } else {
        features.push_back(*value);
      }
    }
  }
  if (labels.empty()) Fail(ErrorCode::kEmptyDataset, "'" + path.string() + "' has no data rows");
  const std::size_t dim = names.size();
  Dataset ds(dim, std::move(features), std::move(labels), std::move(names));
  if (normalize) ds.Normalize();
  return ds;
}

// Writes features (17 significant digits) followed by the label column.
inline void SaveCsv(const Dataset& ds, const std::filesystem::path& path,
                    const std::string& label_column = "label") {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIoError, "cannot open '" + path.string() + "' for writing");
  for (const auto& name : ds.feature_names()) out << name << ',';
  out << label_column << '\n';
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.row(i)) {
      const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
      out.write(buf, res.ptr - buf);
      out << ',';
    }
    out << ds.label(i) << '\n';
  }
  if (!out) Fail(ErrorCode::kIoError, "write failed for '" + path.string() + "'");
}

// --- Baselines ---------------------------------------------------------------

enum class BaselineKind { kZero, kTrainingMean, kExplicit };

struct Baseline {
  BaselineKind kind = BaselineKind::kZero;
  Vector values;
};

inline Baseline ZeroBaseline(std::size_t dim) { return {BaselineKind::kZero, Vector(dim, 0.0)}; }

inline Baseline MakeBaseline(const Dataset& ds, BaselineKind kind, ConstSpan explicit_values = {}) {
  switch (kind) {
    case BaselineKind::kZero:
      return ZeroBaseline(ds.dim());
    case BaselineKind::kTrainingMean: {
      Vector mean(ds.dim(), 0.0);
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const ConstSpan r = ds.row(i);
        for (std::size_t j = 0; j < ds.dim(); ++j) mean[j] += r[j];
      }
      for (double& v : mean) v /= static_cast<double>(ds.size());
      return {kind, std::move(mean)};
    }
    case BaselineKind::kExplicit:
      Require(explicit_values.size() == ds.dim(), ErrorCode::kDimensionMismatch,
              "explicit baseline has length " + std::to_string(explicit_values.size()) +
                  ", dataset has " + std::to_string(ds.dim()) + " features");
      Require(AllFinite(explicit_values), ErrorCode::kNonFiniteInput, "baseline is not finite");
      return {kind, Vector(explicit_values.begin(), explicit_values.end())};
  }
  return ZeroBaseline(ds.dim());
}

inline std::string BaselineKindName(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kZero: return "zero";
    case BaselineKind::kTrainingMean: return "mean";
    case BaselineKind::kExplicit: return "explicit";
  }
  return "zero";
}

// --- Spatial queries -----------------------------------------------------------

struct NeighborhoodSpec {
  double radius = 1.0;
  Norm input_metric = Norm::kLInf;
  bool require_same_prediction = true;
};

struct Neighbor {
  std::size_t row = 0;
  double distance = 0.0;
};

namespace detail {

inline void SortNeighbors(std::vector<Neighbor>& out) {
  std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.row < b.row;
  });
}

}  // namespace detail

// Rows z with rho(x, z) <= r (and the same predicted class, when required).
// Rows equal to x are excluded. Ascending by distance, ties by row.
inline std::vector<Neighbor> Neighborhood(const Dataset& ds, const Model* model, ConstSpan x,
                                          const NeighborhoodSpec& spec) {
  Require(spec.radius > 0.0, ErrorCode::kInvalidArgument, "radius must be positive");
  Require(x.size() == ds.dim(), ErrorCode::kDimensionMismatch, "query dimension mismatch");
  Require(!spec.require_same_prediction || model != nullptr, ErrorCode::kInvalidArgument,
          "same-prediction neighborhoods need a model");
  std::optional<std::size_t> x_class;
  if (spec.require_same_prediction) x_class = model->PredictedClass(x);
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const ConstSpan z = ds.row(i);
    const double dist = Distance(x, z, spec.input_metric);
    if (dist == 0.0 && std::equal(x.begin(), x.end(), z.begin())) continue;
    if (dist > spec.radius) continue;
    if (x_class && model->PredictedClass(z) != *x_class) continue;
    out.push_back({i, std::max(dist, kMinDistance)});
  }
  detail::SortNeighbors(out);
  return out;
}

inline std::vector<Neighbor> NearestNeighbors(const Dataset& ds, ConstSpan x, std::size_t k,
                                              Norm input_metric) {
  Require(k >= 1, ErrorCode::kInvalidArgument, "k must be at least 1");
  Require(x.size() == ds.dim(), ErrorCode::kDimensionMismatch, "query dimension mismatch");
  std::vector<Neighbor> all;
  all.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const ConstSpan z = ds.row(i);
    if (std::equal(x.begin(), x.end(), z.begin())) continue;
    all.push_back({i, std::max(Distance(x, z, input_metric), kMinDistance)});
  }
  Require(k <= all.size(), ErrorCode::kKTooLarge,
          "k = " + std::to_string(k) + " but only " + std::to_string(all.size()) +
              " usable rows");
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                    [](const Neighbor& a, const Neighbor& b) {
                      return a.distance != b.distance ? a.distance < b.distance : a.row < b.row;
                    });
  all.resize(k);
  return all;
}

inline Norm ParseNorm(const std::string& name) {
  if (name == "linf" || name == "l_inf") return Norm::kLInf;
  if (name == "l2") return Norm::kL2;
  if (name == "l1") return Norm::kL1;
  Fail(ErrorCode::kInvalidArgument, "unknown norm '" + name + "'");
}

inline std::string NormName(Norm norm) {
  switch (norm) {
    case Norm::kL1: return "l1";
    case Norm::kL2: return "l2";
    case Norm::kLInf: return "linf";
  }
  return "l2";
}

}  // namespace xeval
