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
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "xeval/error.hpp"

namespace xeval {

using Vector = std::vector<double>;
using ConstSpan = std::span<const double>;

enum class Norm { kL1, kL2, kLInf };

inline void CheckSameSize(ConstSpan a, ConstSpan b, const char* what) {
  Require(a.size() == b.size(), ErrorCode::kDimensionMismatch,
          std::string(what) + ": lengths " + std::to_string(a.size()) +
              " and " + std::to_string(b.size()));
}

inline bool AllFinite(ConstSpan v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

inline double NormOf(ConstSpan v, Norm norm) {
  double acc = 0.0;
  switch (norm) {
    case Norm::kL1:
      for (double x : v) acc += std::abs(x);
      return acc;
    case Norm::kL2:
      for (double x : v) acc += x * x;
      return std::sqrt(acc);
    case Norm::kLInf:
      for (double x : v) acc = std::max(acc, std::abs(x));
      return acc;
  }
  return acc;
}

inline double Distance(ConstSpan a, ConstSpan b, Norm norm) {
  CheckSameSize(a, b, "Distance");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = std::abs(a[i] - b[i]);
    switch (norm) {
      case Norm::kL1: acc += diff; break;
      case Norm::kL2: acc += diff * diff; break;
      case Norm::kLInf: acc = std::max(acc, diff); break;
    }
  }
  return norm == Norm::kL2 ? std::sqrt(acc) : acc;
}

inline double Dot(ConstSpan a, ConstSpan b) {
  CheckSameSize(a, b, "Dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double Sum(ConstSpan v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc;
}

inline Vector Scaled(ConstSpan v, double factor) {
  Vector out(v.begin(), v.end());
  for (double& x : out) x *= factor;
  return out;
}

// w * a + (1 - w) * b
inline Vector Mix(ConstSpan a, ConstSpan b, double w) {
  CheckSameSize(a, b, "Mix");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = w * a[i] + (1.0 - w) * b[i];
  return out;
}

inline bool IsZero(ConstSpan v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

inline bool BitEqual(ConstSpan a, ConstSpan b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

// FNV-1a over the raw bytes; keys per-input random streams on input content.
inline std::uint64_t HashValues(ConstSpan v) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double x : v) {
    if (x == 0.0) x = 0.0;  // fold -0.0
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// Mean and population standard deviation.
struct Summary {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};

inline Summary Summarize(ConstSpan values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  s.mean = Sum(values) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double x : values) ss += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(values.size()));
  return s;
}

}  // namespace xeval
