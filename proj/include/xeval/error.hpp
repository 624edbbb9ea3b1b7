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

#include <stdexcept>
#include <string>
#include <string_view>

namespace xeval {

enum class ErrorCode {
  kDimensionMismatch,
  kNonFiniteInput,
  kInvalidClass,
  kInvalidArgument,
  kEmptyDataset,
  kLabelOutOfRange,
  kIoError,
  kMalformedModelFile,
  kParseError,
  kMissingLabelColumn,
  kKTooLarge,
  kSingularSystem,
  kDimensionTooLarge,
  kZeroAttribution,
  kEmptyNeighborhood,
  kEmptyNeighborhoodEverywhere,
  kZeroVariance,
  kTooFewPoints,
  kDegenerateDensity,
  kNonPositiveSelfInformation,
};

constexpr std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kInvalidClass: return "InvalidClass";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kMalformedModelFile: return "MalformedModelFile";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kMissingLabelColumn: return "MissingLabelColumn";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kSingularSystem: return "SingularSystem";
    case ErrorCode::kDimensionTooLarge: return "DimensionTooLarge";
    case ErrorCode::kZeroAttribution: return "ZeroAttribution";
    case ErrorCode::kEmptyNeighborhood: return "EmptyNeighborhood";
    case ErrorCode::kEmptyNeighborhoodEverywhere:
      return "EmptyNeighborhoodEverywhere";
    case ErrorCode::kZeroVariance: return "ZeroVariance";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kDegenerateDensity: return "DegenerateDensity";
    case ErrorCode::kNonPositiveSelfInformation:
      return "NonPositiveSelfInformation";
  }
  return "Unknown";
}

// All library failures are reported through this exception. The message is
// prefixed with the code name so CLI output is greppable.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void Require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) Fail(code, message);
}

}  // namespace xeval
