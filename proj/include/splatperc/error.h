// Copyright 2026 The splatperc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPLATPERC_ERROR_H_
#define SPLATPERC_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace splatperc {

enum class ErrorCode {
  kUnreadableFile,
  kUnsupportedFormat,
  kTruncated,
  kUnwritable,
  kShapeMismatch,
  kInvalidArgument,
  kNonFinite,
  kBadMagic,
  kVersionMismatch,
  kCorruptStream,
  kDivergence,
  kEmptyInput,
  kNotSymmetric,
  kNotPositiveSemidefinite,
};

std::string_view error_code_name(ErrorCode code);

// All library failures are reported as Error; code() distinguishes them.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnreadableFile: return "unreadable file";
    case ErrorCode::kUnsupportedFormat: return "unsupported format";
    case ErrorCode::kTruncated: return "truncated payload";
    case ErrorCode::kUnwritable: return "unwritable path";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kVersionMismatch: return "version mismatch";
    case ErrorCode::kCorruptStream: return "corrupt stream";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kEmptyInput: return "empty input";
    case ErrorCode::kNotSymmetric: return "not symmetric";
    case ErrorCode::kNotPositiveSemidefinite: return "not positive semidefinite";
  }
  return "unknown";
}

}  // namespace splatperc

#endif  // SPLATPERC_ERROR_H_
