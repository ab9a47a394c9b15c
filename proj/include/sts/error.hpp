// include/sts/error.hpp

// Copyright 2026  STS toolkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef STS_ERROR_HPP_
#define STS_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace sts {

// Error categories. The CLI maps these to process exit codes:
//   kConfig/kDimension/kValue -> 2, kIo -> 3, kNumeric -> 4, kCompat -> 5.
enum class ErrorCode {
  kConfig,     // malformed config / usage
  kDimension,  // shape or index mismatch between inputs
  kValue,      // invalid value (out-of-range id, negative scale, ...)
  kIo,         // missing or unreadable/unwritable file
  kNumeric,    // NaN/Inf or other numeric failure
  kCompat,     // incompatible artifact (checkpoint vs dataset, schema version)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string &msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline void Require(bool cond, ErrorCode code, const std::string &msg) {
  if (!cond) throw Error(code, msg);
}

}  // namespace sts

#endif  // STS_ERROR_HPP_
