// include/mfa/error.h

// Copyright 2026  The mfa authors
//
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

#ifndef MFA_ERROR_H_
#define MFA_ERROR_H_

#include <stdexcept>
#include <string>

namespace mfa {

enum class ErrorCode {
  kNotFound,
  kUnsupportedFormat,
  kTruncatedFile,
  kIo,
  kTooShort,
  kShapeMismatch,
  kDegenerateBatch,
  kNonScalarLoss,
  kGraphConsumed,
  kNonFinite,
  kLabelOutOfRange,
  kEmptyClass,
  kZeroVector,
  kDegenerateCohort,
  kInvalidConfig,
  kInvalidArgument,
};

const char *ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string &what)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + what),
        code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Errors that come from the filesystem rather than the content.
inline bool IsIoError(ErrorCode code) {
  return code == ErrorCode::kNotFound || code == ErrorCode::kIo;
}

}  // namespace mfa

#endif  // MFA_ERROR_H_
