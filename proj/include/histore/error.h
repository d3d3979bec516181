// Copyright 2026 The histore Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef HISTORE_ERROR_H_
#define HISTORE_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace histore {

enum class ErrorCode {
  kConfig,
  kInvalidArgument,
  kPromptShape,
  kBackend,
  kNotFound,
  kAlreadyExists,
  kValidation,
  kMissingInput,
  kStaleInput,
  kUnsupported,
  kNumeric,
  kIo,
};

std::string_view error_code_name(ErrorCode code);

// All library failures are reported through this exception. `field` names
// the offending input field when one exists; the review service forwards it
// to clients verbatim.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string &message, std::string field = {})
      : std::runtime_error(message), code_(code), field_(std::move(field)) {}

  ErrorCode code() const { return code_; }
  const std::string &field() const { return field_; }

 private:
  ErrorCode code_;
  std::string field_;
};

}  // namespace histore

#endif  // HISTORE_ERROR_H_
