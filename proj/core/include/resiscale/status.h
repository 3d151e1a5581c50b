// Copyright 2026 The Resiscale Authors. All Rights Reserved.
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

#ifndef RESISCALE_STATUS_H_
#define RESISCALE_STATUS_H_

#include <stdexcept>
#include <string>

namespace resiscale {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kCorruptStream,
  kIo,
  kConfig,
};

const char* ErrorCodeName(ErrorCode code);

// All library failures are reported by throwing Error. The code lets callers
// (the CLI in particular) map failures onto stable exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void Check(bool condition, ErrorCode code, const char* message) {
  if (!condition) Fail(code, message);
}

inline void Check(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) Fail(code, message);
}

}  // namespace resiscale

#endif  // RESISCALE_STATUS_H_
