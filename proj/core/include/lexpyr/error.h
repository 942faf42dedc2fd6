// Copyright 2026 The lexpyr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LEXPYR_ERROR_H_
#define LEXPYR_ERROR_H_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lexpyr {

// Base class for every error raised by the library. Callers that only need
// a message can catch std::runtime_error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input files (codebooks, checkpoints, IDX data).
class FormatError : public Error {
 public:
  using Error::Error;
};

// A precondition on arguments was violated (shape mismatch, bad index...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Token-string segmentation failed at a byte offset.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t offset)
      : Error(message + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace lexpyr

#endif  // LEXPYR_ERROR_H_
