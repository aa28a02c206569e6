// Copyright 2026 The HSFM Authors. All Rights Reserved.
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

#ifndef HSFM_ERRORS_HPP_
#define HSFM_ERRORS_HPP_

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hsfm {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: malformed config, invariant violation, out-of-range values.
// The CLI maps this family to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyInputError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UnsupportedConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// HSFM-FS / HSFH decoding failures.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class MagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  VersionError(const std::string& path, std::uint32_t found,
               std::uint32_t expected)
      : FormatError(path + ": unsupported format version " +
                    std::to_string(found) + " (expected " +
                    std::to_string(expected) + ")"),
        found_(found) {}
  std::uint32_t found() const { return found_; }

 private:
  std::uint32_t found_;
};

class TruncationError : public FormatError {
 public:
  TruncationError(const std::string& path, std::size_t expected,
                  std::size_t actual)
      : FormatError(path + ": truncated file, expected " +
                    std::to_string(expected) + " bytes but found " +
                    std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}
  std::size_t expected_bytes() const { return expected_; }
  std::size_t actual_bytes() const { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

// Runtime failures (exit code 2 in the CLI).
class IoError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// A loss or parameter became non-finite. `step` is the zero-based index of
// the offending gradient step within its phase.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& where, std::size_t step)
      : NumericError(where + ": non-finite value at step " +
                     std::to_string(step)),
        step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

}  // namespace hsfm

#endif  // HSFM_ERRORS_HPP_
