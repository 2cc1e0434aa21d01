// Copyright 2026 The kasr-sim Authors
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

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kasr {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed trace input. line() is 1-based; 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? what + " at line " + std::to_string(line) : what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A round or event breaks a structural invariant.
class InvariantError : public Error {
 public:
  using Error::Error;
};

// A page (or cluster of observations) cannot be given a stable identity.
class IdentityError : public Error {
 public:
  using Error::Error;
};

// Database file could not be decoded.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Incompatible page sizes or thresholds between inputs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace kasr
