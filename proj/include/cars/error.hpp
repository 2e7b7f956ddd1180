// Copyright 2026 The CARS Toolkit Authors
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

#pragma once

#include <stdexcept>
#include <string>

namespace cars {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input (bad record, bad label, bad line); message carries the location.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A data constraint was violated (duplicate ids, duplicate judgment pairs).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// An argument or configuration value is out of its valid range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Incompatible components wired together (provider/index/cache mismatches,
/// or a search mode invoked without the inputs it needs).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A persisted file does not have the expected layout or version.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// The data at hand cannot support the requested computation
/// (empty inputs, zero-norm vectors, empty evaluation sets).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A remote call failed after exhausting retries.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts)
      : Error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

}  // namespace cars
