// Copyright 2026 The jumpbsde Authors
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

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace jumpbsde {

/// Base of every error raised by the library. `origin()` names the module
/// and operation that raised it, e.g. "backward::implicit_step".
class Error : public std::runtime_error {
 public:
  Error(std::string origin, const std::string& what)
      : std::runtime_error(what), origin_(std::move(origin)), message_(origin_ + ": " + what) {}

  const std::string& origin() const noexcept { return origin_; }
  const char* what() const noexcept override { return message_.c_str(); }

  /// Appends caller context, e.g. the grid size a study was running.
  void add_context(const std::string& context) { message_ += " [" + context + "]"; }

 private:
  std::string origin_;
  std::string message_;
};

/// Invalid or incomplete user configuration (bad keys, parameters, grids).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The time grid is too coarse for the implicit backward step to be a contraction.
class AdmissibilityError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or a solver that failed to converge.
class NumericalError : public Error {
 public:
  NumericalError(std::string origin, const std::string& what,
                 std::optional<std::size_t> path = std::nullopt)
      : Error(std::move(origin),
              path ? what + " (path " + std::to_string(*path) + ")" : what),
        path_(path) {}

  std::optional<std::size_t> path() const noexcept { return path_; }

 private:
  std::optional<std::size_t> path_;
};

/// Regression design that cannot be solved.
class EstimatorError : public Error {
 public:
  EstimatorError(std::string origin, const std::string& what, double condition)
      : Error(std::move(origin),
              what + " (condition estimate " + std::to_string(condition) + ")"),
        condition_(condition) {}

  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

}  // namespace jumpbsde
