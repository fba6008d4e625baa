/**
 * Copyright 2026 The memsync Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace memsync {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter is outside its documented domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Conditioning on an event of probability zero (e.g. a herald click when q = 0).
class UndefinedConditional : public Error {
 public:
  using Error::Error;
};

/// A root bracket had no sign change, or the root finder otherwise failed.
class SolverFailure : public Error {
 public:
  using Error::Error;
};

/// A Markov chain without a unique stationary distribution.
class DegenerateChain : public Error {
 public:
  using Error::Error;
};

/// Power iteration hit its iteration cap.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// A fidelity denominator is zero or negative.
class UndefinedFidelity : public Error {
 public:
  using Error::Error;
};

/// The threshold search found no p at which the fidelity reaches the target.
class NoSolution : public Error {
 public:
  using Error::Error;
};

/// Configuration problems. The message always starts with the offending key path.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& key_path, const std::string& what)
      : Error(key_path + ": " + what), key_path_(key_path) {}
  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

}  // namespace memsync
