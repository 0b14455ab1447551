/*
 * Copyright 2026 The FedOA Simulator Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FEDOA_ERRORS_H_
#define FEDOA_ERRORS_H_

#include <stdexcept>
#include <string>

namespace fedoa {

// Dimension or structure mismatch between arguments.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A loss, gradient or feature became NaN or infinite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Distance undefined for the given inputs (zero norm, zero variance).
class DegenerateInputError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Invalid configuration value or malformed experiment file.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Reading or writing an artifact failed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced non-finite values. Carries the location of the failure.
class DivergenceError : public NumericError {
 public:
  DivergenceError(std::size_t round, std::size_t client, std::size_t step,
                  const std::string& what)
      : NumericError("divergence at round " + std::to_string(round) +
                     ", client " + std::to_string(client) + ", step " +
                     std::to_string(step) + ": " + what),
        round_(round),
        client_(client),
        step_(step) {}

  std::size_t round() const { return round_; }
  std::size_t client() const { return client_; }
  std::size_t step() const { return step_; }

 private:
  std::size_t round_;
  std::size_t client_;
  std::size_t step_;
};

}  // namespace fedoa

#endif  // FEDOA_ERRORS_H_
