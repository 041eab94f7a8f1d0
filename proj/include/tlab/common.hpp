// Copyright 2026 The tlab Authors.
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

#ifndef TLAB_COMMON_HPP_
#define TLAB_COMMON_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

namespace tlab {

/// Output index reserved for the blank symbol. Labels occupy 1..V.
inline constexpr int kBlank = 0;

/// Decoder input meaning "start of sequence". Never a valid output index.
inline constexpr int kStart = -1;

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

/// Invalid configuration (bad dimensions, unknown keys, impossible ranges).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke an operation's precondition (shape mismatch, bad label).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite input or a numeric failure such as a diverging loss.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Enumeration oracle asked to handle an instance beyond its guard.
class SizeGuardError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents (parameters, datasets, configs).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractViolation(what);
}

inline double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

inline double log_sum_exp(std::span<const double> xs) {
  double m = kLogZero;
  for (double x : xs) m = std::max(m, x);
  if (m == kLogZero) return kLogZero;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace tlab

#endif  // TLAB_COMMON_HPP_
