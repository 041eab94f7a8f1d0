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

#ifndef TLAB_LATTICE_HPP_
#define TLAB_LATTICE_HPP_

#include <cmath>
#include <span>
#include <vector>

#include "tlab/common.hpp"

namespace tlab {

/// Dense T x (U+1) x (V+1) table of log-probabilities. Entry (t, u, k) is
/// log P(k | x, y_{1:u}) at frame t; k = 0 is blank. All indices 0-based.
class PosteriorLattice {
 public:
  PosteriorLattice() = default;
  PosteriorLattice(int frames, int target_len, int vocab_size, double fill = 0.0)
      : frames_(frames),
        target_len_(target_len),
        vocab_size_(vocab_size),
        data_(static_cast<std::size_t>(frames) * (target_len + 1) * (vocab_size + 1), fill) {
    require(frames >= 1 && target_len >= 0 && vocab_size >= 1, "PosteriorLattice: bad shape");
  }

  int frames() const { return frames_; }
  int target_len() const { return target_len_; }
  int vocab_size() const { return vocab_size_; }
  int num_symbols() const { return vocab_size_ + 1; }

  double& operator()(int t, int u, int k) { return data_[index(t, u, k)]; }
  double operator()(int t, int u, int k) const { return data_[index(t, u, k)]; }

  std::span<double> slice(int t, int u) {
    return {data_.data() + index(t, u, 0), static_cast<std::size_t>(num_symbols())};
  }
  std::span<const double> slice(int t, int u) const {
    return {data_.data() + index(t, u, 0), static_cast<std::size_t>(num_symbols())};
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const PosteriorLattice& o) const {
    return frames_ == o.frames_ && target_len_ == o.target_len_ && vocab_size_ == o.vocab_size_;
  }

  /// Largest |1 - sum_k exp(entry)| over all slices.
  double max_normalization_error() const {
    double worst = 0.0;
    for (int t = 0; t < frames_; ++t) {
      for (int u = 0; u <= target_len_; ++u) {
        double s = 0.0;
        for (double v : slice(t, u)) s += std::exp(v);
        worst = std::max(worst, std::abs(1.0 - s));
      }
    }
    return worst;
  }

 private:
  std::size_t index(int t, int u, int k) const {
    return (static_cast<std::size_t>(t) * (target_len_ + 1) + u) * (vocab_size_ + 1) + k;
  }

  int frames_ = 0;
  int target_len_ = 0;
  int vocab_size_ = 0;
  std::vector<double> data_;
};

}  // namespace tlab

#endif  // TLAB_LATTICE_HPP_
