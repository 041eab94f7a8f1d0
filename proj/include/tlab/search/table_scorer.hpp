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

#ifndef TLAB_SEARCH_TABLE_SCORER_HPP_
#define TLAB_SEARCH_TABLE_SCORER_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "tlab/common.hpp"
#include "tlab/scorer.hpp"

namespace tlab {

/// Scorer whose joint distribution is an arbitrary function of (frame,
/// emitted prefix). The decoder "state" is the prefix itself, so any
/// transducer over short sequences can be tabulated exactly.
class TableScorer {
 public:
  using State = std::vector<int>;
  using Fn = std::function<Eigen::VectorXd(int t, const std::vector<int>& prefix)>;

  struct Step {
    Eigen::VectorXd output;
    State state;
  };

  TableScorer(int frames, int vocab, Fn logprobs) : T_(frames), V_(vocab), fn_(std::move(logprobs)) {
    require(frames >= 1 && vocab >= 1, "TableScorer: need T >= 1 and V >= 1");
  }

  /// Pseudo-random distributions keyed by (seed, t, prefix). Larger
  /// `sharpness` gives peakier rows; `blank_bias` is added to the blank logit.
  static TableScorer random(int frames, int vocab, std::uint64_t seed, double sharpness = 2.0, double blank_bias = 0.0) {
    return TableScorer(frames, vocab, [=](int t, const std::vector<int>& prefix) {
      std::uint64_t h = seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(t) + 1;
      for (int k : prefix) h = mix(h ^ static_cast<std::uint64_t>(k + 17));
      Eigen::VectorXd z(vocab + 1);
      for (int k = 0; k <= vocab; ++k) {
        const std::uint64_t r = mix(h + static_cast<std::uint64_t>(k) * 0xD1B54A32D192ED03ULL);
        z(k) = sharpness * (static_cast<double>(r >> 11) * 0x1.0p-53 * 2.0 - 1.0);
      }
      z(0) += blank_bias;
      return log_softmax(z);
    });
  }

  int num_frames() const { return T_; }
  int vocab_size() const { return V_; }
  State initial_state() const { return {}; }

  Step decode_step(int prev_label, const State& s) const {
    if (prev_label == kBlank || prev_label < kStart || prev_label > V_) {
      throw ContractViolation("TableScorer: bad decoder input label");
    }
    State next = s;
    if (prev_label != kStart) next.push_back(prev_label);
    Eigen::VectorXd out(static_cast<Eigen::Index>(next.size()));
    for (std::size_t i = 0; i < next.size(); ++i) out(static_cast<Eigen::Index>(i)) = next[i];
    return {out, next};
  }

  Eigen::VectorXd joint_logprobs(int t, const Eigen::VectorXd& dec_out) const {
    require(t >= 0 && t < T_, "TableScorer: frame out of range");
    std::vector<int> prefix(static_cast<std::size_t>(dec_out.size()));
    for (Eigen::Index i = 0; i < dec_out.size(); ++i) prefix[static_cast<std::size_t>(i)] = static_cast<int>(dec_out(i));
    return fn_(t, prefix);
  }

  /// Full posterior lattice for target y: row u conditions on y_{1:u}.
  PosteriorLattice lattice(const std::vector<int>& y) const {
    const int U = static_cast<int>(y.size());
    PosteriorLattice lat(T_, U, V_, 0.0);
    for (int u = 0; u <= U; ++u) {
      const std::vector<int> prefix(y.begin(), y.begin() + u);
      for (int t = 0; t < T_; ++t) {
        const Eigen::VectorXd lp = fn_(t, prefix);
        for (int k = 0; k <= V_; ++k) lat(t, u, k) = lp(k);
      }
    }
    return lat;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  int T_;
  int V_;
  Fn fn_;
};

}  // namespace tlab

#endif  // TLAB_SEARCH_TABLE_SCORER_HPP_
