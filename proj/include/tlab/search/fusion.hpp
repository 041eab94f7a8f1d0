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

#ifndef TLAB_SEARCH_FUSION_HPP_
#define TLAB_SEARCH_FUSION_HPP_

#include <Eigen/Dense>

#include <cmath>

#include "tlab/common.hpp"
#include "tlab/scorer.hpp"

namespace tlab {

using LmState = Eigen::VectorXd;

/// Stateful next-label log-probability provider for shallow fusion.
/// next_logprobs returns V+1 entries; index 0 (blank) is never consulted.
class FusionLm {
 public:
  virtual ~FusionLm() = default;
  virtual int vocab_size() const = 0;
  virtual LmState initial_state() const = 0;
  virtual LmState advance(const LmState& state, int label) const = 0;
  virtual Eigen::VectorXd next_logprobs(const LmState& state) const = 0;
};

/// Recurrent LM built from a parameter set's prediction network and LM head.
/// Log-probs are normalized over the V real labels.
class RecurrentLm final : public FusionLm {
 public:
  explicit RecurrentLm(ModelParameters params) : p_(std::move(params)) {}

  int vocab_size() const override { return p_.config.vocab_size; }

  LmState initial_state() const override {
    return tlab::decode_step(p_, kStart, initial_decoder_state(p_)).state.hidden;
  }

  LmState advance(const LmState& state, int label) const override {
    return tlab::decode_step(p_, label, DecoderState{state}).state.hidden;
  }

  Eigen::VectorXd next_logprobs(const LmState& state) const override {
    Eigen::VectorXd z = p_.lm_weight * state + p_.lm_bias;
    Eigen::VectorXd out(z.size());
    const auto labels = z.tail(z.size() - 1);
    const double m = labels.maxCoeff();
    const double lse = m + std::log((labels.array() - m).exp().sum());
    out(0) = kLogZero;
    out.tail(z.size() - 1) = labels.array() - lse;
    return out;
  }

  const ModelParameters& parameters() const { return p_; }

 private:
  ModelParameters p_;
};

/// Context-free LM with fixed label log-probs; the uniform case assigns
/// log(1/V) to every label.
class UnigramLm final : public FusionLm {
 public:
  explicit UnigramLm(Eigen::VectorXd logprobs) : lp_(std::move(logprobs)) {
    require(lp_.size() >= 2, "UnigramLm: need at least one label");
  }
  static UnigramLm uniform(int vocab) {
    Eigen::VectorXd lp = Eigen::VectorXd::Constant(vocab + 1, -std::log(static_cast<double>(vocab)));
    lp(0) = kLogZero;
    return UnigramLm(lp);
  }

  int vocab_size() const override { return static_cast<int>(lp_.size()) - 1; }
  LmState initial_state() const override { return LmState(); }
  LmState advance(const LmState& s, int) const override { return s; }
  Eigen::VectorXd next_logprobs(const LmState&) const override { return lp_; }

 private:
  Eigen::VectorXd lp_;
};

}  // namespace tlab

#endif  // TLAB_SEARCH_FUSION_HPP_
