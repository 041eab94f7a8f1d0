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

#ifndef TLAB_OBJECTIVE_HPP_
#define TLAB_OBJECTIVE_HPP_

#include <optional>
#include <span>

#include "tlab/losses.hpp"
#include "tlab/scorer.hpp"

namespace tlab {

struct UtteranceObjective {
  LossBreakdown breakdown;
  bool ctc_infeasible = false;
  std::optional<ModelParameters> grad;
};

/// Multi-task loss of one utterance and, optionally, its parameter gradient.
/// Disabled tasks are neither evaluated nor differentiated. A CTC-infeasible
/// target contributes zero CTC loss and is flagged.
inline UtteranceObjective evaluate_objective(const ModelParameters& p, const Eigen::MatrixXd& features,
                                             std::span<const int> labels, const TaskWeights& w,
                                             double smoothing = 0.1, bool with_grad = true) {
  w.validate();
  const bool want_aux = w.use_aux_trans || w.use_symm_kl;
  if (want_aux && !p.has_aux()) throw ConfigError("aux-trans / symm-KL enabled but no aux layers configured");

  const ForwardPass f = forward(p, features, labels, {.aux = want_aux, .ctc = w.use_ctc, .lm = w.use_lm});
  LossComponents c;
  UpstreamGradients up;
  UtteranceObjective out;

  if (w.use_trans) {
    auto r = transducer_loss(f.lattice, labels);
    c.trans = r.loss;
    for (double& g : r.grad.data()) g *= w.trans;
    up.main = std::move(r.grad);
  }
  if (w.use_ctc) {
    auto r = ctc_loss(f.ctc_logprobs, labels);
    if (r.feasible) {
      c.ctc = r.loss;
      up.ctc_logprobs = w.ctc * r.grad;
    } else {
      out.ctc_infeasible = true;
    }
  }
  if (w.use_aux_trans) {
    auto r = aux_transducer_loss(f.aux_lattices, labels);
    c.aux_trans = r.loss;
    for (auto& g : r.grads) {
      for (double& x : g.data()) x *= w.aux_trans;
    }
    up.aux_stopped = std::move(r.grads);
  }
  if (w.use_symm_kl) {
    auto r = symm_kl(f.lattice, f.aux_lattices, std::vector<bool>(f.aux_lattices.size(), true));
    c.symm_kl = r.loss;
    for (double& x : r.main_grad.data()) x *= w.symm_kl;
    if (up.main) {
      auto d = up.main->data();
      const auto s = r.main_grad.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
    } else {
      up.main = std::move(r.main_grad);
    }
    for (auto& g : r.aux_grads) {
      for (double& x : g.data()) x *= w.symm_kl;
    }
    up.aux_full = std::move(r.aux_grads);
  }
  if (w.use_lm) {
    auto r = lm_loss(f.lm_logits, labels, smoothing);
    c.lm = r.loss;
    if (!labels.empty()) up.lm_logits = w.lm * r.grad;
  }

  out.breakdown = total_loss(c, w);
  if (!std::isfinite(out.breakdown.l_total)) throw NumericError("non-finite utterance loss");
  if (with_grad) out.grad = backprop(p, f, up);
  return out;
}

}  // namespace tlab

#endif  // TLAB_OBJECTIVE_HPP_
