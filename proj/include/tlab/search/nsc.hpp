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

#ifndef TLAB_SEARCH_NSC_HPP_
#define TLAB_SEARCH_NSC_HPP_

#include <unordered_set>

#include "tlab/search/core.hpp"

namespace tlab {

/// N-step constrained beam search: at most nstep label emissions per frame,
/// with prefix-score accumulation over the frame's starting hypotheses.
///
/// Rounds are 0-based; round nstep-1 is the final one, whose label front is
/// closed with a fresh blank evaluation. With nstep = 1 and auto_nstep > 1
/// that blank is skipped and the front is carried to the next frame as is.
template <TransducerScorer S>
DecodeReport nsc(const S& scorer, BeamConfig cfg, const FusionLm* lm = nullptr) {
  cfg.strategy = Strategy::kNsc;
  SearchContext<S> ctx(scorer, cfg, lm);
  using Hyp = typename SearchContext<S>::Hyp;
  using Node = typename SearchContext<S>::Node;
  const int T = ctx.frames();
  const int V = ctx.vocab();
  const bool skip_final_blank = cfg.nstep == 1 && cfg.auto_nstep > 1;

  std::vector<Hyp> B{Hyp{ctx.root(), 0.0, {}}};
  for (int t = 0; t < T; ++t) {
    std::vector<Hyp> A = std::move(B);
    B.clear();
    // Longest first, so each y is finished before it serves as a prefix.
    std::stable_sort(A.begin(), A.end(), [](const Hyp& a, const Hyp& b) { return a.length() > b.length(); });
    ctx.resolve_hyps(A);
    std::vector<Eigen::VectorXd> lp_a;
    lp_a.reserve(A.size());
    for (const auto& h : A) lp_a.push_back(ctx.joint(t, h.node));

    std::unordered_map<const Node*, std::size_t> index;
    for (std::size_t i = 0; i < A.size(); ++i) index.emplace(A[i].node, i);
    std::vector<double> orig(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) orig[i] = A[i].score;

    for (std::size_t j = 0; j < A.size(); ++j) {
      for (std::size_t i = 0; i < A.size(); ++i) {
        const int gap = static_cast<int>(A[j].length()) - static_cast<int>(A[i].length());
        if (gap < 1 || gap >= cfg.prefix_alpha || !A[i].node->is_prefix_of(A[j].node)) continue;
        const auto& y = A[j].labels();
        Node* n = A[i].node;
        std::size_t pos = A[i].length();
        double curr = orig[i] + lp_a[i](y[pos]) + ctx.lm_bonus(n, y[pos]);
        for (++pos; pos < y.size(); ++pos) {
          n = ctx.child(n, y[pos - 1]);
          auto it = index.find(n);
          const Eigen::VectorXd lp = it != index.end() ? lp_a[it->second] : ctx.joint(t, n);
          curr += lp(y[pos]) + ctx.lm_bonus(n, y[pos]);
        }
        A[j].score = log_add(A[j].score, curr);
      }
    }

    std::unordered_set<const Node*> seen;
    for (const auto& h : A) seen.insert(h.node);

    std::vector<Hyp> S_set;
    std::vector<Hyp> front = A;
    std::vector<Eigen::VectorXd> lp_front = lp_a;
    std::vector<Hyp> last;
    for (int round = 0; round < cfg.nstep; ++round) {
      if (round > 0) {
        lp_front.clear();
        for (const auto& h : front) lp_front.push_back(ctx.joint(t, h.node));
      }
      std::vector<Hyp> D;
      for (std::size_t i = 0; i < front.size(); ++i) {
        const auto& h = front[i];
        S_set.push_back(Hyp{h.node, h.score + lp_front[i](kBlank), h.label_frames});
        for (int k = 1; k <= V; ++k) {
          if (seen.count(ctx.child(h.node, k)) != 0) continue;
          D.push_back(ctx.extend(h, k, lp_front[i](k), t));
        }
      }
      prune(D, cfg.beam_size);
      if (D.empty()) break;
      ctx.resolve_hyps(D);
      if (round < cfg.nstep - 1) {
        front = std::move(D);
        continue;
      }
      if (!skip_final_blank) {
        for (auto& h : D) h.score += ctx.joint(t, h.node)(kBlank);
      }
      last = std::move(D);
    }
    S_set.insert(S_set.end(), std::make_move_iterator(last.begin()), std::make_move_iterator(last.end()));
    B = recombine(S_set);
    prune(B, cfg.beam_size);
  }
  return ctx.finish(std::move(B), cfg.nbest);
}

}  // namespace tlab

#endif  // TLAB_SEARCH_NSC_HPP_
