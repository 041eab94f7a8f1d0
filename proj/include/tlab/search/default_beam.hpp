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

#ifndef TLAB_SEARCH_DEFAULT_BEAM_HPP_
#define TLAB_SEARCH_DEFAULT_BEAM_HPP_

#include "tlab/search/core.hpp"

namespace tlab {

namespace detail {

// Inserts h into set, log-sum-exp merging with an equal label sequence.
template <class H>
void insert_merge(std::vector<H>& set, H h) {
  for (auto& e : set) {
    if (e.node == h.node) {
      if (better(h, e)) e.label_frames = std::move(h.label_frames);
      e.score = log_add(e.score, h.score);
      return;
    }
  }
  set.push_back(std::move(h));
}

}  // namespace detail

/// Graves-style search without prefix search. A holds hypotheses still
/// emitting at frame t, B those that consumed frame t. Duplicate sequences
/// entering B are merged. Label emissions are capped at T per utterance.
template <TransducerScorer S>
DecodeReport default_beam_search(const S& scorer, BeamConfig cfg, const FusionLm* lm = nullptr) {
  cfg.strategy = Strategy::kDefault;
  SearchContext<S> ctx(scorer, cfg, lm);
  using Hyp = typename SearchContext<S>::Hyp;
  const int T = ctx.frames();
  const int V = ctx.vocab();
  std::vector<Hyp> B{Hyp{ctx.root(), 0.0, {}}};
  for (int t = 0; t < T; ++t) {
    std::vector<Hyp> A = std::move(B);
    B.clear();
    while (!A.empty()) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < A.size(); ++i) {
        if (better(A[i], A[best])) best = i;
      }
      Hyp h = std::move(A[best]);
      A[best] = std::move(A.back());
      A.pop_back();

      const Eigen::VectorXd lp = ctx.joint(t, h.node);
      detail::insert_merge(B, Hyp{h.node, h.score + lp(kBlank), h.label_frames});
      if (static_cast<int>(h.length()) < T) {
        for (int k = 1; k <= V; ++k) A.push_back(ctx.extend(h, k, lp(k), t));
      }
      if (A.empty()) break;
      double a_best = kLogZero;
      for (const auto& a : A) a_best = std::max(a_best, a.score);
      int ahead = 0;
      for (const auto& b : B) ahead += b.score > a_best ? 1 : 0;
      if (ahead >= cfg.beam_size) break;
    }
    prune(B, cfg.beam_size);
  }
  return ctx.finish(std::move(B), cfg.nbest);
}

}  // namespace tlab

#endif  // TLAB_SEARCH_DEFAULT_BEAM_HPP_
