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

#ifndef TLAB_SEARCH_TSD_HPP_
#define TLAB_SEARCH_TSD_HPP_

#include "tlab/search/default_beam.hpp"

namespace tlab {

/// Time synchronous decoding: at most max_sym_exp - 1 label emissions per
/// frame, each round expanding the pruned label front of the previous one.
template <TransducerScorer S>
DecodeReport tsd(const S& scorer, BeamConfig cfg, const FusionLm* lm = nullptr) {
  cfg.strategy = Strategy::kTsd;
  SearchContext<S> ctx(scorer, cfg, lm);
  using Hyp = typename SearchContext<S>::Hyp;
  const int T = ctx.frames();
  const int V = ctx.vocab();
  std::vector<Hyp> B{Hyp{ctx.root(), 0.0, {}}};
  for (int t = 0; t < T; ++t) {
    std::vector<Hyp> A;
    std::vector<Hyp> C = std::move(B);
    for (int v = 0; v < cfg.max_sym_exp && !C.empty(); ++v) {
      ctx.resolve_hyps(C);
      std::vector<Hyp> D;
      for (const auto& h : C) {
        const Eigen::VectorXd lp = ctx.joint(t, h.node);
        detail::insert_merge(A, Hyp{h.node, h.score + lp(kBlank), h.label_frames});
        if (v < cfg.max_sym_exp - 1) {
          for (int k = 1; k <= V; ++k) D.push_back(ctx.extend(h, k, lp(k), t));
        }
      }
      prune(D, cfg.beam_size);
      C = std::move(D);
    }
    prune(A, cfg.beam_size);
    B = std::move(A);
  }
  return ctx.finish(std::move(B), cfg.nbest);
}

}  // namespace tlab

#endif  // TLAB_SEARCH_TSD_HPP_
