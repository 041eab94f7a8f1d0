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

#ifndef TLAB_SEARCH_ALSD_HPP_
#define TLAB_SEARCH_ALSD_HPP_

#include "tlab/search/core.hpp"

namespace tlab {

/// Alignment-length synchronous decoding. Step i advances every hypothesis
/// by one alignment symbol; a hypothesis with u labels sits at frame i - u.
template <TransducerScorer S>
DecodeReport alsd(const S& scorer, BeamConfig cfg, const FusionLm* lm = nullptr) {
  cfg.strategy = Strategy::kAlsd;
  SearchContext<S> ctx(scorer, cfg, lm);
  using Hyp = typename SearchContext<S>::Hyp;
  const int T = ctx.frames();
  const int V = ctx.vocab();
  const int u_max = std::min(cfg.u_max, T - 1);
  std::vector<Hyp> B{Hyp{ctx.root(), 0.0, {}}};
  std::vector<Hyp> F;
  for (int i = 0; i < T + u_max; ++i) {
    std::vector<Hyp> live;
    for (auto& h : B) {
      if (i - static_cast<int>(h.length()) <= T - 1) live.push_back(std::move(h));
    }
    ctx.resolve_hyps(live);
    std::vector<Hyp> A;
    for (const auto& h : live) {
      const int t = i - static_cast<int>(h.length());
      const Eigen::VectorXd lp = ctx.joint(t, h.node);
      Hyp blank{h.node, h.score + lp(kBlank), h.label_frames};
      if (t == T - 1) F.push_back(blank);
      A.push_back(std::move(blank));
      for (int k = 1; k <= V; ++k) A.push_back(ctx.extend(h, k, lp(k), t));
    }
    B = recombine(A);
    prune(B, cfg.beam_size);
    if (B.empty()) break;
  }
  if (F.empty()) {
    DecodeReport r = ctx.finish(std::move(B), cfg.nbest);
    r.incomplete = true;
    return r;
  }
  return ctx.finish(std::move(F), cfg.nbest);
}

}  // namespace tlab

#endif  // TLAB_SEARCH_ALSD_HPP_
