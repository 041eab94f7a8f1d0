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

#ifndef TLAB_SEARCH_GREEDY_HPP_
#define TLAB_SEARCH_GREEDY_HPP_

#include "tlab/search/core.hpp"

namespace tlab {

/// Argmax over V+1 symbols at every lattice point; ties go to blank, then the
/// lowest label. Emissions are capped at T labels per utterance, after which
/// the blank is taken at the same joint evaluation.
template <TransducerScorer S>
DecodeReport greedy(const S& scorer, BeamConfig cfg = {}) {
  cfg.strategy = Strategy::kGreedy;
  cfg.use_lm = false;
  cfg.beam_size = std::max(cfg.beam_size, 1);
  cfg.nbest = 1;
  SearchContext<S> ctx(scorer, cfg, nullptr);
  using Hyp = typename SearchContext<S>::Hyp;
  const int T = ctx.frames();
  Hyp h{ctx.root(), 0.0, {}};
  ctx.resolve(h.node);
  for (int t = 0; t < T; ++t) {
    while (true) {
      const Eigen::VectorXd lp = ctx.joint(t, h.node);
      Eigen::Index k = 0;
      for (Eigen::Index j = 1; j < lp.size(); ++j) {
        if (lp(j) > lp(k)) k = j;
      }
      if (k != kBlank && static_cast<int>(h.length()) < T) {
        h = ctx.extend(h, static_cast<int>(k), lp(k), t);
        ctx.resolve(h.node);
        continue;
      }
      h.score += lp(kBlank);
      break;
    }
  }
  return ctx.finish({h}, 1);
}

}  // namespace tlab

#endif  // TLAB_SEARCH_GREEDY_HPP_
