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

// Strategy dispatch and the auto-N_step counting method.

#ifndef TLAB_SEARCH_SEARCH_HPP_
#define TLAB_SEARCH_SEARCH_HPP_

#include <cmath>
#include <span>

#include "tlab/search/alsd.hpp"
#include "tlab/search/core.hpp"
#include "tlab/search/default_beam.hpp"
#include "tlab/search/fusion.hpp"
#include "tlab/search/greedy.hpp"
#include "tlab/search/nsc.hpp"
#include "tlab/search/tsd.hpp"

namespace tlab {

template <TransducerScorer S>
DecodeReport decode(const S& scorer, const BeamConfig& cfg, const FusionLm* lm = nullptr) {
  switch (cfg.strategy) {
    case Strategy::kGreedy: return greedy(scorer, cfg);
    case Strategy::kDefault: return default_beam_search(scorer, cfg, lm);
    case Strategy::kAlsd: return alsd(scorer, cfg, lm);
    case Strategy::kTsd: return tsd(scorer, cfg, lm);
    case Strategy::kNsc: return nsc(scorer, cfg, lm);
  }
  throw ConfigError("unknown strategy");
}

struct AutoNstepEstimate {
  int auto_nstep = 1;
  std::map<int, long> histogram;    // all frames, including n = 0
  std::map<int, double> expansion;  // share of expanding frames per n >= 1, sums to 1
  double expected = 0.0;            // E[n] after coverage truncation
  int coverage_n = 0;               // largest n kept by the coverage cut
};

/// Expected number of expansions over frames that emit at least one label.
/// The distribution is first cut at the smallest n whose cumulative share
/// reaches `coverage`, so rare long bursts do not inflate the estimate;
/// auto_nstep is the ceiling of the remaining expectation.
inline AutoNstepEstimate auto_nstep_from_histogram(const std::map<int, double>& shares, double coverage = 0.995) {
  require(coverage > 0.0 && coverage <= 1.0, "auto_nstep: coverage must lie in (0, 1]");
  AutoNstepEstimate out;
  double total = 0.0;
  for (const auto& [n, c] : shares) {
    require(c >= 0.0, "auto_nstep: negative histogram entry");
    if (n >= 1) total += c;
  }
  if (total <= 0.0) return out;
  double cum = 0.0;
  double mass = 0.0;
  double weighted = 0.0;
  for (const auto& [n, c] : shares) {
    if (n < 1) continue;
    out.expansion[n] = c / total;
    if (out.coverage_n != 0) continue;
    cum += c / total;
    mass += c / total;
    weighted += n * c / total;
    if (cum >= coverage - 1e-12) out.coverage_n = n;
  }
  if (out.coverage_n == 0) out.coverage_n = out.expansion.rbegin()->first;
  out.expected = weighted / mass;
  out.auto_nstep = std::max(1, static_cast<int>(std::ceil(out.expected - 1e-9)));
  return out;
}

inline AutoNstepEstimate auto_nstep_from_histogram(const std::map<int, long>& counts, double coverage = 0.995) {
  std::map<int, double> shares;
  for (const auto& [n, c] : counts) shares[n] = static_cast<double>(c);
  auto out = auto_nstep_from_histogram(shares, coverage);
  out.histogram = counts;
  return out;
}

/// Runs the default beam search over calibration utterances and pools the
/// per-frame emission counts of each best hypothesis.
template <TransducerScorer S>
AutoNstepEstimate estimate_auto_nstep(std::span<const S> calibration, BeamConfig cfg, double coverage = 0.995) {
  if (calibration.empty()) throw ConfigError("auto_nstep estimation needs at least one calibration utterance");
  cfg.strategy = Strategy::kDefault;
  cfg.use_lm = false;
  std::map<int, long> pooled;
  for (const auto& s : calibration) {
    for (const auto& [n, c] : default_beam_search(s, cfg).expansion_histogram) pooled[n] += c;
  }
  return auto_nstep_from_histogram(pooled, coverage);
}

}  // namespace tlab

#endif  // TLAB_SEARCH_SEARCH_HPP_
