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

// Error rates, real-time factor, expansion tables and parameter sweeps.

#ifndef TLAB_BENCH_HPP_
#define TLAB_BENCH_HPP_

#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tlab/data.hpp"
#include "tlab/search/search.hpp"

namespace tlab {

struct EditDistance {
  int distance = 0;
  int substitutions = 0;
  int insertions = 0;
  int deletions = 0;
};

/// Unit-cost Levenshtein distance. Insertions are symbols present only in
/// the hypothesis, deletions symbols missing from it.
template <class T>
EditDistance edit_distance(std::span<const T> ref, std::span<const T> hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      d[i][j] = std::min({d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1), d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  }
  // Backtrace, preferring matches/substitutions, then deletions.
  EditDistance e{d[n][m], 0, 0, 0};
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      e.substitutions += ref[i - 1] == hyp[j - 1] ? 0 : 1;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++e.deletions;
      --i;
    } else {
      ++e.insertions;
      --j;
    }
  }
  return e;
}

inline EditDistance edit_distance(const std::vector<int>& ref, const std::vector<int>& hyp) {
  return edit_distance(std::span<const int>(ref), std::span<const int>(hyp));
}

inline double error_rate(const EditDistance& e, std::size_t ref_len) {
  return static_cast<double>(e.distance) / static_cast<double>(std::max<std::size_t>(1, ref_len));
}

/// Corpus-level rate: total edits over total reference length.
inline double corpus_error_rate(std::span<const std::vector<int>> refs, std::span<const std::vector<int>> hyps) {
  require(refs.size() == hyps.size(), "corpus_error_rate: length mismatch");
  long edits = 0;
  long len = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    edits += edit_distance(refs[i], hyps[i]).distance;
    len += static_cast<long>(refs[i].size());
  }
  return static_cast<double>(edits) / static_cast<double>(std::max(1L, len));
}

inline constexpr double kDefaultFrameDuration = 0.01;

struct TimedRun {
  double wall_time = 0.0;
  int frames = 0;
};

struct RtfSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over runs
  std::vector<double> per_run;
  int skipped = 0;
};

/// RTF = wall_time / (T * frame_duration) per run, then mean and stddev.
/// Zero-length runs are skipped with a warning on `warn`.
inline RtfSummary measure_rtf(std::span<const TimedRun> runs, double frame_duration_s = kDefaultFrameDuration,
                              std::ostream* warn = &std::cerr) {
  require(frame_duration_s > 0.0, "measure_rtf: frame duration must be > 0");
  RtfSummary s;
  for (const auto& r : runs) {
    if (r.frames <= 0) {
      ++s.skipped;
      if (warn != nullptr) *warn << "warning: skipping zero-duration run in RTF\n";
      continue;
    }
    s.per_run.push_back(r.wall_time / (r.frames * frame_duration_s));
  }
  if (s.per_run.empty()) throw ConfigError("measure_rtf: no run with positive duration");
  for (double v : s.per_run) s.mean += v;
  s.mean /= static_cast<double>(s.per_run.size());
  double var = 0.0;
  for (double v : s.per_run) var += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(s.per_run.size()));
  return s;
}

struct ExpansionRow {
  std::string n;  // "1", "2", "3+"
  double percent = 0.0;
};

/// Share of expanding frames (n >= 1) by expansion count, bucketed 1, 2, 3+.
inline std::vector<ExpansionRow> expansion_stats(std::span<const DecodeReport> reports) {
  long c1 = 0;
  long c2 = 0;
  long c3 = 0;
  for (const auto& r : reports) {
    for (const auto& [n, c] : r.expansion_histogram) {
      if (n == 1) c1 += c;
      else if (n == 2) c2 += c;
      else if (n >= 3) c3 += c;
    }
  }
  const long total = c1 + c2 + c3;
  auto pct = [&](long c) { return total == 0 ? 0.0 : 100.0 * static_cast<double>(c) / static_cast<double>(total); };
  return {{"1", pct(c1)}, {"2", pct(c2)}, {"3+", pct(c3)}};
}

inline void write_expansion_table(std::ostream& os, const std::vector<ExpansionRow>& rows) {
  os << "n,percent\n";
  char buf[32];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.2f", r.percent);
    os << r.n << ',' << buf << '\n';
  }
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepSpec {
  Strategy strategy = Strategy::kNsc;
  std::vector<int> grid;  // empty: the strategy's default grid
  int beam_size = 5;
  int repetitions = 5;
  double frame_duration_s = kDefaultFrameDuration;
  BeamConfig base;  // other search parameters

  static std::vector<int> default_grid(Strategy s) {
    switch (s) {
      case Strategy::kAlsd: return {25, 50, 100};
      case Strategy::kTsd: return {2, 3, 4};
      case Strategy::kNsc: return {1, 2, 3};
      default: return {0};
    }
  }

  static std::string param_name(Strategy s) {
    switch (s) {
      case Strategy::kAlsd: return "u_max";
      case Strategy::kTsd: return "max_sym_exp";
      case Strategy::kNsc: return "nstep";
      default: return "none";
    }
  }

  std::vector<int> effective_grid() const { return grid.empty() ? default_grid(strategy) : grid; }

  void validate() const {
    if (effective_grid().empty()) throw ConfigError("sweep grid is empty");
    if (repetitions < 1) throw ConfigError("sweep repetitions must be >= 1");
    if (beam_size < 1) throw ConfigError("sweep beam must be >= 1");
    if (!(frame_duration_s > 0.0)) throw ConfigError("frame duration must be > 0");
  }

  BeamConfig config_at(int value) const {
    BeamConfig c = base;
    c.strategy = strategy;
    c.beam_size = beam_size;
    c.nbest = std::min(c.nbest, beam_size);
    switch (strategy) {
      case Strategy::kAlsd: c.u_max = value; break;
      case Strategy::kTsd: c.max_sym_exp = value; break;
      case Strategy::kNsc: c.nstep = value; break;
      default: break;
    }
    return c;
  }
};

struct SweepRow {
  std::string strategy;
  std::string param_name;
  int param_value = 0;
  int beam = 0;
  double cer = 0.0;
  double rtf_mean = 0.0;
  double rtf_std = 0.0;
  long joint_calls = 0;  // summed over the dataset, one repetition
  long decoder_calls = 0;
  std::vector<DecodeReport> reports;  // first repetition, for expansion tables
};

/// Decodes the whole dataset once per repetition at each grid point. Timing
/// runs serially; RTF per repetition is the summed wall time over summed
/// duration.
inline std::vector<SweepRow> sweep(const ModelParameters& p, const Dataset& ds, const SweepSpec& spec,
                                   const FusionLm* lm = nullptr) {
  spec.validate();
  if (ds.utterances.empty()) throw ConfigError("sweep dataset is empty");
  std::vector<SweepRow> rows;
  for (int value : spec.effective_grid()) {
    const BeamConfig cfg = spec.config_at(value);
    SweepRow row{to_string(spec.strategy), SweepSpec::param_name(spec.strategy), value, spec.beam_size,
                 0, 0, 0, 0, 0, {}};
    std::vector<TimedRun> runs;
    for (int rep = 0; rep < spec.repetitions; ++rep) {
      TimedRun run;
      std::vector<std::vector<int>> refs;
      std::vector<std::vector<int>> hyps;
      for (const auto& u : ds.utterances) {
        ModelScorer scorer(p, u.features);
        DecodeReport r = decode(scorer, cfg, lm);
        run.wall_time += r.wall_time;
        run.frames += static_cast<int>(u.features.rows());
        if (rep == 0) {
          refs.push_back(u.labels);
          hyps.push_back(r.best_labels());
          row.joint_calls += r.joint_calls;
          row.decoder_calls += r.decoder_calls;
          row.reports.push_back(std::move(r));
        }
      }
      if (rep == 0) row.cer = corpus_error_rate(refs, hyps);
      runs.push_back(run);
    }
    const RtfSummary rtf = measure_rtf(runs, spec.frame_duration_s);
    row.rtf_mean = rtf.mean;
    row.rtf_std = rtf.stddev;
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_sweep_csv_header(std::ostream& os) {
  os << "strategy,param_name,param_value,beam,cer,rtf_mean,rtf_std,joint_calls,decoder_calls\n";
}

inline void write_sweep_csv_row(std::ostream& os, const SweepRow& r) {
  os << r.strategy << ',' << r.param_name << ',' << r.param_value << ',' << r.beam << ','
     << detail::format_double(r.cer) << ',' << detail::format_double(r.rtf_mean) << ','
     << detail::format_double(r.rtf_std) << ',' << r.joint_calls << ',' << r.decoder_calls << '\n';
}

}  // namespace tlab

#endif  // TLAB_BENCH_HPP_
