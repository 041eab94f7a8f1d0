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

// Shared machinery for the transducer searches: the scorer concept, beam
// configuration, hypotheses, the per-call prefix cache and instrumentation.

#ifndef TLAB_SEARCH_CORE_HPP_
#define TLAB_SEARCH_CORE_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <concepts>
#include <deque>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "tlab/common.hpp"
#include "tlab/search/fusion.hpp"

namespace tlab {

/// A scorer bound to one utterance: encoder frames are fixed, the decoder is
/// stepped label by label and the joint returns normalized log-probs.
template <class S>
concept TransducerScorer = requires(const S& s, const typename S::State& st, int label, int t,
                                    const Eigen::VectorXd& dec) {
  { s.num_frames() } -> std::convertible_to<int>;
  { s.vocab_size() } -> std::convertible_to<int>;
  { s.initial_state() } -> std::convertible_to<typename S::State>;
  { s.decode_step(label, st).output } -> std::convertible_to<Eigen::VectorXd>;
  { s.decode_step(label, st).state } -> std::convertible_to<typename S::State>;
  { s.joint_logprobs(t, dec) } -> std::convertible_to<Eigen::VectorXd>;
};

enum class Strategy { kGreedy, kDefault, kAlsd, kTsd, kNsc };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kGreedy: return "greedy";
    case Strategy::kDefault: return "default";
    case Strategy::kAlsd: return "alsd";
    case Strategy::kTsd: return "tsd";
    case Strategy::kNsc: return "nsc";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "greedy") return Strategy::kGreedy;
  if (s == "default") return Strategy::kDefault;
  if (s == "alsd") return Strategy::kAlsd;
  if (s == "tsd") return Strategy::kTsd;
  if (s == "nsc") return Strategy::kNsc;
  throw ConfigError("unknown strategy '" + s + "'");
}

struct BeamConfig {
  Strategy strategy = Strategy::kDefault;
  int beam_size = 5;
  int nbest = 1;
  int u_max = 50;       // ALSD, clamped to T-1 per utterance
  int max_sym_exp = 3;  // TSD
  int nstep = 2;        // NSC
  int auto_nstep = 1;   // NSC
  int prefix_alpha = 2; // NSC
  bool use_lm = false;
  double lm_weight = 0.0;

  void validate() const {
    if (beam_size < 1) throw ConfigError("beam size must be >= 1");
    if (nbest < 1 || nbest > beam_size) throw ConfigError("nbest must lie in 1..beam");
    if (u_max < 1) throw ConfigError("u_max must be >= 1");
    if (max_sym_exp < 1) throw ConfigError("max_sym_exp must be >= 1");
    if (nstep < 1 || auto_nstep < 1) throw ConfigError("nstep and auto_nstep must be >= 1");
    if (prefix_alpha < 1) throw ConfigError("prefix alpha must be >= 1");
    if (lm_weight < 0.0) throw ConfigError("lm weight must be >= 0");
  }
};

struct NBestEntry {
  std::vector<int> labels;
  double score = 0.0;
  std::vector<int> label_frames;  // frame at which each label was emitted
};

struct DecodeReport {
  std::vector<NBestEntry> nbest;  // descending score
  long joint_calls = 0;
  long decoder_calls = 0;
  double wall_time = 0.0;
  // n -> number of frames at which the best hypothesis emitted exactly n labels
  std::map<int, long> expansion_histogram;
  bool incomplete = false;  // ALSD only: no hypothesis reached the last frame

  const std::vector<int>& best_labels() const {
    static const std::vector<int> kEmpty;
    return nbest.empty() ? kEmpty : nbest.front().labels;
  }
  double best_score() const { return nbest.empty() ? kLogZero : nbest.front().score; }
};

// ---------------------------------------------------------------------------
// Prefix cache

/// One node per distinct label prefix seen during a decode call. Decoder
/// outputs and LM scores are computed at most once per node.
template <class State>
struct PrefixNode {
  PrefixNode* parent = nullptr;
  int label = kStart;
  std::vector<int> labels;
  bool decoded = false;
  Eigen::VectorXd dec_out;
  State state{};  // state after consuming `labels`, valid once decoded
  std::unordered_map<int, PrefixNode*> children;

  bool lm_ready = false;
  LmState lm_state;
  Eigen::VectorXd lm_logprobs;

  int depth() const { return static_cast<int>(labels.size()); }
  bool is_prefix_of(const PrefixNode* o) const {
    if (depth() >= o->depth()) return false;
    const PrefixNode* n = o;
    while (n->depth() > depth()) n = n->parent;
    return n == this;
  }
};

template <class State>
struct Hypothesis {
  PrefixNode<State>* node = nullptr;
  double score = 0.0;
  std::vector<int> label_frames;

  const std::vector<int>& labels() const { return node->labels; }
  std::size_t length() const { return node->labels.size(); }
};

/// Ordering used everywhere: higher score, then shorter, then lexicographic.
template <class H>
bool better(const H& a, const H& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.labels().size() != b.labels().size()) return a.labels().size() < b.labels().size();
  return a.labels() < b.labels();
}

template <class H>
void sort_hyps(std::vector<H>& hyps) {
  std::sort(hyps.begin(), hyps.end(), [](const H& a, const H& b) { return better(a, b); });
}

template <class H>
void prune(std::vector<H>& hyps, int beam) {
  sort_hyps(hyps);
  if (static_cast<int>(hyps.size()) > beam) hyps.resize(static_cast<std::size_t>(beam));
}

/// Merges hypotheses with identical label sequences: scores are
/// log-sum-exp'd and the alignment trace of the best member is kept.
/// Output order follows first appearance.
template <class State>
std::vector<Hypothesis<State>> recombine(const std::vector<Hypothesis<State>>& hyps) {
  std::vector<Hypothesis<State>> out;
  std::vector<std::vector<double>> members;
  std::unordered_map<const PrefixNode<State>*, std::size_t> where;
  for (const auto& h : hyps) {
    auto [it, fresh] = where.try_emplace(h.node, out.size());
    if (fresh) {
      out.push_back(h);
      members.push_back({h.score});
    } else {
      auto& kept = out[it->second];
      members[it->second].push_back(h.score);
      if (better(h, kept)) kept.label_frames = h.label_frames;
      if (h.score > kept.score) kept.score = h.score;
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (members[i].size() > 1) {
      auto m = members[i];
      std::sort(m.begin(), m.end());
      out[i].score = log_sum_exp(m);
    }
  }
  return out;
}

/// Per-decode-call state: prefix tree, counters and the optional fusion LM.
template <TransducerScorer S>
class SearchContext {
 public:
  using State = typename S::State;
  using Node = PrefixNode<State>;
  using Hyp = Hypothesis<State>;

  SearchContext(const S& scorer, const BeamConfig& cfg, const FusionLm* lm)
      : scorer_(scorer), cfg_(cfg), lm_(cfg.use_lm ? lm : nullptr), start_(std::chrono::steady_clock::now()) {
    cfg.validate();
    if (cfg.use_lm && lm == nullptr) throw ConfigError("LM fusion enabled without a language model");
    if (scorer.num_frames() < 1) throw ContractViolation("search: utterance has no frames");
    nodes_.emplace_back();
    root_ = &nodes_.back();
    root_->state = scorer.initial_state();
  }

  const S& scorer() const { return scorer_; }
  const BeamConfig& config() const { return cfg_; }
  int frames() const { return scorer_.num_frames(); }
  int vocab() const { return scorer_.vocab_size(); }

  Node* root() { return root_; }

  Node* child(Node* n, int k) {
    auto it = n->children.find(k);
    if (it != n->children.end()) return it->second;
    nodes_.emplace_back();
    Node* c = &nodes_.back();
    c->parent = n;
    c->label = k;
    c->labels = n->labels;
    c->labels.push_back(k);
    n->children.emplace(k, c);
    return c;
  }

  /// Computes decoder outputs for every undecoded node in one batched call.
  void resolve(const std::vector<Node*>& nodes) {
    std::vector<Node*> pending;
    for (Node* n : nodes) {
      if (!n->decoded && std::find(pending.begin(), pending.end(), n) == pending.end()) pending.push_back(n);
    }
    if (pending.empty()) return;
    std::vector<int> inputs;
    std::vector<State> states;
    for (Node* n : pending) {
      if (n->parent != nullptr && !n->parent->decoded) throw ContractViolation("search: parent prefix not decoded");
      inputs.push_back(n->parent == nullptr ? kStart : n->label);
      states.push_back(n->parent == nullptr ? n->state : n->parent->state);
    }
    decoder_calls_ += static_cast<long>(pending.size());
    if constexpr (requires { scorer_.batch_decode_step(std::span<const int>(inputs), std::span<const State>(states)); }) {
      auto steps = scorer_.batch_decode_step(std::span<const int>(inputs), std::span<const State>(states));
      for (std::size_t i = 0; i < pending.size(); ++i) store(pending[i], std::move(steps[i]));
    } else {
      for (std::size_t i = 0; i < pending.size(); ++i) store(pending[i], scorer_.decode_step(inputs[i], states[i]));
    }
  }

  void resolve(Node* n) { resolve(std::vector<Node*>{n}); }

  template <class H>
  void resolve_hyps(const std::vector<H>& hyps) {
    std::vector<Node*> ns;
    ns.reserve(hyps.size());
    for (const auto& h : hyps) ns.push_back(h.node);
    resolve(ns);
  }

  /// Joint log-probs at frame t for a decoded prefix. Counted.
  Eigen::VectorXd joint(int t, Node* n) {
    if (!n->decoded) resolve(n);
    ++joint_calls_;
    return scorer_.joint_logprobs(t, n->dec_out);
  }

  /// Weighted LM log-prob of extending prefix n by label k; 0 without fusion.
  double lm_bonus(Node* n, int k) {
    if (lm_ == nullptr) return 0.0;
    ensure_lm(n);
    return cfg_.lm_weight * n->lm_logprobs(k);
  }

  Hyp extend(const Hyp& h, int k, double logp, int t) {
    Hyp c{child(h.node, k), h.score + logp + lm_bonus(h.node, k), h.label_frames};
    c.label_frames.push_back(t);
    return c;
  }

  DecodeReport finish(std::vector<Hyp> finals, int nbest) {
    sort_hyps(finals);
    DecodeReport r;
    for (std::size_t i = 0; i < finals.size() && static_cast<int>(i) < nbest; ++i) {
      r.nbest.push_back({finals[i].labels(), finals[i].score, finals[i].label_frames});
    }
    r.joint_calls = joint_calls_;
    r.decoder_calls = decoder_calls_;
    if (!r.nbest.empty()) {
      std::vector<int> per_frame(static_cast<std::size_t>(frames()), 0);
      for (int f : r.nbest.front().label_frames) ++per_frame[static_cast<std::size_t>(f)];
      for (int n : per_frame) ++r.expansion_histogram[n];
    }
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return r;
  }

  long joint_calls() const { return joint_calls_; }
  long decoder_calls() const { return decoder_calls_; }

 private:
  template <class Step>
  void store(Node* n, Step&& step) {
    n->dec_out = std::move(step.output);
    n->state = std::move(step.state);
    n->decoded = true;
  }

  void ensure_lm(Node* n) {
    if (n->lm_ready) return;
    if (n->parent == nullptr) {
      n->lm_state = lm_->initial_state();
    } else {
      ensure_lm(n->parent);
      n->lm_state = lm_->advance(n->parent->lm_state, n->label);
    }
    n->lm_logprobs = lm_->next_logprobs(n->lm_state);
    n->lm_ready = true;
  }

  const S& scorer_;
  BeamConfig cfg_;
  const FusionLm* lm_;
  std::chrono::steady_clock::time_point start_;
  std::deque<Node> nodes_;
  Node* root_ = nullptr;
  long joint_calls_ = 0;
  long decoder_calls_ = 0;
};

}  // namespace tlab

#endif  // TLAB_SEARCH_CORE_HPP_
