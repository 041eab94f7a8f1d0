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

#ifndef TLAB_TRAINER_HPP_
#define TLAB_TRAINER_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tlab/data.hpp"
#include "tlab/objective.hpp"
#include "tlab/scorer.hpp"
#include "tlab/search/greedy.hpp"

namespace tlab {

enum class OptimizerKind { kAdam, kMomentum };

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "momentum" || s == "sgd") return OptimizerKind::kMomentum;
  throw ConfigError("unknown optimizer '" + s + "' (expected adam or momentum)");
}

struct TrainConfig {
  TaskWeights weights;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double lr = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 8;
  int epochs = 10;
  double clip_norm = 5.0;
  int eval_interval = 1;
  std::uint64_t seed = 1;
  double label_smoothing = 0.1;
  int jobs = 1;  // utterance-level parallelism inside a batch

  void validate() const {
    weights.validate();
    // lr = 0 is accepted so that a frozen run can be checked for stability.
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
    if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be > 0");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (eval_interval < 1) throw ConfigError("eval interval must be >= 1");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ConfigError("label smoothing must lie in [0, 1)");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
  }
};

struct EpochLog {
  int epoch = 0;
  LossBreakdown loss;  // mean over the training split, measured before each update
  double greedy_seq_acc = std::numeric_limits<double>::quiet_NaN();  // NaN on non-eval epochs
  int ctc_infeasible = 0;
};

struct TrainResult {
  ModelParameters params;
  std::vector<EpochLog> log;
  std::size_t train_size = 0;
  std::size_t heldout_size = 0;
};

// ---------------------------------------------------------------------------
// Flat views over parameter sets

inline std::vector<std::span<double>> tensor_spans(ModelParameters& p) {
  std::vector<std::span<double>> out;
  p.for_each_tensor([&](const std::string&, auto& x) { out.emplace_back(x.data(), static_cast<std::size_t>(x.size())); });
  return out;
}

inline std::vector<std::span<const double>> tensor_spans(const ModelParameters& p) {
  std::vector<std::span<const double>> out;
  p.for_each_tensor(
      [&](const std::string&, const auto& x) { out.emplace_back(x.data(), static_cast<std::size_t>(x.size())); });
  return out;
}

inline double global_norm(const ModelParameters& g) {
  double s = 0.0;
  for (auto t : tensor_spans(g)) {
    for (double x : t) s += x * x;
  }
  return std::sqrt(s);
}

/// Rescales g so its global L2 norm does not exceed max_norm. Returns the
/// pre-clip norm.
inline double clip_global_norm(ModelParameters& g, double max_norm) {
  const double n = global_norm(g);
  if (!std::isfinite(n)) throw NumericError("non-finite gradient norm");
  if (n > max_norm) {
    const double f = max_norm / n;
    for (auto t : tensor_spans(g)) {
      for (double& x : t) x *= f;
    }
  }
  return n;
}

// ---------------------------------------------------------------------------
// Optimizers

class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const ModelParameters& like)
      : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {}

  void step(ModelParameters& p, const ModelParameters& g) {
    ++t_;
    auto ps = tensor_spans(p);
    auto gs = tensor_spans(g);
    auto ms = tensor_spans(m_);
    auto vs = tensor_spans(v_);
    if (cfg_.optimizer == OptimizerKind::kAdam) {
      const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
      const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
      for (std::size_t i = 0; i < ps.size(); ++i) {
        for (std::size_t j = 0; j < ps[i].size(); ++j) {
          const double gij = gs[i][j];
          ms[i][j] = cfg_.beta1 * ms[i][j] + (1.0 - cfg_.beta1) * gij;
          vs[i][j] = cfg_.beta2 * vs[i][j] + (1.0 - cfg_.beta2) * gij * gij;
          ps[i][j] -= cfg_.lr * (ms[i][j] / c1) / (std::sqrt(vs[i][j] / c2) + cfg_.adam_eps);
        }
      }
    } else {
      for (std::size_t i = 0; i < ps.size(); ++i) {
        for (std::size_t j = 0; j < ps[i].size(); ++j) {
          ms[i][j] = cfg_.momentum * ms[i][j] + gs[i][j];
          ps[i][j] -= cfg_.lr * ms[i][j];
        }
      }
    }
  }

 private:
  TrainConfig cfg_;
  ModelParameters m_;
  ModelParameters v_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation

/// Fraction of utterances whose greedy output equals the reference exactly.
inline double greedy_sequence_accuracy(const ModelParameters& p, std::span<const Utterance> utts) {
  if (utts.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t hit = 0;
  for (const auto& u : utts) {
    if (greedy(ModelScorer(p, u.features)).best_labels() == u.labels) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(utts.size());
}

/// Held-out split: the last 10% of the dataset (at least one utterance when
/// the dataset has two or more).
inline std::size_t heldout_count(std::size_t n) {
  if (n < 2) return 0;
  return std::max<std::size_t>(1, n / 10);
}

// ---------------------------------------------------------------------------
// Training loop

using EpochCallback = std::function<void(const EpochLog&)>;

/// Mini-batch training of the weighted multi-task loss. Batches are drawn
/// from a seeded permutation of the training split every epoch. Per-batch
/// gradients are reduced in a fixed order, so results do not depend on jobs.
inline TrainResult train(ModelParameters init, const Dataset& ds, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (ds.utterances.empty()) throw ConfigError("training dataset is empty");
  if (ds.input_dim != init.config.input_dim || ds.vocab_size != init.config.vocab_size) {
    throw ConfigError("dataset dimensions do not match the model configuration");
  }
  TrainResult res;
  res.params = std::move(init);
  ModelParameters& p = res.params;
  const std::size_t n_all = ds.utterances.size();
  res.heldout_size = heldout_count(n_all);
  res.train_size = n_all - res.heldout_size;
  const std::span<const Utterance> train_set(ds.utterances.data(), res.train_size);
  const std::span<const Utterance> eval_set =
      res.heldout_size > 0 ? std::span<const Utterance>(ds.utterances.data() + res.train_size, res.heldout_size)
                           : train_set;

  Optimizer opt(cfg, p);
  detail::UniformSource shuffler(cfg.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(res.train_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(shuffler.next() * static_cast<double>(i));
      std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    std::vector<LossBreakdown> per_utt(res.train_size);
    int infeasible = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      std::vector<UtteranceObjective> outs(b1 - b0);
      auto work = [&](std::size_t k) {
        const auto& u = train_set[order[b0 + k]];
        outs[k] = evaluate_objective(p, u.features, u.labels, cfg.weights, cfg.label_smoothing, true);
      };
      if (cfg.jobs > 1 && outs.size() > 1) {
        std::vector<std::future<void>> fs;
        for (std::size_t k = 0; k < outs.size(); ++k) fs.push_back(std::async(std::launch::async, work, k));
        for (auto& f : fs) f.get();
      } else {
        for (std::size_t k = 0; k < outs.size(); ++k) work(k);
      }
      ModelParameters g = p.zeros_like();
      auto gs = tensor_spans(g);
      const double inv = 1.0 / static_cast<double>(outs.size());
      for (std::size_t k = 0; k < outs.size(); ++k) {
        per_utt[order[b0 + k]] = outs[k].breakdown;
        infeasible += outs[k].ctc_infeasible ? 1 : 0;
        auto us = tensor_spans(std::as_const(*outs[k].grad));
        for (std::size_t i = 0; i < gs.size(); ++i) {
          for (std::size_t j = 0; j < gs[i].size(); ++j) gs[i][j] += inv * us[i][j];
        }
      }
      clip_global_norm(g, cfg.clip_norm);
      opt.step(p, g);
    }

    EpochLog log;
    log.epoch = epoch;
    log.ctc_infeasible = infeasible;
    const double inv = 1.0 / static_cast<double>(res.train_size);
    for (const auto& b : per_utt) {
      log.loss.l_trans += inv * b.l_trans;
      log.loss.l_ctc += inv * b.l_ctc;
      log.loss.l_aux_trans += inv * b.l_aux_trans;
      log.loss.l_symm_kl += inv * b.l_symm_kl;
      log.loss.l_lm += inv * b.l_lm;
      log.loss.l_total += inv * b.l_total;
    }
    if (!std::isfinite(log.loss.l_total)) throw NumericError("non-finite epoch loss at epoch " + std::to_string(epoch));
    if (epoch % cfg.eval_interval == 0 || epoch == cfg.epochs) log.greedy_seq_acc = greedy_sequence_accuracy(p, eval_set);
    if (on_epoch) on_epoch(log);
    res.log.push_back(log);
  }
  return res;
}

inline void write_train_log_header(std::ostream& os) {
  os << "epoch,l_trans,l_ctc,l_aux_trans,l_symm_kl,l_lm,l_total,greedy_seq_acc\n";
}

inline void write_train_log_row(std::ostream& os, const EpochLog& e) {
  auto f = [](double d) { return std::isnan(d) ? std::string() : detail::format_double(d); };
  os << e.epoch << ',' << f(e.loss.l_trans) << ',' << f(e.loss.l_ctc) << ',' << f(e.loss.l_aux_trans) << ','
     << f(e.loss.l_symm_kl) << ',' << f(e.loss.l_lm) << ',' << f(e.loss.l_total) << ',' << f(e.greedy_seq_acc) << '\n';
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationStep {
  std::string name;
  TaskWeights weights;
};

/// Auxiliary tasks removed one at a time, cumulatively, in ascending order
/// of their weight: all tasks, -symm_kl, -aux_trans, -lm, -ctc (vanilla).
inline std::vector<AblationStep> ablation_recipe(const TaskWeights& base = TaskWeights::all_tasks()) {
  TaskWeights w = base;
  w.use_trans = w.use_ctc = w.use_aux_trans = w.use_symm_kl = w.use_lm = true;
  std::vector<AblationStep> out{{"all", w}};
  w.use_symm_kl = false;
  w.symm_kl = 0.0;
  out.push_back({"-symm_kl", w});
  w.use_aux_trans = false;
  w.aux_trans = 0.0;
  out.push_back({"-aux_trans", w});
  w.use_lm = false;
  w.lm = 0.0;
  out.push_back({"-lm", w});
  w.use_ctc = false;
  w.ctc = 0.0;
  out.push_back({"-ctc", w});
  return out;
}

}  // namespace tlab

#endif  // TLAB_TRAINER_HPP_
