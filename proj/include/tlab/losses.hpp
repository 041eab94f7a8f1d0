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

// Sequence criteria over posterior lattices. All dynamic programming runs in
// the log domain; frames and target positions are 0-based.

#ifndef TLAB_LOSSES_HPP_
#define TLAB_LOSSES_HPP_

#include <Eigen/Dense>

#include <limits>
#include <span>
#include <vector>

#include "tlab/common.hpp"
#include "tlab/lattice.hpp"

namespace tlab {

namespace detail {

inline void check_targets(const PosteriorLattice& lat, std::span<const int> y) {
  require(static_cast<int>(y.size()) == lat.target_len(), "lattice target length does not match labels");
  for (int k : y) require(k >= 1 && k <= lat.vocab_size(), "label outside 1..V");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Transducer

struct ForwardVariables {
  Eigen::MatrixXd alpha;  // T x (U+1)
  double log_prob = kLogZero;
};

/// alpha(t,u): log mass of all partial alignments reaching lattice node
/// (t,u) before anything is emitted there.
inline ForwardVariables forward_vars(const PosteriorLattice& lat, std::span<const int> y) {
  detail::check_targets(lat, y);
  const int T = lat.frames();
  const int U = lat.target_len();
  ForwardVariables fv;
  fv.alpha = Eigen::MatrixXd::Constant(T, U + 1, kLogZero);
  fv.alpha(0, 0) = 0.0;
  for (int t = 0; t < T; ++t) {
    for (int u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) continue;
      double a = kLogZero;
      if (t > 0) a = fv.alpha(t - 1, u) + lat(t - 1, u, kBlank);
      if (u > 0) a = log_add(a, fv.alpha(t, u - 1) + lat(t, u - 1, y[static_cast<std::size_t>(u - 1)]));
      fv.alpha(t, u) = a;
    }
  }
  fv.log_prob = fv.alpha(T - 1, U) + lat(T - 1, U, kBlank);
  return fv;
}

/// beta(t,u): log mass of all alignment suffixes leaving node (t,u),
/// including the terminal blank. beta(0,0) equals log P(y|x).
inline Eigen::MatrixXd backward_vars(const PosteriorLattice& lat, std::span<const int> y) {
  detail::check_targets(lat, y);
  const int T = lat.frames();
  const int U = lat.target_len();
  Eigen::MatrixXd beta = Eigen::MatrixXd::Constant(T, U + 1, kLogZero);
  beta(T - 1, U) = lat(T - 1, U, kBlank);
  for (int t = T - 1; t >= 0; --t) {
    for (int u = U; u >= 0; --u) {
      if (t == T - 1 && u == U) continue;
      double b = kLogZero;
      if (t < T - 1) b = beta(t + 1, u) + lat(t, u, kBlank);
      if (u < U) b = log_add(b, beta(t, u + 1) + lat(t, u, y[static_cast<std::size_t>(u)]));
      beta(t, u) = b;
    }
  }
  return beta;
}

struct LatticeLoss {
  double loss = 0.0;
  PosteriorLattice grad;  // d loss / d log-prob, same shape as the input
};

/// Negative log of the summed probability of every alignment of y.
inline LatticeLoss transducer_loss(const PosteriorLattice& lat, std::span<const int> y) {
  const auto fv = forward_vars(lat, y);
  const Eigen::MatrixXd beta = backward_vars(lat, y);
  const int T = lat.frames();
  const int U = lat.target_len();
  const double lp = fv.log_prob;
  if (!std::isfinite(lp)) throw NumericError("transducer_loss: target has zero probability");
  LatticeLoss out{-lp, PosteriorLattice(T, U, lat.vocab_size(), 0.0)};
  for (int t = 0; t < T; ++t) {
    for (int u = 0; u <= U; ++u) {
      const double a = fv.alpha(t, u);
      const double next_blank = t + 1 < T ? beta(t + 1, u) : (u == U ? 0.0 : kLogZero);
      out.grad(t, u, kBlank) = -std::exp(a + lat(t, u, kBlank) + next_blank - lp);
      if (u < U) {
        const int k = y[static_cast<std::size_t>(u)];
        out.grad(t, u, k) = -std::exp(a + lat(t, u, k) + beta(t, u + 1) - lp);
      }
    }
  }
  return out;
}

inline constexpr int kBruteForceMaxSteps = 14;

/// Log score of every alignment (T blanks and U labels, ending in blank),
/// enumerated explicitly. Guarded to T + U <= 14.
inline std::vector<double> enumerate_alignment_scores(const PosteriorLattice& lat, std::span<const int> y) {
  detail::check_targets(lat, y);
  const int T = lat.frames();
  const int U = lat.target_len();
  if (T + U > kBruteForceMaxSteps) throw SizeGuardError("alignment enumeration limited to T + U <= 14");
  std::vector<double> scores;
  // Depth-first over (t, u, partial score).
  struct Frame {
    int t, u;
    double s;
  };
  std::vector<Frame> stack{{0, 0, 0.0}};
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    if (f.t == T - 1 && f.u == U) {
      scores.push_back(f.s + lat(f.t, f.u, kBlank));
      continue;
    }
    if (f.u < U) stack.push_back({f.t, f.u + 1, f.s + lat(f.t, f.u, y[static_cast<std::size_t>(f.u)])});
    if (f.t < T - 1) stack.push_back({f.t + 1, f.u, f.s + lat(f.t, f.u, kBlank)});
  }
  return scores;
}

inline double brute_force_loss(const PosteriorLattice& lat, std::span<const int> y) {
  const auto scores = enumerate_alignment_scores(lat, y);
  return -log_sum_exp(scores);
}

// ---------------------------------------------------------------------------
// CTC

struct CtcResult {
  bool feasible = true;
  double loss = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd grad;  // T x (V+1), zero when infeasible
};

/// Minimum frame count CTC needs for y: one frame per label plus one blank
/// between every pair of equal neighbours.
inline int ctc_min_frames(std::span<const int> y) {
  int n = static_cast<int>(y.size());
  for (std::size_t i = 1; i < y.size(); ++i) n += y[i] == y[i - 1] ? 1 : 0;
  return n;
}

inline CtcResult ctc_loss(const Eigen::MatrixXd& logprobs, std::span<const int> y) {
  const int T = static_cast<int>(logprobs.rows());
  const int V1 = static_cast<int>(logprobs.cols());
  require(T >= 1 && V1 >= 2, "ctc_loss: bad frame log-prob shape");
  for (int k : y) require(k >= 1 && k < V1, "ctc_loss: label outside 1..V");
  CtcResult out;
  out.grad = Eigen::MatrixXd::Zero(T, V1);
  if (ctc_min_frames(y) > T) {
    out.feasible = false;
    return out;
  }
  const int S = 2 * static_cast<int>(y.size()) + 1;
  auto sym = [&](int s) { return s % 2 == 0 ? kBlank : y[static_cast<std::size_t>(s / 2)]; };
  auto can_skip = [&](int s) { return s >= 2 && sym(s) != kBlank && sym(s) != sym(s - 2); };

  Eigen::MatrixXd alpha = Eigen::MatrixXd::Constant(T, S, kLogZero);
  alpha(0, 0) = logprobs(0, kBlank);
  if (S > 1) alpha(0, 1) = logprobs(0, sym(1));
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = log_add(a, alpha(t - 1, s - 1));
      if (can_skip(s)) a = log_add(a, alpha(t - 1, s - 2));
      alpha(t, s) = a == kLogZero ? kLogZero : a + logprobs(t, sym(s));
    }
  }
  Eigen::MatrixXd beta = Eigen::MatrixXd::Constant(T, S, kLogZero);
  beta(T - 1, S - 1) = logprobs(T - 1, kBlank);
  if (S > 1) beta(T - 1, S - 2) = logprobs(T - 1, sym(S - 2));
  for (int t = T - 2; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      double b = beta(t + 1, s);
      if (s + 1 < S) b = log_add(b, beta(t + 1, s + 1));
      if (s + 2 < S && can_skip(s + 2)) b = log_add(b, beta(t + 1, s + 2));
      beta(t, s) = b == kLogZero ? kLogZero : b + logprobs(t, sym(s));
    }
  }
  double lp = alpha(T - 1, S - 1);
  if (S > 1) lp = log_add(lp, alpha(T - 1, S - 2));
  if (!std::isfinite(lp)) {
    out.feasible = false;
    return out;
  }
  out.loss = -lp;
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      const double occ = alpha(t, s) + beta(t, s) - logprobs(t, sym(s)) - lp;
      if (occ > kLogZero) out.grad(t, sym(s)) -= std::exp(occ);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Auxiliary criteria

struct AuxTransducerLoss {
  double loss = 0.0;
  std::vector<PosteriorLattice> grads;  // one per aux lattice
};

/// Mean transducer loss over the auxiliary lattices.
inline AuxTransducerLoss aux_transducer_loss(std::span<const PosteriorLattice> aux, std::span<const int> y) {
  if (aux.empty()) throw ConfigError("auxiliary transducer loss needs at least one aux layer");
  const double inv = 1.0 / static_cast<double>(aux.size());
  AuxTransducerLoss out;
  for (const auto& lat : aux) {
    auto r = transducer_loss(lat, y);
    out.loss += r.loss;
    for (double& g : r.grad.data()) g *= inv;
    out.grads.push_back(std::move(r.grad));
  }
  out.loss *= inv;
  return out;
}

struct SymmetricKl {
  double loss = 0.0;
  PosteriorLattice main_grad;
  std::vector<PosteriorLattice> aux_grads;
};

/// Symmetrized KL between the main and each selected aux posterior, averaged
/// over frames and over the U prediction positions (rows 0..U-1; the single
/// row 0 when U = 0), summed over layers.
inline SymmetricKl symm_kl(const PosteriorLattice& main, std::span<const PosteriorLattice> aux,
                           const std::vector<bool>& use_layer) {
  require(use_layer.size() == aux.size(), "symm_kl: indicator length mismatch");
  for (const auto& a : aux) require(a.same_shape(main), "symm_kl: lattice shape mismatch");
  const int T = main.frames();
  const int U = main.target_len();
  const int rows = std::max(U, 1);
  const double scale = 1.0 / (static_cast<double>(T) * rows);

  SymmetricKl out{0.0, PosteriorLattice(T, U, main.vocab_size(), 0.0), {}};
  for (std::size_t l = 0; l < aux.size(); ++l) {
    PosteriorLattice g(T, U, main.vocab_size(), 0.0);
    if (use_layer[l]) {
      for (int t = 0; t < T; ++t) {
        for (int u = 0; u < rows; ++u) {
          for (int k = 0; k < main.num_symbols(); ++k) {
            const double lp = main(t, u, k);
            const double lq = aux[l](t, u, k);
            const double p = std::exp(lp);
            const double q = std::exp(lq);
            out.loss += scale * 0.5 * (p - q) * (lp - lq);
            out.main_grad(t, u, k) += scale * 0.5 * (p * (lp - lq) + (p - q));
            g(t, u, k) = scale * 0.5 * (q * (lq - lp) + (q - p));
          }
        }
      }
    }
    out.aux_grads.push_back(std::move(g));
  }
  return out;
}

struct LmLoss {
  double loss = 0.0;
  Eigen::MatrixXd grad;  // d loss / d logits
};

/// Label-smoothed cross-entropy of the prediction network's LM head. Row u of
/// the logits predicts y_{u+1}. Smoothing mass is spread over the V real
/// labels only.
inline LmLoss lm_loss(const Eigen::MatrixXd& logits, std::span<const int> y, double smoothing = 0.1) {
  const int U = static_cast<int>(y.size());
  LmLoss out{0.0, Eigen::MatrixXd::Zero(logits.rows(), logits.cols())};
  if (U == 0) return out;
  require(logits.rows() == U && logits.cols() >= 2, "lm_loss: logits shape mismatch");
  require(smoothing >= 0.0 && smoothing < 1.0, "lm_loss: smoothing outside [0,1)");
  const int V = static_cast<int>(logits.cols()) - 1;
  for (int u = 0; u < U; ++u) {
    const int target = y[static_cast<std::size_t>(u)];
    require(target >= 1 && target <= V, "lm_loss: label outside 1..V");
    const Eigen::RowVectorXd z = logits.row(u);
    const double m = z.maxCoeff();
    const double lse = m + std::log((z.array() - m).exp().sum());
    Eigen::RowVectorXd q = Eigen::RowVectorXd::Zero(V + 1);
    for (int k = 1; k <= V; ++k) q(k) = smoothing / V;
    q(target) += 1.0 - smoothing;
    double ce = 0.0;
    for (int k = 1; k <= V; ++k) {
      if (q(k) > 0.0) ce -= q(k) * (z(k) - lse);
    }
    out.loss += ce / U;
    out.grad.row(u) = ((z.array() - lse).exp().matrix() - q) / U;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weighted combination

struct TaskWeights {
  double trans = 1.0;
  double ctc = 0.5;
  double aux_trans = 0.3;
  double symm_kl = 0.2;
  double lm = 0.4;
  bool use_trans = true;
  bool use_ctc = false;
  bool use_aux_trans = false;
  bool use_symm_kl = false;
  bool use_lm = false;

  static TaskWeights vanilla() { return {}; }
  static TaskWeights all_tasks() {
    TaskWeights w;
    w.use_ctc = w.use_aux_trans = w.use_symm_kl = w.use_lm = true;
    return w;
  }

  double eff_trans() const { return use_trans ? trans : 0.0; }
  double eff_ctc() const { return use_ctc ? ctc : 0.0; }
  double eff_aux_trans() const { return use_aux_trans ? aux_trans : 0.0; }
  double eff_symm_kl() const { return use_symm_kl ? symm_kl : 0.0; }
  double eff_lm() const { return use_lm ? lm : 0.0; }

  void validate() const {
    for (double w : {trans, ctc, aux_trans, symm_kl, lm}) {
      if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("task weights must lie in [0, 1]");
    }
  }

  TaskWeights scaled(double f) const {
    TaskWeights w = *this;
    w.trans *= f;
    w.ctc *= f;
    w.aux_trans *= f;
    w.symm_kl *= f;
    w.lm *= f;
    return w;
  }
};

/// Raw (unweighted) component values; absent components are zero.
struct LossComponents {
  double trans = 0.0;
  double ctc = 0.0;
  double aux_trans = 0.0;
  double symm_kl = 0.0;
  double lm = 0.0;
};

struct LossBreakdown {
  double l_trans = 0.0;
  double l_ctc = 0.0;
  double l_aux_trans = 0.0;
  double l_symm_kl = 0.0;
  double l_lm = 0.0;
  double l_total = 0.0;
};

inline LossBreakdown total_loss(const LossComponents& c, const TaskWeights& w) {
  LossBreakdown b;
  b.l_trans = w.use_trans ? c.trans : 0.0;
  b.l_ctc = w.use_ctc ? c.ctc : 0.0;
  b.l_aux_trans = w.use_aux_trans ? c.aux_trans : 0.0;
  b.l_symm_kl = w.use_symm_kl ? c.symm_kl : 0.0;
  b.l_lm = w.use_lm ? c.lm : 0.0;
  b.l_total = w.eff_trans() * b.l_trans + w.eff_ctc() * b.l_ctc + w.eff_aux_trans() * b.l_aux_trans +
              w.eff_symm_kl() * b.l_symm_kl + w.eff_lm() * b.l_lm;
  return b;
}

}  // namespace tlab

#endif  // TLAB_LOSSES_HPP_
