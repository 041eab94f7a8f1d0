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

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "tlab/losses.hpp"
#include "tlab/verify.hpp"

namespace tlab {
namespace {

PosteriorLattice uniform_lattice(int T, int U, int V) {
  return PosteriorLattice(T, U, V, -std::log(static_cast<double>(V + 1)));
}

TEST(TransducerLoss, SingleCell) {
  PosteriorLattice lat(1, 0, 2, std::log(0.2));
  lat(0, 0, kBlank) = std::log(0.6);
  const std::vector<int> y;
  EXPECT_NEAR(forward_vars(lat, y).log_prob, std::log(0.6), 1e-15);
  EXPECT_NEAR(backward_vars(lat, y)(0, 0), std::log(0.6), 1e-15);
  EXPECT_NEAR(brute_force_loss(lat, y), -std::log(0.6), 1e-15);
}

TEST(TransducerLoss, UniformClosedForm) {
  // C(T+U-1, U) alignments, each with probability 0.5^(T+U).
  const auto lat = uniform_lattice(2, 1, 1);
  const std::vector<int> y{1};
  EXPECT_NEAR(transducer_loss(lat, y).loss, -std::log(0.25), 1e-12);
  EXPECT_NEAR(transducer_loss(lat, y).loss, 1.3863, 1e-4);
  EXPECT_EQ(enumerate_alignment_scores(lat, y).size(), 2u);
}

TEST(TransducerLoss, MatchesEnumeration) {
  detail::UniformSource rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto lat = random_lattice(3, 2, 3, rng);
    const auto y = random_labels(2, 3, rng);
    EXPECT_NEAR(transducer_loss(lat, y).loss, brute_force_loss(lat, y), 1e-10);
  }
  const auto big = random_lattice(5, 4, 4, rng);
  const auto y = random_labels(4, 4, rng);
  EXPECT_NEAR(-forward_vars(big, y).log_prob, brute_force_loss(big, y), 1e-10);
}

TEST(TransducerLoss, EnumerationSizeGuard) {
  const auto lat = uniform_lattice(10, 5, 2);
  const std::vector<int> y(5, 1);
  EXPECT_THROW(brute_force_loss(lat, y), SizeGuardError);
}

TEST(TransducerLoss, TargetLengthMismatchThrows) {
  const auto lat = uniform_lattice(3, 2, 2);
  const std::vector<int> y{1};
  EXPECT_THROW(transducer_loss(lat, y), ContractViolation);
}

// Finite differences on raw lattice entries; the lattice is not renormalized,
// which is exactly what the occupation gradient describes.
TEST(TransducerLoss, LatticeGradientMatchesFiniteDifferences) {
  detail::UniformSource rng(9);
  auto lat = random_lattice(3, 2, 3, rng);
  const auto y = random_labels(2, 3, rng);
  const auto g = transducer_loss(lat, y).grad;
  const double eps = 1e-6;
  for (std::size_t i = 0; i < lat.data().size(); ++i) {
    const double keep = lat.data()[i];
    lat.data()[i] = keep + eps;
    const double up = transducer_loss(lat, y).loss;
    lat.data()[i] = keep - eps;
    const double down = transducer_loss(lat, y).loss;
    lat.data()[i] = keep;
    EXPECT_NEAR(g.data()[i], (up - down) / (2 * eps), 1e-6) << "entry " << i;
  }
}

TEST(TransducerLoss, DiagonalCutsConserveMass) {
  detail::UniformSource rng(13);
  for (int rep = 0; rep < 10; ++rep) {
    const int T = 1 + rep % 5;
    const int U = rep % 4;
    const auto lat = random_lattice(T, U, 3, rng);
    const auto y = random_labels(U, 3, rng);
    const auto f = forward_vars(lat, y);
    const auto beta = backward_vars(lat, y);
    for (int n = 0; n < T + U; ++n) {
      std::vector<double> cut;
      for (int t = 0; t < T; ++t) {
        const int u = n - t;
        if (u >= 0 && u <= U) cut.push_back(f.alpha(t, u) + beta(t, u));
      }
      EXPECT_NEAR(log_sum_exp(cut), f.log_prob, 1e-9);
    }
  }
}

Eigen::MatrixXd ctc_rows(const std::vector<std::vector<double>>& probs) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(probs.size()), static_cast<Eigen::Index>(probs[0].size()));
  for (std::size_t t = 0; t < probs.size(); ++t) {
    for (std::size_t k = 0; k < probs[t].size(); ++k) m(t, k) = std::log(probs[t][k]);
  }
  return m;
}

TEST(CtcLoss, SingleFrame) {
  const auto lp = ctc_rows({{0.2, 0.7, 0.1}});
  const auto r = ctc_loss(lp, std::vector<int>{1});
  ASSERT_TRUE(r.feasible);
  EXPECT_NEAR(r.loss, -std::log(0.7), 1e-14);
}

TEST(CtcLoss, TwoFramePathEnumeration) {
  const auto lp = ctc_rows({{0.3, 0.5, 0.2}, {0.4, 0.35, 0.25}});
  const double want = -std::log(0.5 * 0.35 + 0.5 * 0.4 + 0.3 * 0.35);
  EXPECT_NEAR(ctc_loss(lp, std::vector<int>{1}).loss, want, 1e-14);
}

TEST(CtcLoss, MatchesPathEnumeration) {
  detail::UniformSource rng(21);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::MatrixXd lp(5, 4);
    for (int t = 0; t < 5; ++t) {
      Eigen::VectorXd z(4);
      for (int k = 0; k < 4; ++k) z(k) = 3.0 * rng.next();
      lp.row(t) = log_softmax(z).transpose();
    }
    const auto y = random_labels(2, 3, rng);
    const auto r = ctc_loss(lp, y);
    ASSERT_TRUE(r.feasible);
    EXPECT_NEAR(r.loss, ctc_enumeration_loss(lp, y), 1e-10);
  }
}

TEST(CtcLoss, RepeatsNeedSeparatingBlank) {
  EXPECT_EQ(ctc_min_frames(std::vector<int>{1, 1}), 3);
  EXPECT_EQ(ctc_min_frames(std::vector<int>{1, 2}), 2);
  const auto lp = ctc_rows({{0.3, 0.5, 0.2}, {0.4, 0.35, 0.25}});
  const auto r = ctc_loss(lp, std::vector<int>{1, 1});
  EXPECT_FALSE(r.feasible);
  EXPECT_TRUE(std::isinf(r.loss));
  EXPECT_EQ(r.grad.cwiseAbs().sum(), 0.0);
}

TEST(AuxTransducerLoss, MeanOverLayers) {
  detail::UniformSource rng(3);
  const std::vector<PosteriorLattice> aux{random_lattice(3, 2, 2, rng), random_lattice(3, 2, 2, rng)};
  const std::vector<int> y{1, 2};
  const double want = 0.5 * (transducer_loss(aux[0], y).loss + transducer_loss(aux[1], y).loss);
  EXPECT_NEAR(aux_transducer_loss(aux, y).loss, want, 1e-12);
  EXPECT_NEAR(aux_transducer_loss(std::span(aux).first(1), y).loss, transducer_loss(aux[0], y).loss, 1e-15);
  EXPECT_THROW(aux_transducer_loss({}, y), ConfigError);
}

TEST(SymmetricKl, IdenticalIsZeroAndSwapIsSymmetric) {
  detail::UniformSource rng(4);
  const auto a = random_lattice(3, 2, 3, rng);
  const auto b = random_lattice(3, 2, 3, rng);
  EXPECT_NEAR(symm_kl(a, std::vector<PosteriorLattice>{a}, {true}).loss, 0.0, 1e-12);
  const double ab = symm_kl(a, std::vector<PosteriorLattice>{b}, {true}).loss;
  const double ba = symm_kl(b, std::vector<PosteriorLattice>{a}, {true}).loss;
  EXPECT_GT(ab, 0.0);
  EXPECT_NEAR(ab, ba, 1e-12);
  EXPECT_EQ(symm_kl(a, std::vector<PosteriorLattice>{b}, {false}).loss, 0.0);
}

TEST(SymmetricKl, HandTwoSymbolExample) {
  PosteriorLattice p(1, 0, 1);
  PosteriorLattice q(1, 0, 1);
  p(0, 0, 0) = std::log(0.8);
  p(0, 0, 1) = std::log(0.2);
  q(0, 0, 0) = std::log(0.5);
  q(0, 0, 1) = std::log(0.5);
  const double kl_pq = 0.8 * std::log(0.8 / 0.5) + 0.2 * std::log(0.2 / 0.5);
  const double kl_qp = 0.5 * std::log(0.5 / 0.8) + 0.5 * std::log(0.5 / 0.2);
  EXPECT_NEAR(symm_kl(p, std::vector<PosteriorLattice>{q}, {true}).loss, 0.5 * (kl_pq + kl_qp), 1e-14);
}

TEST(LmLoss, Limits) {
  const std::vector<int> y{2};
  Eigen::MatrixXd peaked = Eigen::MatrixXd::Zero(1, 4);
  peaked(0, 2) = 60.0;
  EXPECT_NEAR(lm_loss(peaked, y, 0.0).loss, 0.0, 1e-12);
  EXPECT_NEAR(lm_loss(Eigen::MatrixXd::Zero(1, 4), y, 0.0).loss, std::log(4.0), 1e-12);
  EXPECT_EQ(lm_loss(Eigen::MatrixXd::Zero(0, 4), std::vector<int>{}, 0.1).loss, 0.0);
}

TEST(LmLoss, SmoothedHandValue) {
  // V = 3, eps = 0.1: target 0.9 on y plus 0.1/3 on each real label.
  Eigen::MatrixXd z(2, 4);
  z << 0.3, -1.0, 2.0, 0.5, 1.0, 0.0, -0.5, 0.25;
  const std::vector<int> y{2, 3};
  double want = 0.0;
  for (int u = 0; u < 2; ++u) {
    const Eigen::VectorXd lp = log_softmax(z.row(u).transpose());
    double ce = 0.0;
    for (int k = 1; k <= 3; ++k) ce -= (0.1 / 3 + (k == y[u] ? 0.9 : 0.0)) * lp(k);
    want += ce / 2;
  }
  EXPECT_NEAR(lm_loss(z, y, 0.1).loss, want, 1e-12);
}

TEST(LmLoss, GradientMatchesFiniteDifferences) {
  Eigen::MatrixXd z(2, 4);
  z << 0.3, -1.0, 2.0, 0.5, 1.0, 0.0, -0.5, 0.25;
  const std::vector<int> y{2, 3};
  const auto g = lm_loss(z, y, 0.1).grad;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    Eigen::MatrixXd a = z;
    Eigen::MatrixXd b = z;
    a(i) += 1e-6;
    b(i) -= 1e-6;
    EXPECT_NEAR(g(i), (lm_loss(a, y, 0.1).loss - lm_loss(b, y, 0.1).loss) / 2e-6, 1e-8);
  }
}

TEST(TotalLoss, DegenerateDefaultAndLinear) {
  const LossComponents c{1.5, 2.0, 0.7, 0.3, 1.1};
  TaskWeights only_trans = TaskWeights::vanilla();
  EXPECT_DOUBLE_EQ(total_loss(c, only_trans).l_total, 1.5);
  const TaskWeights all = TaskWeights::all_tasks();
  EXPECT_NEAR(total_loss(c, all).l_total, 1.5 + 0.5 * 2.0 + 0.3 * 0.7 + 0.2 * 0.3 + 0.4 * 1.1, 1e-12);
  EXPECT_NEAR(total_loss(c, all.scaled(0.5)).l_total * 2, total_loss(c, all).l_total, 1e-12);
  // Linear in each weight separately.
  TaskWeights w = all;
  w.ctc = 0.0;
  const double f0 = total_loss(c, w).l_total;
  w.ctc = 0.25;
  const double f1 = total_loss(c, w).l_total;
  w.ctc = 0.5;
  EXPECT_NEAR(total_loss(c, w).l_total - f1, f1 - f0, 1e-12);
}

TEST(TotalLoss, DisabledTasksReadAsZero) {
  const LossComponents c{1.0, 9.0, 9.0, 9.0, 9.0};
  const auto b = total_loss(c, TaskWeights::vanilla());
  EXPECT_EQ(b.l_ctc, 0.0);
  EXPECT_EQ(b.l_lm, 0.0);
  EXPECT_EQ(b.l_total, 1.0);
}

TEST(TaskWeights, RejectsOutOfRange) {
  TaskWeights w;
  w.ctc = 1.5;
  EXPECT_THROW(w.validate(), ConfigError);
  w.ctc = -0.1;
  EXPECT_THROW(w.validate(), ConfigError);
}

}  // namespace
}  // namespace tlab
