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
#include <sstream>
#include <vector>

#include "tlab/params_io.hpp"
#include "tlab/scorer.hpp"
#include "tlab/trainer.hpp"
#include "tlab/verify.hpp"

namespace tlab {
namespace {

ModelConfig small_config(std::uint64_t seed = 7) {
  ModelConfig c;
  c.input_dim = 3;
  c.enc_layers = {{LayerKind::kTanhRnn, 4}, {LayerKind::kLinear, 5}};
  c.dec_embed_dim = 3;
  c.dec_hidden_dim = 4;
  c.joint_dim = 6;
  c.vocab_size = 3;
  c.aux_layer_indices = {1};
  c.seed = seed;
  return c;
}

Eigen::MatrixXd random_features(int T, int D, std::uint64_t seed) {
  detail::UniformSource rng(seed);
  Eigen::MatrixXd x(T, D);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 2.0 * rng.next() - 1.0;
  return x;
}

std::string serialize(const ModelParameters& p) {
  std::ostringstream os;
  save_parameters(os, p);
  return os.str();
}

TEST(Init, SeedDeterminismAndSensitivity) {
  EXPECT_EQ(serialize(init_parameters(small_config(7))), serialize(init_parameters(small_config(7))));
  EXPECT_NE(serialize(init_parameters(small_config(7))), serialize(init_parameters(small_config(8))));
}

TEST(Init, LinearLayerShape) {
  ModelConfig c = small_config();
  c.input_dim = 5;
  c.enc_layers = {{LayerKind::kLinear, 4}};
  c.aux_layer_indices.clear();
  const auto p = init_parameters(c);
  // Stored out x in; applied as features * weight^T.
  EXPECT_EQ(p.encoder[0].weight.rows(), 4);
  EXPECT_EQ(p.encoder[0].weight.cols(), 5);
  EXPECT_EQ(p.encoder[0].recurrent.size(), 0);
}

TEST(Init, InvalidDimensionsRejected) {
  ModelConfig c = small_config();
  c.joint_dim = 0;
  EXPECT_THROW(init_parameters(c), ConfigError);
  c = small_config();
  c.aux_layer_indices = {3};
  EXPECT_THROW(init_parameters(c), ConfigError);
}

TEST(Encode, ZeroInputLinearIsZero) {
  ModelConfig c = small_config();
  c.enc_layers = {{LayerKind::kLinear, 4}, {LayerKind::kLinear, 2}};
  c.aux_layer_indices.clear();
  const auto p = init_parameters(c);
  const auto out = encode(p, Eigen::MatrixXd::Zero(3, 3));
  EXPECT_EQ(out.main.rows(), 3);
  EXPECT_EQ(out.main.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Encode, HandUnrolledRecurrence) {
  ModelConfig c = small_config();
  c.input_dim = 1;
  c.enc_layers = {{LayerKind::kTanhRnn, 1}};
  c.aux_layer_indices.clear();
  auto p = init_parameters(c);
  p.encoder[0].weight(0, 0) = 0.7;
  p.encoder[0].recurrent(0, 0) = -0.4;
  p.encoder[0].bias(0) = 0.1;
  Eigen::MatrixXd x(3, 1);
  x << 0.5, -1.0, 2.0;
  const auto out = encode(p, x).main;
  double h = 0.0;
  for (int t = 0; t < 3; ++t) {
    h = std::tanh(0.7 * x(t, 0) - 0.4 * h + 0.1);
    EXPECT_NEAR(out(t, 0), h, 1e-12);
  }
}

TEST(Encode, NonFiniteInputRejected) {
  const auto p = init_parameters(small_config());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 3);
  x(1, 2) = std::nan("");
  EXPECT_THROW(encode(p, x), NumericError);
}

TEST(Decoder, StartStepIsEmbeddingRowThroughRecurrence) {
  const auto p = init_parameters(small_config());
  const auto s = decode_step(p, kStart, initial_decoder_state(p));
  const Eigen::VectorXd want = (p.dec_input * p.embedding.row(0).transpose() + p.dec_bias).array().tanh();
  EXPECT_LT((s.output - want).cwiseAbs().maxCoeff(), 1e-15);
  const auto again = decode_step(p, kStart, initial_decoder_state(p));
  EXPECT_EQ(s.output, again.output);
}

TEST(Decoder, RejectsBlankAndOutOfRange) {
  const auto p = init_parameters(small_config());
  EXPECT_THROW(decode_step(p, kBlank, initial_decoder_state(p)), ContractViolation);
  EXPECT_THROW(decode_step(p, p.config.vocab_size + 1, initial_decoder_state(p)), ContractViolation);
}

TEST(Decoder, BatchMatchesSequential) {
  const auto p = init_parameters(small_config());
  detail::UniformSource rng(3);
  for (int n = 1; n <= 16; ++n) {
    std::vector<int> labels;
    std::vector<DecoderState> states;
    for (int i = 0; i < n; ++i) {
      labels.push_back(i % 4 == 0 ? kStart : 1 + static_cast<int>(rng.next() * 3));
      Eigen::VectorXd h(4);
      for (int k = 0; k < 4; ++k) h(k) = 2.0 * rng.next() - 1.0;
      states.push_back({h});
    }
    if (n == 5) {
      labels[3] = labels[1];
      states[3] = states[1];
    }
    const auto batch = batch_decode_step(p, labels, states);
    ASSERT_EQ(batch.size(), static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto one = decode_step(p, labels[i], states[i]);
      EXPECT_LT((batch[i].output - one.output).cwiseAbs().maxCoeff(), 1e-12);
    }
    if (n == 5) {
      EXPECT_EQ(batch[3].output, batch[1].output);
    }
  }
}

TEST(Joint, ZeroWeightsGiveZeroLogits) {
  auto p = init_parameters(small_config());
  p.joint_enc.setZero();
  p.joint_dec.setZero();
  p.joint_out.setZero();
  const auto z = joint(p, Eigen::VectorXd::Ones(5), Eigen::VectorXd::Ones(4));
  EXPECT_EQ(z.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Joint, HandOneDimensional) {
  ModelConfig c = small_config();
  c.enc_layers = {{LayerKind::kLinear, 1}};
  c.dec_hidden_dim = 1;
  c.joint_dim = 1;
  c.vocab_size = 1;
  c.aux_layer_indices.clear();
  auto p = init_parameters(c);
  p.joint_enc(0, 0) = 0.5;
  p.joint_dec(0, 0) = -0.25;
  p.joint_bias(0) = 0.1;
  p.joint_out << 2.0, -1.0;
  p.joint_out_bias << 0.0, 0.3;
  const double h = std::tanh(0.5 * 0.8 - 0.25 * 0.4 + 0.1);
  const auto z = joint(p, Eigen::VectorXd::Constant(1, 0.8), Eigen::VectorXd::Constant(1, 0.4));
  EXPECT_NEAR(z(0), 2.0 * h, 1e-12);
  EXPECT_NEAR(z(1), -h + 0.3, 1e-12);
}

TEST(LogSoftmax, Examples) {
  EXPECT_NEAR(log_softmax(Eigen::Vector2d(0, 0))(0), std::log(0.5), 1e-15);
  const auto big = log_softmax(Eigen::Vector2d(1000, 0));
  EXPECT_NEAR(big(0), 0.0, 1e-12);
  EXPECT_NEAR(big(1), -1000.0, 1e-9);
  Eigen::VectorXd r(5);
  r << 0.3, -2.0, 4.5, 1.0, -0.7;
  EXPECT_NEAR(log_softmax(r).array().exp().sum(), 1.0, 1e-12);
  EXPECT_THROW(log_softmax(Eigen::Vector2d(std::nan(""), 0)), NumericError);
}

TEST(Lattice, NormalizedAndShaped) {
  const auto p = init_parameters(small_config());
  const auto x = random_features(4, 3, 1);
  const std::vector<int> y{2, 1, 3};
  const auto lat = compute_lattice(p, x, y);
  ASSERT_EQ(lat.aux.size(), 1u);
  for (const PosteriorLattice* l : {&lat.main, &lat.aux[0]}) {
    for (int t = 0; t < 4; ++t) {
      for (int u = 0; u <= 3; ++u) {
        double s = 0.0;
        for (double v : l->slice(t, u)) s += std::exp(v);
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
  EXPECT_EQ(compute_lattice(p, x, std::vector<int>{}).main.target_len(), 0);
}

TEST(Lattice, EntryMatchesManualComposition) {
  const auto p = init_parameters(small_config());
  const auto x = random_features(4, 3, 2);
  const std::vector<int> y{3, 1};
  const auto lat = compute_lattice(p, x, y).main;
  const auto enc = encode(p, x).main;
  const auto d0 = decode_step(p, kStart, initial_decoder_state(p));
  const auto d1 = decode_step(p, y[0], d0.state);
  const Eigen::VectorXd lp = log_softmax(joint(p, enc.row(2).transpose(), d1.output));
  for (int k = 0; k <= 3; ++k) EXPECT_NEAR(lat(2, 1, k), lp(k), 1e-12);
  // The scorer used by search sees the same distribution.
  const ModelScorer s(p, x);
  EXPECT_LT((s.joint_logprobs(2, d1.output) - lp).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Lattice, RowsDependOnlyOnTheirPrefix) {
  const auto p = init_parameters(small_config());
  const auto x = random_features(3, 3, 4);
  const auto a = compute_lattice(p, x, std::vector<int>{1, 2, 3}).main;
  const auto b = compute_lattice(p, x, std::vector<int>{1, 3, 1}).main;
  for (int t = 0; t < 3; ++t) {
    for (int u = 0; u <= 1; ++u) {
      for (int k = 0; k <= 3; ++k) EXPECT_EQ(a(t, u, k), b(t, u, k));
    }
  }
}

TEST(Lattice, InvalidLabelRejected) {
  const auto p = init_parameters(small_config());
  EXPECT_THROW(compute_lattice(p, random_features(2, 3, 1), std::vector<int>{0}), ContractViolation);
  EXPECT_THROW(compute_lattice(p, random_features(2, 3, 1), std::vector<int>{4}), ContractViolation);
}

TEST(Backprop, ZeroUpstreamGivesZeroGradient) {
  const auto p = init_parameters(small_config());
  const auto x = random_features(3, 3, 5);
  const std::vector<int> y{1, 2};
  const auto f = forward(p, x, y);
  const auto g = backprop(p, f, UpstreamGradients{});
  g.for_each_tensor([](const std::string& name, const auto& t) {
    EXPECT_EQ(t.cwiseAbs().maxCoeff(), 0.0) << name;
  });
}

TEST(Backprop, OutputBiasPassthrough) {
  const auto p = init_parameters(small_config());
  const auto x = random_features(2, 3, 6);
  const std::vector<int> y{1};
  const auto f = forward(p, x, y);
  // d/d logit through log-softmax of a one-hot upstream on one entry.
  UpstreamGradients up;
  up.main = PosteriorLattice(2, 1, 3, 0.0);
  (*up.main)(1, 0, 2) = 1.0;
  const auto g = backprop(p, f, up);
  Eigen::VectorXd want(4);
  for (int k = 0; k <= 3; ++k) want(k) = (k == 2 ? 1.0 : 0.0) - std::exp(f.lattice(1, 0, k));
  EXPECT_LT((g.joint_out_bias - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Backprop, TransducerGradientMatchesFiniteDifferences) {
  // T = 4, U = 3 instance through the whole model.
  const auto p = init_parameters(small_config(11));
  const auto x = random_features(4, 3, 11);
  const std::vector<int> y{2, 2, 1};
  auto loss = [&](const ModelParameters& q) { return transducer_loss(compute_lattice(q, x, y).main, y).loss; };
  const auto f = forward(p, x, y);
  UpstreamGradients up;
  up.main = transducer_loss(f.lattice, y).grad;
  const auto g = backprop(p, f, up);
  auto q = p;
  auto qs = tensor_spans(q);
  const auto gs = tensor_spans(g);
  double worst = 0.0;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    for (std::size_t j = 0; j < qs[i].size(); ++j) {
      const double keep = qs[i][j];
      qs[i][j] = keep + 1e-5;
      const double up_l = loss(q);
      qs[i][j] = keep - 1e-5;
      const double down_l = loss(q);
      qs[i][j] = keep;
      worst = std::max(worst, grad_rel_error(gs[i][j], (up_l - down_l) / 2e-5));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(ParamsIo, RoundTripIsBitExact) {
  const auto p = init_parameters(small_config(3));
  std::stringstream ss;
  save_parameters(ss, p);
  const auto q = load_parameters(ss);
  EXPECT_EQ(q.config, p.config);
  EXPECT_EQ(serialize(q), serialize(p));
}

TEST(ParamsIo, RejectsGarbage) {
  std::stringstream ss("not a parameter file");
  EXPECT_THROW(load_parameters(ss), FormatError);
  const std::string full = serialize(init_parameters(small_config()));
  std::stringstream cut(full.substr(0, full.size() / 2));
  EXPECT_THROW(load_parameters(cut), FormatError);
}

}  // namespace
}  // namespace tlab
