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

// Reference transducer model: encoder stack, recurrent prediction network,
// additive joint network and the four auxiliary heads (CTC, LM, aux-MLP,
// aux-joint output), with an analytic reverse pass.

#ifndef TLAB_SCORER_HPP_
#define TLAB_SCORER_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "tlab/common.hpp"
#include "tlab/lattice.hpp"

namespace tlab {

enum class LayerKind { kLinear, kTanhRnn };

struct LayerSpec {
  LayerKind kind = LayerKind::kTanhRnn;
  int dim = 16;
  bool operator==(const LayerSpec&) const = default;
};

struct ModelConfig {
  int input_dim = 5;
  std::vector<LayerSpec> enc_layers{{LayerKind::kTanhRnn, 16}};
  int dec_embed_dim = 8;
  int dec_hidden_dim = 16;
  int joint_dim = 16;
  int vocab_size = 4;
  // 1-based encoder layer indices whose (post-activation) output feeds the
  // auxiliary transducer branch.
  std::vector<int> aux_layer_indices;
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;

  int num_symbols() const { return vocab_size + 1; }
  int enc_out_dim() const { return enc_layers.back().dim; }
  int layer_input_dim(std::size_t l) const {
    return l == 0 ? input_dim : enc_layers[l - 1].dim;
  }

  void validate() const {
    if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
    if (enc_layers.empty()) throw ConfigError("at least one encoder layer is required");
    for (const auto& l : enc_layers) {
      if (l.dim < 1) throw ConfigError("encoder layer dims must be >= 1");
    }
    if (dec_embed_dim < 1 || dec_hidden_dim < 1 || joint_dim < 1) {
      throw ConfigError("decoder and joint dims must be >= 1");
    }
    if (vocab_size < 1) throw ConfigError("vocab_size must be >= 1");
    std::set<int> seen;
    for (int idx : aux_layer_indices) {
      if (idx < 1 || idx > static_cast<int>(enc_layers.size())) {
        throw ConfigError("aux layer index " + std::to_string(idx) + " out of range");
      }
      if (!seen.insert(idx).second) throw ConfigError("duplicate aux layer index");
    }
  }
};

struct EncoderLayerParams {
  Eigen::MatrixXd weight;     // out x in
  Eigen::MatrixXd recurrent;  // out x out, empty for linear layers
  Eigen::VectorXd bias;
};

struct AuxMlpParams {
  Eigen::MatrixXd w1;  // joint x layer_dim
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // joint x joint
  Eigen::VectorXd b2;
};

struct ModelParameters {
  ModelConfig config;

  std::vector<EncoderLayerParams> encoder;

  Eigen::MatrixXd embedding;  // (V+1) x E; row 0 embeds the start symbol
  Eigen::MatrixXd dec_input;  // H x E
  Eigen::MatrixXd dec_recurrent;
  Eigen::VectorXd dec_bias;

  Eigen::MatrixXd joint_enc;  // J x enc_dim
  Eigen::MatrixXd joint_dec;  // J x H
  Eigen::VectorXd joint_bias;
  Eigen::MatrixXd joint_out;  // (V+1) x J
  Eigen::VectorXd joint_out_bias;

  Eigen::MatrixXd ctc_weight;  // (V+1) x enc_dim
  Eigen::VectorXd ctc_bias;
  Eigen::MatrixXd lm_weight;  // (V+1) x H
  Eigen::VectorXd lm_bias;

  std::vector<AuxMlpParams> aux_mlp;  // parallel to config.aux_layer_indices
  Eigen::MatrixXd aux_out;            // (V+1) x J
  Eigen::VectorXd aux_out_bias;

  // Visits every tensor as f(name, tensor). Order is fixed and defines the
  // serialization order.
  template <class F>
  void for_each_tensor(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    visit(*this, f);
  }

  ModelParameters zeros_like() const {
    ModelParameters z = *this;
    z.for_each_tensor([](const std::string&, auto& x) { x.setZero(); });
    return z;
  }

  std::size_t num_values() const {
    std::size_t n = 0;
    for_each_tensor([&](const std::string&, const auto& x) { n += static_cast<std::size_t>(x.size()); });
    return n;
  }

  bool has_aux() const { return !config.aux_layer_indices.empty(); }

 private:
  template <class Self, class F>
  static void visit(Self& p, F& f) {
    for (std::size_t l = 0; l < p.encoder.size(); ++l) {
      const std::string pre = "enc." + std::to_string(l) + ".";
      f(pre + "weight", p.encoder[l].weight);
      if (p.config.enc_layers[l].kind == LayerKind::kTanhRnn) f(pre + "recurrent", p.encoder[l].recurrent);
      f(pre + "bias", p.encoder[l].bias);
    }
    f("dec.embedding", p.embedding);
    f("dec.input", p.dec_input);
    f("dec.recurrent", p.dec_recurrent);
    f("dec.bias", p.dec_bias);
    f("joint.enc", p.joint_enc);
    f("joint.dec", p.joint_dec);
    f("joint.bias", p.joint_bias);
    f("joint.out", p.joint_out);
    f("joint.out_bias", p.joint_out_bias);
    f("ctc.weight", p.ctc_weight);
    f("ctc.bias", p.ctc_bias);
    f("lm.weight", p.lm_weight);
    f("lm.bias", p.lm_bias);
    for (std::size_t i = 0; i < p.aux_mlp.size(); ++i) {
      const std::string pre = "aux." + std::to_string(p.config.aux_layer_indices[i]) + ".";
      f(pre + "w1", p.aux_mlp[i].w1);
      f(pre + "b1", p.aux_mlp[i].b1);
      f(pre + "w2", p.aux_mlp[i].w2);
      f(pre + "b2", p.aux_mlp[i].b2);
    }
    if (!p.aux_mlp.empty()) {
      f("aux.out", p.aux_out);
      f("aux.out_bias", p.aux_out_bias);
    }
  }
};

/// True for tensors the auxiliary transducer loss must never update:
/// the prediction network and the main joint network.
inline bool is_aux_stopped_tensor(const std::string& name) {
  return name.starts_with("dec.") || name.starts_with("joint.");
}

namespace detail {

// 53-bit uniform in [0, 1) from a 64-bit engine; platform independent.
class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed) : state_(seed) {}
  double next() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

}  // namespace detail

/// Deterministic fan-in scaled uniform initialization; biases start at zero.
inline ModelParameters init_parameters(const ModelConfig& config) {
  config.validate();
  const int V1 = config.num_symbols();
  const int E = config.dec_embed_dim;
  const int H = config.dec_hidden_dim;
  const int J = config.joint_dim;
  const int D = config.enc_out_dim();

  ModelParameters p;
  p.config = config;
  for (std::size_t l = 0; l < config.enc_layers.size(); ++l) {
    const int out = config.enc_layers[l].dim;
    const int in = config.layer_input_dim(l);
    EncoderLayerParams lp;
    lp.weight.resize(out, in);
    if (config.enc_layers[l].kind == LayerKind::kTanhRnn) lp.recurrent.resize(out, out);
    lp.bias.resize(out);
    p.encoder.push_back(std::move(lp));
  }
  p.embedding.resize(V1, E);
  p.dec_input.resize(H, E);
  p.dec_recurrent.resize(H, H);
  p.dec_bias.resize(H);
  p.joint_enc.resize(J, D);
  p.joint_dec.resize(J, H);
  p.joint_bias.resize(J);
  p.joint_out.resize(V1, J);
  p.joint_out_bias.resize(V1);
  p.ctc_weight.resize(V1, D);
  p.ctc_bias.resize(V1);
  p.lm_weight.resize(V1, H);
  p.lm_bias.resize(V1);
  for (int idx : config.aux_layer_indices) {
    const int dim = config.enc_layers[static_cast<std::size_t>(idx - 1)].dim;
    AuxMlpParams a;
    a.w1.resize(J, dim);
    a.b1.resize(J);
    a.w2.resize(J, J);
    a.b2.resize(J);
    p.aux_mlp.push_back(std::move(a));
  }
  if (!p.aux_mlp.empty()) {
    p.aux_out.resize(V1, J);
    p.aux_out_bias.resize(V1);
  }

  detail::UniformSource rng(config.seed);
  p.for_each_tensor([&](const std::string& name, auto& x) {
    if constexpr (std::decay_t<decltype(x)>::ColsAtCompileTime == 1) {
      x.setZero();
      return;
    }
    // The embedding table is a lookup from a one-hot input of width V+1.
    const double fan_in = name == "dec.embedding" ? static_cast<double>(x.rows()) : static_cast<double>(x.cols());
    const double s = 1.0 / std::sqrt(fan_in);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = s * (2.0 * rng.next() - 1.0);
  });
  return p;
}

// ---------------------------------------------------------------------------
// Encoder

struct EncoderOutput {
  Eigen::MatrixXd main;               // T x enc_out_dim
  std::map<int, Eigen::MatrixXd> aux;  // aux layer index (1-based) -> T x dim
};

namespace detail {

inline void check_features(const ModelParameters& p, const Eigen::MatrixXd& features) {
  require(features.rows() >= 1, "encode: need at least one frame");
  require(features.cols() == p.config.input_dim, "encode: feature dim mismatch");
  if (!features.allFinite()) throw NumericError("encode: non-finite feature value");
}

// Returns the output of every encoder layer (T x dim each).
inline std::vector<Eigen::MatrixXd> encode_layers(const ModelParameters& p, const Eigen::MatrixXd& features) {
  check_features(p, features);
  std::vector<Eigen::MatrixXd> outs;
  outs.reserve(p.encoder.size());
  const Eigen::MatrixXd* in = &features;
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    const auto& lp = p.encoder[l];
    Eigen::MatrixXd out = (*in) * lp.weight.transpose();
    out.rowwise() += lp.bias.transpose();
    if (p.config.enc_layers[l].kind == LayerKind::kTanhRnn) {
      for (Eigen::Index t = 0; t < out.rows(); ++t) {
        if (t > 0) out.row(t) += (lp.recurrent * out.row(t - 1).transpose()).transpose();
        out.row(t) = out.row(t).array().tanh();
      }
    }
    outs.push_back(std::move(out));
    in = &outs.back();
  }
  return outs;
}

}  // namespace detail

/// Runs the encoder over a T x input_dim feature matrix. Pure.
inline EncoderOutput encode(const ModelParameters& p, const Eigen::MatrixXd& features) {
  auto layers = detail::encode_layers(p, features);
  EncoderOutput out;
  for (int idx : p.config.aux_layer_indices) out.aux[idx] = layers[static_cast<std::size_t>(idx - 1)];
  out.main = std::move(layers.back());
  return out;
}

// ---------------------------------------------------------------------------
// Prediction network

struct DecoderState {
  Eigen::VectorXd hidden;

  bool approx_equal(const DecoderState& o, double tol = 1e-12) const {
    return hidden.size() == o.hidden.size() && (hidden - o.hidden).cwiseAbs().maxCoeff() <= tol;
  }
};

struct DecoderStep {
  Eigen::VectorXd output;
  DecoderState state;
};

inline DecoderState initial_decoder_state(const ModelParameters& p) {
  return {Eigen::VectorXd::Zero(p.config.dec_hidden_dim)};
}

namespace detail {

inline int embedding_row(const ModelParameters& p, int prev_label) {
  if (prev_label == kStart) return 0;
  if (prev_label == kBlank) throw ContractViolation("decode_step: blank is never fed to the decoder");
  if (prev_label < 1 || prev_label > p.config.vocab_size) {
    throw ContractViolation("decode_step: label " + std::to_string(prev_label) + " out of range");
  }
  return prev_label;
}

}  // namespace detail

inline DecoderStep decode_step(const ModelParameters& p, int prev_label, const DecoderState& state) {
  const int row = detail::embedding_row(p, prev_label);
  require(state.hidden.size() == p.config.dec_hidden_dim, "decode_step: state dim mismatch");
  Eigen::VectorXd h = p.dec_input * p.embedding.row(row).transpose() + p.dec_recurrent * state.hidden + p.dec_bias;
  h = h.array().tanh();
  return {h, {h}};
}

/// Steps N independent decoder states at once with one matrix product.
inline std::vector<DecoderStep> batch_decode_step(const ModelParameters& p, std::span<const int> labels,
                                                  std::span<const DecoderState> states) {
  require(labels.size() == states.size(), "batch_decode_step: labels/states length mismatch");
  require(!labels.empty(), "batch_decode_step: empty batch");
  const auto n = static_cast<Eigen::Index>(labels.size());
  Eigen::MatrixXd emb(p.config.dec_embed_dim, n);
  Eigen::MatrixXd prev(p.config.dec_hidden_dim, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    emb.col(i) = p.embedding.row(detail::embedding_row(p, labels[static_cast<std::size_t>(i)])).transpose();
    require(states[static_cast<std::size_t>(i)].hidden.size() == p.config.dec_hidden_dim,
            "batch_decode_step: state dim mismatch");
    prev.col(i) = states[static_cast<std::size_t>(i)].hidden;
  }
  Eigen::MatrixXd h = p.dec_input * emb + p.dec_recurrent * prev;
  h.colwise() += p.dec_bias;
  h = h.array().tanh();
  std::vector<DecoderStep> out;
  out.reserve(labels.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd col = h.col(i);
    out.push_back({col, {col}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Joint network

inline Eigen::VectorXd joint(const ModelParameters& p, const Eigen::VectorXd& enc_t, const Eigen::VectorXd& dec_u) {
  require(enc_t.size() == p.joint_enc.cols(), "joint: encoder dim mismatch");
  require(dec_u.size() == p.joint_dec.cols(), "joint: decoder dim mismatch");
  Eigen::VectorXd z = (p.joint_enc * enc_t + p.joint_dec * dec_u + p.joint_bias).array().tanh();
  return p.joint_out * z + p.joint_out_bias;
}

inline Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  if (logits.size() == 0 || !logits.allFinite()) throw NumericError("log_softmax: non-finite logits");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

namespace detail {

// Row-wise log-softmax in place.
inline void log_softmax_rows(Eigen::MatrixXd& m) {
  if (!m.allFinite()) throw NumericError("log_softmax: non-finite logits");
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    const double lse = mx + std::log((m.row(r).array() - mx).exp().sum());
    m.row(r).array() -= lse;
  }
}

// Gradient w.r.t. logits given gradient w.r.t. log-softmax outputs.
inline Eigen::MatrixXd log_softmax_backward(const Eigen::MatrixXd& logprobs, const Eigen::MatrixXd& grad) {
  Eigen::MatrixXd out = grad;
  for (Eigen::Index r = 0; r < grad.rows(); ++r) {
    const double s = grad.row(r).sum();
    out.row(r) -= s * logprobs.row(r).array().exp().matrix();
  }
  return out;
}

inline Eigen::MatrixXd lattice_to_rows(const PosteriorLattice& lat) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(lat.frames()) * (lat.target_len() + 1), lat.num_symbols());
  const auto d = lat.data();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) m(r, k) = d[static_cast<std::size_t>(r * m.cols() + k)];
  }
  return m;
}

inline PosteriorLattice rows_to_lattice(const Eigen::MatrixXd& m, int T, int U, int V) {
  PosteriorLattice lat(T, U, V);
  auto d = lat.data();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) d[static_cast<std::size_t>(r * m.cols() + k)] = m(r, k);
  }
  return lat;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Full forward pass over one utterance

/// Which auxiliary heads a forward pass evaluates.
struct HeadSelection {
  bool aux = true;
  bool ctc = true;
  bool lm = true;
};

/// Everything the reverse pass needs. Joint rows are indexed t * (U+1) + u.
struct ForwardPass {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  std::vector<Eigen::MatrixXd> layer_out;
  Eigen::MatrixXd dec_out;   // (U+1) x H; row u follows y_{1:u}
  Eigen::MatrixXd enc_proj;  // T x J
  Eigen::MatrixXd dec_proj;  // (U+1) x J, includes joint bias
  Eigen::MatrixXd joint_hidden;
  PosteriorLattice lattice;

  std::vector<Eigen::MatrixXd> aux_mlp_hidden;  // T x J
  std::vector<Eigen::MatrixXd> aux_mlp_out;     // T x J
  std::vector<Eigen::MatrixXd> aux_joint_hidden;
  std::vector<PosteriorLattice> aux_lattices;

  Eigen::MatrixXd ctc_logprobs;  // T x (V+1)
  Eigen::MatrixXd lm_logits;     // U x (V+1); row u predicts y_{u+1}

  int frames() const { return static_cast<int>(features.rows()); }
  int target_len() const { return static_cast<int>(labels.size()); }
};

inline void check_labels(const ModelParameters& p, std::span<const int> labels) {
  for (int y : labels) {
    if (y < 1 || y > p.config.vocab_size) {
      throw ContractViolation("label " + std::to_string(y) + " outside 1.." + std::to_string(p.config.vocab_size));
    }
  }
}

inline ForwardPass forward(const ModelParameters& p, const Eigen::MatrixXd& features, std::span<const int> labels,
                           HeadSelection heads = {}) {
  check_labels(p, labels);
  const int V = p.config.vocab_size;
  const int U = static_cast<int>(labels.size());
  const int J = p.config.joint_dim;

  ForwardPass f;
  f.features = features;
  f.labels.assign(labels.begin(), labels.end());
  f.layer_out = detail::encode_layers(p, features);
  const int T = static_cast<int>(features.rows());
  const Eigen::MatrixXd& enc = f.layer_out.back();

  f.dec_out.resize(U + 1, p.config.dec_hidden_dim);
  DecoderState st = initial_decoder_state(p);
  for (int u = 0; u <= U; ++u) {
    auto step = decode_step(p, u == 0 ? kStart : labels[static_cast<std::size_t>(u - 1)], st);
    f.dec_out.row(u) = step.output.transpose();
    st = std::move(step.state);
  }

  f.enc_proj = enc * p.joint_enc.transpose();
  f.dec_proj = f.dec_out * p.joint_dec.transpose();
  f.dec_proj.rowwise() += p.joint_bias.transpose();

  f.joint_hidden.resize(static_cast<Eigen::Index>(T) * (U + 1), J);
  for (int t = 0; t < T; ++t) {
    for (int u = 0; u <= U; ++u) {
      f.joint_hidden.row(t * (U + 1) + u) = (f.enc_proj.row(t) + f.dec_proj.row(u)).array().tanh();
    }
  }
  Eigen::MatrixXd logits = f.joint_hidden * p.joint_out.transpose();
  logits.rowwise() += p.joint_out_bias.transpose();
  detail::log_softmax_rows(logits);
  f.lattice = detail::rows_to_lattice(logits, T, U, V);

  if (heads.aux && p.has_aux()) {
    for (std::size_t i = 0; i < p.aux_mlp.size(); ++i) {
      const auto& a = p.aux_mlp[i];
      const Eigen::MatrixXd& h = f.layer_out[static_cast<std::size_t>(p.config.aux_layer_indices[i] - 1)];
      Eigen::MatrixXd mh = h * a.w1.transpose();
      mh.rowwise() += a.b1.transpose();
      mh = mh.array().tanh();
      Eigen::MatrixXd mo = mh * a.w2.transpose();
      mo.rowwise() += a.b2.transpose();
      Eigen::MatrixXd hid(static_cast<Eigen::Index>(T) * (U + 1), J);
      for (int t = 0; t < T; ++t) {
        for (int u = 0; u <= U; ++u) hid.row(t * (U + 1) + u) = (mo.row(t) + f.dec_proj.row(u)).array().tanh();
      }
      Eigen::MatrixXd al = hid * p.aux_out.transpose();
      al.rowwise() += p.aux_out_bias.transpose();
      detail::log_softmax_rows(al);
      f.aux_lattices.push_back(detail::rows_to_lattice(al, T, U, V));
      f.aux_mlp_hidden.push_back(std::move(mh));
      f.aux_mlp_out.push_back(std::move(mo));
      f.aux_joint_hidden.push_back(std::move(hid));
    }
  }

  if (heads.ctc) {
    f.ctc_logprobs = enc * p.ctc_weight.transpose();
    f.ctc_logprobs.rowwise() += p.ctc_bias.transpose();
    detail::log_softmax_rows(f.ctc_logprobs);
  }

  if (heads.lm && U > 0) {
    f.lm_logits = f.dec_out.topRows(U) * p.lm_weight.transpose();
    f.lm_logits.rowwise() += p.lm_bias.transpose();
  }
  return f;
}

struct LatticeSet {
  PosteriorLattice main;
  std::vector<PosteriorLattice> aux;  // parallel to aux_layer_indices
};

/// Posterior lattice of the main joint plus one lattice per aux tap.
inline LatticeSet compute_lattice(const ModelParameters& p, const Eigen::MatrixXd& features,
                                  std::span<const int> labels) {
  auto f = forward(p, features, labels, {.aux = true, .ctc = false, .lm = false});
  return {std::move(f.lattice), std::move(f.aux_lattices)};
}

// ---------------------------------------------------------------------------
// Reverse pass

/// Upstream gradients. Absent members contribute nothing.
struct UpstreamGradients {
  std::optional<PosteriorLattice> main;        // d/d log-prob of the main lattice
  std::vector<PosteriorLattice> aux_stopped;   // aux-transducer route: never reaches dec.* / joint.*
  std::vector<PosteriorLattice> aux_full;      // divergence route: reaches every branch
  Eigen::MatrixXd ctc_logprobs;                // T x (V+1)
  Eigen::MatrixXd lm_logits;                   // U x (V+1)
};

inline ModelParameters backprop(const ModelParameters& p, const ForwardPass& f, const UpstreamGradients& up) {
  const int T = f.frames();
  const int U = f.target_len();
  const int V1 = p.config.num_symbols();
  ModelParameters g = p.zeros_like();

  std::vector<Eigen::MatrixXd> d_layer;
  for (const auto& lo : f.layer_out) d_layer.push_back(Eigen::MatrixXd::Zero(lo.rows(), lo.cols()));
  Eigen::MatrixXd d_dec = Eigen::MatrixXd::Zero(U + 1, p.config.dec_hidden_dim);
  Eigen::MatrixXd d_enc_proj = Eigen::MatrixXd::Zero(T, p.config.joint_dim);
  Eigen::MatrixXd d_dec_proj = Eigen::MatrixXd::Zero(U + 1, p.config.joint_dim);

  auto check_lattice = [&](const PosteriorLattice& l) {
    require(l.frames() == T && l.target_len() == U && l.num_symbols() == V1, "backprop: lattice gradient shape mismatch");
  };

  // Main joint.
  if (up.main) {
    check_lattice(*up.main);
    const Eigen::MatrixXd lp = detail::lattice_to_rows(f.lattice);
    const Eigen::MatrixXd dz = detail::log_softmax_backward(lp, detail::lattice_to_rows(*up.main));
    g.joint_out += dz.transpose() * f.joint_hidden;
    g.joint_out_bias += dz.colwise().sum().transpose();
    const Eigen::MatrixXd dh =
        ((dz * p.joint_out).array() * (1.0 - f.joint_hidden.array().square())).matrix();
    for (int t = 0; t < T; ++t) {
      for (int u = 0; u <= U; ++u) {
        d_enc_proj.row(t) += dh.row(t * (U + 1) + u);
        d_dec_proj.row(u) += dh.row(t * (U + 1) + u);
      }
    }
  }

  // Auxiliary joints.
  const bool any_aux = !up.aux_stopped.empty() || !up.aux_full.empty();
  if (any_aux) {
    require(!f.aux_lattices.empty(), "backprop: forward pass has no aux lattices");
    require(up.aux_stopped.empty() || up.aux_stopped.size() == f.aux_lattices.size(), "backprop: aux gradient count mismatch");
    require(up.aux_full.empty() || up.aux_full.size() == f.aux_lattices.size(), "backprop: aux gradient count mismatch");
    for (std::size_t i = 0; i < f.aux_lattices.size(); ++i) {
      const Eigen::MatrixXd lp = detail::lattice_to_rows(f.aux_lattices[i]);
      const Eigen::MatrixXd& hid = f.aux_joint_hidden[i];
      const Eigen::ArrayXXd dtanh = 1.0 - hid.array().square();
      Eigen::MatrixXd dh_stop = Eigen::MatrixXd::Zero(hid.rows(), hid.cols());
      Eigen::MatrixXd dh_full = Eigen::MatrixXd::Zero(hid.rows(), hid.cols());
      if (!up.aux_stopped.empty()) {
        check_lattice(up.aux_stopped[i]);
        const Eigen::MatrixXd dz = detail::log_softmax_backward(lp, detail::lattice_to_rows(up.aux_stopped[i]));
        g.aux_out += dz.transpose() * hid;
        g.aux_out_bias += dz.colwise().sum().transpose();
        dh_stop = ((dz * p.aux_out).array() * dtanh).matrix();
      }
      if (!up.aux_full.empty()) {
        check_lattice(up.aux_full[i]);
        const Eigen::MatrixXd dz = detail::log_softmax_backward(lp, detail::lattice_to_rows(up.aux_full[i]));
        g.aux_out += dz.transpose() * hid;
        g.aux_out_bias += dz.colwise().sum().transpose();
        dh_full = ((dz * p.aux_out).array() * dtanh).matrix();
      }
      Eigen::MatrixXd d_mo = Eigen::MatrixXd::Zero(T, p.config.joint_dim);
      for (int t = 0; t < T; ++t) {
        for (int u = 0; u <= U; ++u) {
          const Eigen::Index r = t * (U + 1) + u;
          d_mo.row(t) += dh_stop.row(r) + dh_full.row(r);
          d_dec_proj.row(u) += dh_full.row(r);
        }
      }
      const auto& a = p.aux_mlp[i];
      auto& ga = g.aux_mlp[i];
      const Eigen::MatrixXd& mh = f.aux_mlp_hidden[i];
      ga.w2 += d_mo.transpose() * mh;
      ga.b2 += d_mo.colwise().sum().transpose();
      const Eigen::MatrixXd d_mh = ((d_mo * a.w2).array() * (1.0 - mh.array().square())).matrix();
      const std::size_t layer = static_cast<std::size_t>(p.config.aux_layer_indices[i] - 1);
      ga.w1 += d_mh.transpose() * f.layer_out[layer];
      ga.b1 += d_mh.colwise().sum().transpose();
      d_layer[layer] += d_mh * a.w1;
    }
  }

  const Eigen::MatrixXd& enc = f.layer_out.back();
  g.joint_enc += d_enc_proj.transpose() * enc;
  d_layer.back() += d_enc_proj * p.joint_enc;
  g.joint_dec += d_dec_proj.transpose() * f.dec_out;
  g.joint_bias += d_dec_proj.colwise().sum().transpose();
  d_dec += d_dec_proj * p.joint_dec;

  if (up.ctc_logprobs.size() > 0) {
    require(up.ctc_logprobs.rows() == T && up.ctc_logprobs.cols() == V1, "backprop: ctc gradient shape mismatch");
    require(f.ctc_logprobs.size() > 0, "backprop: forward pass has no ctc head");
    const Eigen::MatrixXd dz = detail::log_softmax_backward(f.ctc_logprobs, up.ctc_logprobs);
    g.ctc_weight += dz.transpose() * enc;
    g.ctc_bias += dz.colwise().sum().transpose();
    d_layer.back() += dz * p.ctc_weight;
  }

  if (up.lm_logits.size() > 0) {
    require(up.lm_logits.rows() == U && up.lm_logits.cols() == V1, "backprop: lm gradient shape mismatch");
    g.lm_weight += up.lm_logits.transpose() * f.dec_out.topRows(U);
    g.lm_bias += up.lm_logits.colwise().sum().transpose();
    d_dec.topRows(U) += up.lm_logits * p.lm_weight;
  }

  // Prediction network, through time.
  {
    Eigen::VectorXd carry = Eigen::VectorXd::Zero(p.config.dec_hidden_dim);
    for (int u = U; u >= 0; --u) {
      const Eigen::VectorXd s = f.dec_out.row(u).transpose();
      const Eigen::VectorXd da = ((d_dec.row(u).transpose() + carry).array() * (1.0 - s.array().square())).matrix();
      const int row = u == 0 ? 0 : f.labels[static_cast<std::size_t>(u - 1)];
      g.dec_input += da * p.embedding.row(row);
      if (u > 0) g.dec_recurrent += da * f.dec_out.row(u - 1);
      g.dec_bias += da;
      g.embedding.row(row) += (p.dec_input.transpose() * da).transpose();
      carry = p.dec_recurrent.transpose() * da;
    }
  }

  // Encoder, top layer down.
  for (std::size_t l = f.layer_out.size(); l-- > 0;) {
    const auto& lp = p.encoder[l];
    auto& gl = g.encoder[l];
    const Eigen::MatrixXd& in = l == 0 ? f.features : f.layer_out[l - 1];
    const Eigen::MatrixXd& out = f.layer_out[l];
    Eigen::MatrixXd d_in;
    if (p.config.enc_layers[l].kind == LayerKind::kLinear) {
      gl.weight += d_layer[l].transpose() * in;
      gl.bias += d_layer[l].colwise().sum().transpose();
      d_in = d_layer[l] * lp.weight;
    } else {
      d_in.resize(in.rows(), in.cols());
      Eigen::VectorXd carry = Eigen::VectorXd::Zero(out.cols());
      for (Eigen::Index t = out.rows() - 1; t >= 0; --t) {
        const Eigen::VectorXd h = out.row(t).transpose();
        const Eigen::VectorXd da = ((d_layer[l].row(t).transpose() + carry).array() * (1.0 - h.array().square())).matrix();
        gl.weight += da * in.row(t);
        if (t > 0) gl.recurrent += da * out.row(t - 1);
        gl.bias += da;
        d_in.row(t) = (lp.weight.transpose() * da).transpose();
        carry = lp.recurrent.transpose() * da;
      }
    }
    if (l > 0) d_layer[l - 1] += d_in;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Utterance-bound scorer used by the search algorithms.

/// Binds parameters to one utterance's encoder output. Cheap to construct;
/// the parameters must outlive it.
class ModelScorer {
 public:
  using State = DecoderState;

  ModelScorer(const ModelParameters& params, const Eigen::MatrixXd& features)
      : params_(&params), enc_proj_(encode(params, features).main * params.joint_enc.transpose()) {}

  int num_frames() const { return static_cast<int>(enc_proj_.rows()); }
  int vocab_size() const { return params_->config.vocab_size; }

  State initial_state() const { return initial_decoder_state(*params_); }

  DecoderStep decode_step(int prev_label, const State& s) const { return tlab::decode_step(*params_, prev_label, s); }

  std::vector<DecoderStep> batch_decode_step(std::span<const int> labels, std::span<const State> states) const {
    return tlab::batch_decode_step(*params_, labels, states);
  }

  Eigen::VectorXd joint_logprobs(int t, const Eigen::VectorXd& dec_out) const {
    Eigen::VectorXd z =
        (enc_proj_.row(t).transpose() + params_->joint_dec * dec_out + params_->joint_bias).array().tanh();
    return log_softmax(params_->joint_out * z + params_->joint_out_bias);
  }

 private:
  const ModelParameters* params_;
  Eigen::MatrixXd enc_proj_;
};

}  // namespace tlab

#endif  // TLAB_SCORER_HPP_
