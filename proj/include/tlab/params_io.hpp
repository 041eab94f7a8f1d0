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

// Binary parameter container.
//
//   "TLAB"  u32 version
//   config: u32 input_dim, u32 n_layers, n_layers x (u8 kind, u32 dim),
//           u32 dec_embed_dim, u32 dec_hidden_dim, u32 joint_dim,
//           u32 vocab_size, u32 n_aux, n_aux x u32 index, u64 seed
//   u32 n_tensors, then per tensor:
//           u32 name_len, name bytes, u32 rank, rank x u64 dims,
//           prod(dims) x f64 (row-major)
//
// Every integer and float is little-endian.

#ifndef TLAB_PARAMS_IO_HPP_
#define TLAB_PARAMS_IO_HPP_

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "tlab/scorer.hpp"

namespace tlab {

inline constexpr std::uint32_t kParamFormatVersion = 1;

namespace detail {

template <class U>
void put_le(std::ostream& os, U v) {
  std::array<char, sizeof(U)> buf{};
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf.data(), buf.size());
}

template <class U>
U get_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> buf{};
  is.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!is) throw FormatError("parameter file truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& os, double d) { put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(d)); }
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_le<std::uint64_t>(is)); }

}  // namespace detail

inline void write_config(std::ostream& os, const ModelConfig& c) {
  using detail::put_le;
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.input_dim));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.enc_layers.size()));
  for (const auto& l : c.enc_layers) {
    put_le<std::uint8_t>(os, l.kind == LayerKind::kLinear ? 0 : 1);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(l.dim));
  }
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.dec_embed_dim));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.dec_hidden_dim));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.joint_dim));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.vocab_size));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.aux_layer_indices.size()));
  for (int i : c.aux_layer_indices) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(i));
  put_le<std::uint64_t>(os, c.seed);
}

inline ModelConfig read_config(std::istream& is) {
  using detail::get_le;
  ModelConfig c;
  c.input_dim = static_cast<int>(get_le<std::uint32_t>(is));
  const auto n_layers = get_le<std::uint32_t>(is);
  if (n_layers > 1024) throw FormatError("implausible encoder layer count");
  c.enc_layers.clear();
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const auto kind = get_le<std::uint8_t>(is);
    if (kind > 1) throw FormatError("unknown encoder layer kind");
    const int dim = static_cast<int>(get_le<std::uint32_t>(is));
    c.enc_layers.push_back({kind == 0 ? LayerKind::kLinear : LayerKind::kTanhRnn, dim});
  }
  c.dec_embed_dim = static_cast<int>(get_le<std::uint32_t>(is));
  c.dec_hidden_dim = static_cast<int>(get_le<std::uint32_t>(is));
  c.joint_dim = static_cast<int>(get_le<std::uint32_t>(is));
  c.vocab_size = static_cast<int>(get_le<std::uint32_t>(is));
  const auto n_aux = get_le<std::uint32_t>(is);
  if (n_aux > n_layers) throw FormatError("more aux taps than encoder layers");
  for (std::uint32_t i = 0; i < n_aux; ++i) c.aux_layer_indices.push_back(static_cast<int>(get_le<std::uint32_t>(is)));
  c.seed = get_le<std::uint64_t>(is);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("stored config invalid: ") + e.what());
  }
  return c;
}

inline void save_parameters(std::ostream& os, const ModelParameters& p) {
  os.write("TLAB", 4);
  detail::put_le<std::uint32_t>(os, kParamFormatVersion);
  write_config(os, p.config);
  std::uint32_t n = 0;
  p.for_each_tensor([&](const std::string&, const auto&) { ++n; });
  detail::put_le<std::uint32_t>(os, n);
  p.for_each_tensor([&](const std::string& name, const auto& x) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    constexpr bool is_vector = std::decay_t<decltype(x)>::ColsAtCompileTime == 1;
    detail::put_le<std::uint32_t>(os, is_vector ? 1 : 2);
    detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(x.rows()));
    if (!is_vector) detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(x.cols()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) detail::put_f64(os, x(r, c));
    }
  });
  if (!os) throw FormatError("failed writing parameter stream");
}

inline ModelParameters load_parameters(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "TLAB", 4) != 0) throw FormatError("not a TLAB parameter file");
  const auto version = detail::get_le<std::uint32_t>(is);
  if (version != kParamFormatVersion) throw FormatError("unsupported parameter format version " + std::to_string(version));
  ModelParameters p = init_parameters(read_config(is));
  const auto n = detail::get_le<std::uint32_t>(is);
  std::uint32_t expected = 0;
  p.for_each_tensor([&](const std::string&, const auto&) { ++expected; });
  if (n != expected) throw FormatError("tensor count mismatch");
  p.for_each_tensor([&](const std::string& name, auto& x) {
    const auto len = detail::get_le<std::uint32_t>(is);
    if (len > 4096) throw FormatError("implausible tensor name length");
    std::string stored(len, '\0');
    is.read(stored.data(), len);
    if (!is || stored != name) throw FormatError("expected tensor '" + name + "', found '" + stored + "'");
    const auto rank = detail::get_le<std::uint32_t>(is);
    if (rank != 1 && rank != 2) throw FormatError("bad rank for tensor " + name);
    const auto rows = detail::get_le<std::uint64_t>(is);
    const std::uint64_t cols = rank == 2 ? detail::get_le<std::uint64_t>(is) : 1;
    if (rows != static_cast<std::uint64_t>(x.rows()) || cols != static_cast<std::uint64_t>(x.cols())) {
      throw FormatError("shape mismatch for tensor " + name);
    }
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = detail::get_f64(is);
    }
  });
  return p;
}

inline void save_parameters(const std::string& path, const ModelParameters& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  save_parameters(os, p);
}

inline ModelParameters load_parameters(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return load_parameters(is);
}

}  // namespace tlab

#endif  // TLAB_PARAMS_IO_HPP_
