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

// Synthetic transduction tasks and the plain-text dataset format.
//
//   <count> <input_dim> <V>
//   per utterance:
//     <T> <U>
//     T lines of input_dim whitespace-separated doubles
//     one line of U labels (empty when U = 0)

#ifndef TLAB_DATA_HPP_
#define TLAB_DATA_HPP_

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "tlab/common.hpp"
#include "tlab/scorer.hpp"

namespace tlab {

struct Utterance {
  Eigen::MatrixXd features;  // T x input_dim
  std::vector<int> labels;
};

struct Dataset {
  int input_dim = 0;
  int vocab_size = 0;
  std::vector<Utterance> utterances;

  bool operator==(const Dataset& o) const {
    if (input_dim != o.input_dim || vocab_size != o.vocab_size || utterances.size() != o.utterances.size()) return false;
    for (std::size_t i = 0; i < utterances.size(); ++i) {
      const auto& a = utterances[i];
      const auto& b = o.utterances[i];
      if (a.labels != b.labels || a.features.rows() != b.features.rows() || a.features.cols() != b.features.cols() ||
          a.features != b.features) {
        return false;
      }
    }
    return true;
  }
};

enum class TaskKind { kCopy, kRepeat2 };

inline TaskKind parse_task_kind(const std::string& s) {
  if (s == "copy") return TaskKind::kCopy;
  if (s == "repeat2") return TaskKind::kRepeat2;
  throw ConfigError("unknown task '" + s + "' (expected copy or repeat2)");
}

inline std::string to_string(TaskKind k) { return k == TaskKind::kCopy ? "copy" : "repeat2"; }

/// copy: the target is the source; each source symbol spans two frames.
/// repeat2: every source symbol is emitted twice; with few frames per
/// symbol the model must emit several labels in one frame. Neighbouring
/// source symbols differ, so three frames per symbol keep CTC feasible.
///
/// Features have V+1 channels: a one-hot of the source symbol (channel k-1
/// for label k) and a boundary channel set to 0.5 on the first frame of each
/// symbol block, plus Gaussian noise.
struct SyntheticTask {
  TaskKind kind = TaskKind::kCopy;
  int vocab_size = 4;
  int src_min = 2;  // source length range, inclusive
  int src_max = 5;
  int frames_per_symbol = 0;  // 0: 2 for copy, 3 for repeat2
  double noise_std = 0.0;
  bool boundary = true;  // mark the first frame of each symbol block
  int count = 500;
  std::uint64_t seed = 1;

  int input_dim() const { return vocab_size + 1; }
  int block() const { return frames_per_symbol > 0 ? frames_per_symbol : (kind == TaskKind::kCopy ? 2 : 3); }

  void validate() const {
    if (vocab_size < 1) throw ConfigError("task vocab must be >= 1");
    if (src_min < 1 || src_max < src_min) throw ConfigError("task source length range must satisfy 1 <= min <= max");
    if (frames_per_symbol < 0) throw ConfigError("frames_per_symbol must be >= 0");
    if (kind == TaskKind::kCopy && frames_per_symbol != 0 && frames_per_symbol != 2) {
      throw ConfigError("copy task uses two frames per label (T = 2U)");
    }
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ConfigError("noise_std must be finite and >= 0");
    if (count < 1) throw ConfigError("task count must be >= 1");
  }
};

namespace detail {

// Deterministic standard normal via Box-Muller over the portable uniform source.
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : u_(seed) {}
  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double a = 0.0;
    while (a <= 0.0) a = u_.next();
    const double b = u_.next();
    const double r = std::sqrt(-2.0 * std::log(a));
    spare_ = r * std::sin(2.0 * M_PI * b);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * b);
  }
  double uniform() { return u_.next(); }

 private:
  UniformSource u_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace detail

inline Dataset gen_synthetic(const SyntheticTask& task) {
  task.validate();
  detail::NormalSource rng(task.seed);
  Dataset ds{task.input_dim(), task.vocab_size, {}};
  const int fps = task.block();
  for (int n = 0; n < task.count; ++n) {
    const int S = task.src_min + static_cast<int>(rng.uniform() * (task.src_max - task.src_min + 1));
    std::vector<int> src(static_cast<std::size_t>(S));
    for (int i = 0; i < S; ++i) {
      // repeat2 never repeats a source symbol back to back: "a a a a" would
      // need 7 CTC frames in 6.
      int s = 0;
      do {
        s = 1 + static_cast<int>(rng.uniform() * task.vocab_size);
      } while (task.kind == TaskKind::kRepeat2 && task.vocab_size > 1 && i > 0 && s == src[static_cast<std::size_t>(i - 1)]);
      src[static_cast<std::size_t>(i)] = s;
    }
    Utterance u;
    u.features = Eigen::MatrixXd::Zero(S * fps, task.input_dim());
    for (int i = 0; i < S; ++i) {
      const int k = src[static_cast<std::size_t>(i)];
      for (int f = 0; f < fps; ++f) u.features(i * fps + f, k - 1) = 1.0;
      if (task.boundary) u.features(i * fps, task.vocab_size) = 0.5;
      u.labels.push_back(k);
      if (task.kind == TaskKind::kRepeat2) u.labels.push_back(k);
    }
    if (task.noise_std > 0.0) {
      for (Eigen::Index i = 0; i < u.features.size(); ++i) u.features.data()[i] += task.noise_std * rng.next();
    }
    ds.utterances.push_back(std::move(u));
  }
  return ds;
}

namespace detail {

inline std::string format_double(double d) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), d);
  return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& tok) {
  double v = 0.0;
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) throw FormatError("bad number '" + tok + "'");
  return v;
}

inline long parse_long(const std::string& tok) {
  long v = 0;
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) throw FormatError("bad integer '" + tok + "'");
  return v;
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

inline std::string next_line(std::istream& is, const char* what) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError(std::string("dataset truncated reading ") + what);
  return line;
}

}  // namespace detail

inline void write_dataset(std::ostream& os, const Dataset& ds) {
  os << ds.utterances.size() << ' ' << ds.input_dim << ' ' << ds.vocab_size << '\n';
  for (const auto& u : ds.utterances) {
    os << u.features.rows() << ' ' << u.labels.size() << '\n';
    for (Eigen::Index t = 0; t < u.features.rows(); ++t) {
      for (Eigen::Index c = 0; c < u.features.cols(); ++c) {
        if (c > 0) os << ' ';
        os << detail::format_double(u.features(t, c));
      }
      os << '\n';
    }
    for (std::size_t i = 0; i < u.labels.size(); ++i) os << (i > 0 ? " " : "") << u.labels[i];
    os << '\n';
  }
}

inline Dataset read_dataset(std::istream& is) {
  using detail::next_line;
  using detail::parse_long;
  const auto head = detail::split_ws(next_line(is, "header"));
  if (head.size() != 3) throw FormatError("dataset header must be '<count> <input_dim> <V>'");
  const long count = parse_long(head[0]);
  Dataset ds{static_cast<int>(parse_long(head[1])), static_cast<int>(parse_long(head[2])), {}};
  if (count < 0 || ds.input_dim < 1 || ds.vocab_size < 1) throw FormatError("dataset header out of range");
  for (long n = 0; n < count; ++n) {
    const auto tu = detail::split_ws(next_line(is, "utterance header"));
    if (tu.size() != 2) throw FormatError("utterance header must be '<T> <U>'");
    const long T = parse_long(tu[0]);
    const long U = parse_long(tu[1]);
    if (T < 1 || U < 0) throw FormatError("utterance shape out of range");
    Utterance u;
    u.features.resize(T, ds.input_dim);
    for (long t = 0; t < T; ++t) {
      const auto row = detail::split_ws(next_line(is, "feature row"));
      if (static_cast<int>(row.size()) != ds.input_dim) throw FormatError("feature row has wrong width");
      for (int c = 0; c < ds.input_dim; ++c) u.features(t, c) = detail::parse_double(row[static_cast<std::size_t>(c)]);
    }
    const auto lab = detail::split_ws(next_line(is, "label line"));
    if (static_cast<long>(lab.size()) != U) throw FormatError("label line length does not match U");
    for (const auto& tok : lab) {
      const long k = parse_long(tok);
      if (k < 1 || k > ds.vocab_size) throw FormatError("label outside 1..V");
      u.labels.push_back(static_cast<int>(k));
    }
    ds.utterances.push_back(std::move(u));
  }
  return ds;
}

inline void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  write_dataset(os, ds);
  if (!os) throw FormatError("failed writing " + path);
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  return read_dataset(is);
}

}  // namespace tlab

#endif  // TLAB_DATA_HPP_
