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

// tlab: data generation, training, decoding, benchmarking and oracle checks.
//
// Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
// 3 numeric failure, 4 verification failure.

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tlab/bench.hpp"
#include "tlab/config.hpp"
#include "tlab/data.hpp"
#include "tlab/params_io.hpp"
#include "tlab/search/search.hpp"
#include "tlab/trainer.hpp"
#include "tlab/verify.hpp"

namespace {

using namespace tlab;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitVerify = 4;

class VerificationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Everything a subcommand may need. Filled from the config file, then from
// flags, through the same key table.
struct RunConfig {
  std::uint64_t seed = 1;
  SyntheticTask task;
  bool task_given = false;
  ModelConfig model;
  bool layers_given = false;
  bool aux_layers_given = false;
  TrainConfig train;
  BeamConfig search;
  int jobs = 1;
  int calibrate = 0;
  SweepSpec sweep;
  std::string bench_strategies = "all";

  std::string data, out, model_path, log, lm_path, init, expansion_out;
  std::string suite = "all";
  int verify_n = 0;
};

std::vector<LayerSpec> parse_layers(const std::string& s) {
  std::vector<LayerSpec> out;
  for (const auto& item : split_list(s)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("layer '" + item + "' must be kind:dim");
    const std::string kind = item.substr(0, colon);
    LayerKind k;
    if (kind == "linear") k = LayerKind::kLinear;
    else if (kind == "tanh_rnn" || kind == "rnn") k = LayerKind::kTanhRnn;
    else throw ConfigError("unknown layer kind '" + kind + "'");
    out.push_back({k, parse_number<int>(item.substr(colon + 1))});
  }
  if (out.empty()) throw ConfigError("empty layer list");
  return out;
}

// "none", "all", or a list like "ctc=0.5,lm=0.4" (a bare name takes its
// default weight).
TaskWeights parse_aux(const std::string& s) {
  if (s == "none") return TaskWeights::vanilla();
  if (s == "all") return TaskWeights::all_tasks();
  TaskWeights w = TaskWeights::vanilla();
  for (const auto& item : split_list(s)) {
    const auto eq = item.find('=');
    const std::string name = item.substr(0, eq);
    const std::optional<double> value =
        eq == std::string::npos ? std::nullopt : std::optional<double>(parse_number<double>(item.substr(eq + 1)));
    if (name == "ctc") {
      w.use_ctc = true;
      if (value) w.ctc = *value;
    } else if (name == "lm") {
      w.use_lm = true;
      if (value) w.lm = *value;
    } else if (name == "aux_trans" || name == "aux") {
      w.use_aux_trans = true;
      if (value) w.aux_trans = *value;
    } else if (name == "symm_kl" || name == "kl") {
      w.use_symm_kl = true;
      if (value) w.symm_kl = *value;
    } else if (name == "trans") {
      if (value) w.trans = *value;
    } else {
      throw ConfigError("unknown auxiliary task '" + name + "'");
    }
  }
  w.validate();
  return w;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (const auto& item : split_list(s)) out.push_back(parse_number<int>(item));
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& key_table() {
  static const std::map<std::string, Setter> table = {
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>(v); }},
      {"io.data", [](RunConfig& c, const std::string& v) { c.data = v; }},
      {"io.out", [](RunConfig& c, const std::string& v) { c.out = v; }},
      {"io.model", [](RunConfig& c, const std::string& v) { c.model_path = v; }},
      {"io.log", [](RunConfig& c, const std::string& v) { c.log = v; }},
      {"io.init", [](RunConfig& c, const std::string& v) { c.init = v; }},
      {"io.expansion_out", [](RunConfig& c, const std::string& v) { c.expansion_out = v; }},
      {"task.kind",
       [](RunConfig& c, const std::string& v) {
         c.task.kind = parse_task_kind(v);
         c.task_given = true;
       }},
      {"task.vocab", [](RunConfig& c, const std::string& v) { c.task.vocab_size = parse_number<int>(v); }},
      {"task.src_min", [](RunConfig& c, const std::string& v) { c.task.src_min = parse_number<int>(v); }},
      {"task.src_max", [](RunConfig& c, const std::string& v) { c.task.src_max = parse_number<int>(v); }},
      {"task.frames_per_symbol",
       [](RunConfig& c, const std::string& v) { c.task.frames_per_symbol = parse_number<int>(v); }},
      {"task.noise_std", [](RunConfig& c, const std::string& v) { c.task.noise_std = parse_number<double>(v); }},
      {"task.boundary", [](RunConfig& c, const std::string& v) { c.task.boundary = parse_bool(v); }},
      {"task.count", [](RunConfig& c, const std::string& v) { c.task.count = parse_number<int>(v); }},
      {"model.layers",
       [](RunConfig& c, const std::string& v) {
         c.model.enc_layers = parse_layers(v);
         c.layers_given = true;
       }},
      {"model.embed_dim", [](RunConfig& c, const std::string& v) { c.model.dec_embed_dim = parse_number<int>(v); }},
      {"model.hidden_dim", [](RunConfig& c, const std::string& v) { c.model.dec_hidden_dim = parse_number<int>(v); }},
      {"model.joint_dim", [](RunConfig& c, const std::string& v) { c.model.joint_dim = parse_number<int>(v); }},
      {"model.aux_layers",
       [](RunConfig& c, const std::string& v) {
         c.model.aux_layer_indices = parse_int_list(v);
         c.aux_layers_given = true;
       }},
      {"train.aux", [](RunConfig& c, const std::string& v) { c.train.weights = parse_aux(v); }},
      {"train.optimizer", [](RunConfig& c, const std::string& v) { c.train.optimizer = parse_optimizer(v); }},
      {"train.lr", [](RunConfig& c, const std::string& v) { c.train.lr = parse_number<double>(v); }},
      {"train.momentum", [](RunConfig& c, const std::string& v) { c.train.momentum = parse_number<double>(v); }},
      {"train.batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_number<int>(v); }},
      {"train.epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = parse_number<int>(v); }},
      {"train.clip_norm", [](RunConfig& c, const std::string& v) { c.train.clip_norm = parse_number<double>(v); }},
      {"train.eval_interval",
       [](RunConfig& c, const std::string& v) { c.train.eval_interval = parse_number<int>(v); }},
      {"train.label_smoothing",
       [](RunConfig& c, const std::string& v) { c.train.label_smoothing = parse_number<double>(v); }},
      {"search.strategy", [](RunConfig& c, const std::string& v) { c.search.strategy = parse_strategy(v); }},
      {"search.beam", [](RunConfig& c, const std::string& v) { c.search.beam_size = parse_number<int>(v); }},
      {"search.nbest", [](RunConfig& c, const std::string& v) { c.search.nbest = parse_number<int>(v); }},
      {"search.u_max", [](RunConfig& c, const std::string& v) { c.search.u_max = parse_number<int>(v); }},
      {"search.max_sym_exp", [](RunConfig& c, const std::string& v) { c.search.max_sym_exp = parse_number<int>(v); }},
      {"search.nstep", [](RunConfig& c, const std::string& v) { c.search.nstep = parse_number<int>(v); }},
      {"search.auto_nstep", [](RunConfig& c, const std::string& v) { c.search.auto_nstep = parse_number<int>(v); }},
      {"search.alpha", [](RunConfig& c, const std::string& v) { c.search.prefix_alpha = parse_number<int>(v); }},
      {"search.lm", [](RunConfig& c, const std::string& v) { c.lm_path = v; }},
      {"search.lm_weight",
       [](RunConfig& c, const std::string& v) { c.search.lm_weight = parse_number<double>(v); }},
      {"search.calibrate", [](RunConfig& c, const std::string& v) { c.calibrate = parse_number<int>(v); }},
      {"run.jobs", [](RunConfig& c, const std::string& v) { c.jobs = parse_number<int>(v); }},
      {"bench.strategy", [](RunConfig& c, const std::string& v) { c.bench_strategies = v; }},
      {"bench.grid", [](RunConfig& c, const std::string& v) { c.sweep.grid = parse_int_list(v); }},
      {"bench.reps", [](RunConfig& c, const std::string& v) { c.sweep.repetitions = parse_number<int>(v); }},
      {"bench.frame_duration",
       [](RunConfig& c, const std::string& v) { c.sweep.frame_duration_s = parse_number<double>(v); }},
      {"verify.suite", [](RunConfig& c, const std::string& v) { c.suite = v; }},
      {"verify.n", [](RunConfig& c, const std::string& v) { c.verify_n = parse_number<int>(v); }},
  };
  return table;
}

// Collects flag values under their config keys; applied after the file.
class FlagSet {
 public:
  explicit FlagSet(CLI::App* app) : app_(app) {}

  void add(const std::string& flag, const std::string& key, const std::string& help) {
    app_->add_option_function<std::string>(flag, [this, key](const std::string& v) { values_[key] = v; }, help);
  }
  void add_switch(const std::string& flag, const std::string& key, const std::string& value, const std::string& help) {
    app_->add_flag_callback(flag, [this, key, value]() { values_[key] = value; }, help);
  }
  bool given(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }
  CLI::App* app() const { return app_; }

  std::string config_path;

 private:
  CLI::App* app_;
  std::map<std::string, std::string> values_;
};

// Resolution order: defaults < TLAB_SEED < config file < flags. Keys are
// limited to the sections the subcommand understands.
RunConfig resolve(const FlagSet& flags, const std::vector<std::string>& sections) {
  RunConfig c;
  if (const char* env = std::getenv("TLAB_SEED"); env != nullptr && *env != '\0') {
    try {
      c.seed = parse_number<std::uint64_t>(env);
    } catch (const ConfigError&) {
      throw ConfigError(std::string("TLAB_SEED is not an unsigned integer: ") + env);
    }
  }
  std::map<std::string, std::string> merged;
  if (!flags.config_path.empty()) merged = KeyValueConfig::load(flags.config_path).values();
  for (const auto& [k, v] : flags.values()) merged[k] = v;
  const auto& table = key_table();
  auto allowed = [&](const std::string& key) {
    if (key == "seed") return true;
    const auto dot = key.find('.');
    if (dot == std::string::npos) return false;
    const std::string section = key.substr(0, dot);
    return std::find(sections.begin(), sections.end(), section) != sections.end();
  };
  std::string unknown;
  for (const auto& [k, v] : merged) {
    auto it = table.find(k);
    if (it == table.end() || !allowed(k)) {
      unknown += (unknown.empty() ? "" : ", ") + k;
      continue;
    }
    try {
      it->second(c, v);
    } catch (const ConfigError& e) {
      throw ConfigError("'" + k + "': " + e.what());
    }
  }
  if (!unknown.empty()) throw ConfigError("unknown config key(s) for this command: " + unknown);
  c.task.seed = c.seed;
  c.train.seed = c.seed;
  c.model.seed = c.seed;
  c.train.jobs = c.jobs;
  return c;
}

void add_common(FlagSet& f) {
  f.app()->add_option("--config", f.config_path, "key = value configuration file");
  f.add("--seed", "seed", "global seed (fallback: TLAB_SEED, then 1)");
}

void add_search_flags(FlagSet& f) {
  f.add("--strategy", "search.strategy", "greedy | default | alsd | tsd | nsc");
  f.add("--beam", "search.beam", "beam size N_bs");
  f.add("--nbest", "search.nbest", "hypotheses kept in the N-best list");
  f.add("--umax", "search.u_max", "ALSD maximum output length (clamped to T-1)");
  f.add("--max-sym-exp", "search.max_sym_exp", "TSD expansions per frame");
  f.add("--nstep", "search.nstep", "NSC expansion rounds per frame");
  f.add("--auto-nstep", "search.auto_nstep", "NSC auto N_step value");
  f.add("--alpha", "search.alpha", "NSC prefix window");
  f.add("--lm", "search.lm", "parameter file whose decoder and LM head serve as fusion LM");
  f.add("--lm-weight", "search.lm_weight", "shallow fusion weight");
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw ConfigError("cannot open " + path + " for writing");
  return file;
}

std::unique_ptr<FusionLm> load_lm(RunConfig& c) {
  if (c.lm_path.empty()) {
    if (c.search.lm_weight != 0.0) throw ConfigError("--lm-weight given without --lm");
    return nullptr;
  }
  auto lm = std::make_unique<RecurrentLm>(load_parameters(c.lm_path));
  c.search.use_lm = true;
  return lm;
}

std::string hyp_text(const std::vector<int>& labels) {
  std::string s;
  for (std::size_t i = 0; i < labels.size(); ++i) s += (i ? " " : "") + std::to_string(labels[i]);
  return s;
}

std::string params_text(const BeamConfig& c) {
  std::ostringstream os;
  switch (c.strategy) {
    case Strategy::kGreedy: os << "-"; break;
    case Strategy::kDefault: os << "beam=" << c.beam_size; break;
    case Strategy::kAlsd: os << "beam=" << c.beam_size << ";u_max=" << c.u_max; break;
    case Strategy::kTsd: os << "beam=" << c.beam_size << ";max_sym_exp=" << c.max_sym_exp; break;
    case Strategy::kNsc:
      os << "beam=" << c.beam_size << ";nstep=" << c.nstep << ";auto_nstep=" << c.auto_nstep
         << ";alpha=" << c.prefix_alpha;
      break;
  }
  if (c.use_lm) os << ";lm_weight=" << detail::format_double(c.lm_weight);
  return os.str();
}

// Decodes every utterance; results come back in dataset order whatever the
// number of workers.
std::vector<DecodeReport> decode_all(const ModelParameters& p, const Dataset& ds, const BeamConfig& cfg,
                                     const FusionLm* lm, int jobs) {
  std::vector<DecodeReport> out(ds.utterances.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto worker = [&]() {
    for (std::size_t i = next++; i < out.size(); i = next++) {
      try {
        out[i] = decode(ModelScorer(p, ds.utterances[i].features), cfg, lm);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(out.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < n; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
  return out;
}

void check_dims(const ModelParameters& p, const Dataset& ds) {
  if (ds.input_dim != p.config.input_dim || ds.vocab_size != p.config.vocab_size) {
    throw ConfigError("dataset (input_dim " + std::to_string(ds.input_dim) + ", V " + std::to_string(ds.vocab_size) +
                      ") does not match the model (input_dim " + std::to_string(p.config.input_dim) + ", V " +
                      std::to_string(p.config.vocab_size) + ")");
  }
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const FlagSet& f) {
  RunConfig c = resolve(f, {"task", "io"});
  if (!c.task_given) throw ConfigError("missing --task (copy or repeat2)\n" + f.app()->help());
  const Dataset ds = gen_synthetic(c.task);
  std::ofstream file;
  write_dataset(open_out(c.out, file), ds);
  std::cerr << "wrote " << ds.utterances.size() << " utterances (" << to_string(c.task.kind) << ", V "
            << ds.vocab_size << ")\n";
  return kExitOk;
}

int cmd_train(const FlagSet& f) {
  RunConfig c = resolve(f, {"model", "train", "io", "run"});
  if (c.data.empty()) throw ConfigError("missing --data");
  if (c.out.empty()) throw ConfigError("missing --out (parameter file)");
  const Dataset ds = read_dataset(c.data);
  ModelParameters init;
  if (!c.init.empty()) {
    init = load_parameters(c.init);
  } else {
    c.model.input_dim = ds.input_dim;
    c.model.vocab_size = ds.vocab_size;
    const bool wants_aux = c.train.weights.use_aux_trans || c.train.weights.use_symm_kl;
    if (wants_aux && !c.layers_given) {
      c.model.enc_layers = {{LayerKind::kTanhRnn, 16}, {LayerKind::kTanhRnn, 16}};
    }
    if (wants_aux && !c.aux_layers_given) c.model.aux_layer_indices = {1};
    init = init_parameters(c.model);
  }
  std::ofstream log_file;
  std::ostream* log = nullptr;
  if (!c.log.empty()) log = &open_out(c.log, log_file);
  if (log) write_train_log_header(*log);
  const TrainResult r = train(std::move(init), ds, c.train, [&](const EpochLog& e) {
    if (log) {
      write_train_log_row(*log, e);
      log->flush();
    }
    std::cerr << "epoch " << e.epoch << " l_total " << e.loss.l_total;
    if (!std::isnan(e.greedy_seq_acc)) std::cerr << " greedy_seq_acc " << e.greedy_seq_acc;
    std::cerr << '\n';
  });
  save_parameters(c.out, r.params);
  return kExitOk;
}

int cmd_decode(const FlagSet& f) {
  RunConfig c = resolve(f, {"search", "io", "run"});
  if (c.model_path.empty() || c.data.empty()) throw ConfigError("decode needs --model and --data");
  if (c.search.strategy == Strategy::kGreedy) {
    for (const char* k : {"search.beam", "search.nbest", "search.u_max", "search.max_sym_exp", "search.nstep",
                          "search.auto_nstep", "search.alpha", "search.lm", "search.lm_weight"}) {
      if (f.given(k)) std::cerr << "warning: greedy decoding ignores " << k << '\n';
    }
    c.lm_path.clear();
    c.search.lm_weight = 0.0;
  }
  const ModelParameters p = load_parameters(c.model_path);
  const Dataset ds = read_dataset(c.data);
  check_dims(p, ds);
  auto lm = load_lm(c);
  if (c.calibrate > 0) {
    std::vector<ModelScorer> cal;
    for (std::size_t i = 0; i < ds.utterances.size() && static_cast<int>(i) < c.calibrate; ++i) {
      cal.emplace_back(p, ds.utterances[i].features);
    }
    const auto est = estimate_auto_nstep(std::span<const ModelScorer>(cal), c.search);
    c.search.auto_nstep = est.auto_nstep;
    std::cerr << "calibrated auto_nstep = " << est.auto_nstep << " (E[n] = " << est.expected << ")\n";
  }
  c.search.validate();
  const auto reports = decode_all(p, ds, c.search, lm.get(), c.jobs);
  std::ofstream file;
  std::ostream& os = open_out(c.out, file);
  os << "utt_id,strategy,params,score,joint_calls,decoder_calls,wall_time,hypothesis\n";
  const std::string params = params_text(c.search);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    os << i << ',' << to_string(c.search.strategy) << ',' << params << ',' << detail::format_double(r.best_score())
       << ',' << r.joint_calls << ',' << r.decoder_calls << ',' << detail::format_double(r.wall_time) << ','
       << hyp_text(r.best_labels()) << (r.incomplete ? " [incomplete]" : "") << '\n';
  }
  if (!c.expansion_out.empty()) {
    std::ofstream ef;
    write_expansion_table(open_out(c.expansion_out, ef), expansion_stats(reports));
  }
  return kExitOk;
}

int cmd_bench(const FlagSet& f) {
  RunConfig c = resolve(f, {"bench", "search", "io", "run"});
  if (c.model_path.empty() || c.data.empty()) throw ConfigError("bench needs --model and --data");
  if (c.jobs > 1) std::cerr << "warning: timing runs are serial; --jobs ignored\n";
  const ModelParameters p = load_parameters(c.model_path);
  const Dataset ds = read_dataset(c.data);
  check_dims(p, ds);
  auto lm = load_lm(c);
  std::vector<Strategy> strategies;
  if (c.bench_strategies == "all") {
    strategies = {Strategy::kAlsd, Strategy::kTsd, Strategy::kNsc};
  } else {
    for (const auto& s : split_list(c.bench_strategies)) strategies.push_back(parse_strategy(s));
  }
  if (!c.sweep.grid.empty() && strategies.size() > 1) throw ConfigError("--grid needs a single --bench-strategy");
  std::ofstream file;
  std::ostream& os = open_out(c.out, file);
  write_sweep_csv_header(os);
  for (Strategy s : strategies) {
    SweepSpec spec = c.sweep;
    spec.strategy = s;
    spec.beam_size = c.search.beam_size;
    spec.base = c.search;
    for (const auto& row : sweep(p, ds, spec, lm.get())) write_sweep_csv_row(os, row);
  }
  if (!c.expansion_out.empty()) {
    BeamConfig def = c.search;
    def.strategy = Strategy::kDefault;
    const auto reports = decode_all(p, ds, def, lm.get(), 1);
    std::ofstream ef;
    write_expansion_table(open_out(c.expansion_out, ef), expansion_stats(reports));
  }
  return kExitOk;
}

int cmd_verify(const FlagSet& f) {
  RunConfig c = resolve(f, {"verify"});
  const std::vector<std::string> all = {"loss-oracle", "grad", "search-oracle"};
  std::vector<std::string> suites;
  if (c.suite == "all") suites = all;
  else if (std::find(all.begin(), all.end(), c.suite) != all.end()) suites = {c.suite};
  else throw ConfigError("unknown suite '" + c.suite + "' (loss-oracle, grad, search-oracle, all)");
  bool ok = true;
  for (const auto& s : suites) {
    if (s == "loss-oracle") {
      const auto r = run_loss_oracle(c.verify_n > 0 ? c.verify_n : 200, c.seed);
      const bool pass = r.max_dev() < 1e-10 && r.max_diagonal_dev < 1e-9 && r.ctc_feasibility_mismatch == 0;
      std::printf("loss-oracle: instances=%d max_transducer_dev=%.3e max_ctc_dev=%.3e max_diagonal_dev=%.3e %s\n",
                  r.instances, r.max_transducer_dev, r.max_ctc_dev, r.max_diagonal_dev, pass ? "PASS" : "FAIL");
      ok = ok && pass;
    } else if (s == "grad") {
      const auto r = run_grad_check(c.verify_n > 0 ? c.verify_n : 20, c.seed);
      const bool pass = r.worst() < 1e-4 && r.aux_stop_exact;
      std::printf("grad: instances=%d entries=%ld max_rel_error=%.3e aux_stop_exact=%s %s\n", r.instances,
                  r.checked_entries, r.worst(), r.aux_stop_exact ? "yes" : "no", pass ? "PASS" : "FAIL");
      for (const auto& [k, v] : r.max_rel_error) std::printf("  %s max_rel_error=%.3e\n", k.c_str(), v);
      ok = ok && pass;
    } else {
      const int n = c.verify_n > 0 ? c.verify_n : 100;
      const auto r = run_search_oracle(n, c.seed);
      const int need = (95 * n + 99) / 100;
      const bool pass = r.min_agree() >= need && r.max_bound_excess <= 1e-9;
      std::printf("search-oracle: instances=%d", r.instances);
      for (const auto& [k, v] : r.agree) std::printf(" %s=%.1f%%", k.c_str(), 100.0 * v / r.instances);
      std::printf(" max_bound_excess=%.3e %s\n", r.max_bound_excess, pass ? "PASS" : "FAIL");
      ok = ok && pass;
    }
  }
  if (!ok) throw VerificationFailure("one or more verification suites failed");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tlab: transducer training, decoding and verification"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  FlagSet gen_f(gen);
  add_common(gen_f);
  gen_f.add("--task", "task.kind", "copy | repeat2");
  gen_f.add("--count", "task.count", "number of utterances");
  gen_f.add("--vocab", "task.vocab", "label vocabulary size V");
  gen_f.add("--src-min", "task.src_min", "minimum source length");
  gen_f.add("--src-max", "task.src_max", "maximum source length");
  gen_f.add("--frames-per-symbol", "task.frames_per_symbol", "frames per source symbol (0: task default)");
  gen_f.add("--noise", "task.noise_std", "Gaussian feature noise");
  gen_f.add_switch("--no-boundary", "task.boundary", "false", "omit the block boundary channel");
  gen_f.add("--out", "io.out", "output path (default stdout)");

  auto* tr = app.add_subcommand("train", "train a transducer");
  FlagSet tr_f(tr);
  add_common(tr_f);
  tr_f.add("--data", "io.data", "dataset file");
  tr_f.add("--out", "io.out", "parameter file to write");
  tr_f.add("--log", "io.log", "per-epoch CSV log");
  tr_f.add("--init", "io.init", "start from this parameter file");
  tr_f.add("--aux", "train.aux", "none | all | list such as ctc=0.5,lm=0.4");
  tr_f.add("--optimizer", "train.optimizer", "adam | momentum");
  tr_f.add("--lr", "train.lr", "learning rate");
  tr_f.add("--momentum", "train.momentum", "momentum coefficient");
  tr_f.add("--batch", "train.batch_size", "batch size");
  tr_f.add("--epochs", "train.epochs", "epochs");
  tr_f.add("--clip", "train.clip_norm", "global gradient clip norm");
  tr_f.add("--eval-interval", "train.eval_interval", "epochs between held-out greedy evaluations");
  tr_f.add("--smoothing", "train.label_smoothing", "LM loss label smoothing");
  tr_f.add("--layers", "model.layers", "encoder layers, e.g. tanh_rnn:16,tanh_rnn:16");
  tr_f.add("--embed", "model.embed_dim", "decoder embedding dim");
  tr_f.add("--hidden", "model.hidden_dim", "decoder hidden dim");
  tr_f.add("--joint", "model.joint_dim", "joint dim");
  tr_f.add("--aux-layers", "model.aux_layers", "1-based encoder layers feeding the aux branch");
  tr_f.add("--jobs", "run.jobs", "parallel utterances per batch");

  auto* de = app.add_subcommand("decode", "decode a dataset");
  FlagSet de_f(de);
  add_common(de_f);
  de_f.add("--model", "io.model", "parameter file");
  de_f.add("--data", "io.data", "dataset file");
  de_f.add("--out", "io.out", "hypotheses CSV (default stdout)");
  de_f.add("--expansion-out", "io.expansion_out", "expansion table CSV");
  de_f.add("--calibrate", "search.calibrate", "estimate auto_nstep on the first K utterances");
  de_f.add("--jobs", "run.jobs", "parallel utterances");
  add_search_flags(de_f);

  auto* be = app.add_subcommand("bench", "CER / RTF sweep");
  FlagSet be_f(be);
  add_common(be_f);
  be_f.add("--model", "io.model", "parameter file");
  be_f.add("--data", "io.data", "dataset file");
  be_f.add("--out", "io.out", "sweep CSV (default stdout)");
  be_f.add("--expansion-out", "io.expansion_out", "expansion table CSV");
  be_f.add("--bench-strategy", "bench.strategy", "all | alsd | tsd | nsc (comma list)");
  be_f.add("--grid", "bench.grid", "parameter values, e.g. 1,2,3");
  be_f.add("--reps", "bench.reps", "timed repetitions per grid point");
  be_f.add("--frame-duration", "bench.frame_duration", "seconds per frame for RTF");
  be_f.add("--jobs", "run.jobs", "ignored: timing is serial");
  add_search_flags(be_f);

  auto* ve = app.add_subcommand("verify", "run oracle suites");
  FlagSet ve_f(ve);
  add_common(ve_f);
  ve_f.add("--suite", "verify.suite", "loss-oracle | grad | search-oracle | all");
  ve_f.add("--n", "verify.n", "instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(gen_f);
    if (*tr) return cmd_train(tr_f);
    if (*de) return cmd_decode(de_f);
    if (*be) return cmd_bench(be_f);
    if (*ve) return cmd_verify(ve_f);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const VerificationFailure& e) {
    std::cerr << "verification failed: " << e.what() << '\n';
    return kExitVerify;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
