// Copyright 2026 The tsptta Authors
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

// Command-line front end: dataset generation, training, evaluation, TTA
// sweeps and one-off solves.

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tsptta/decoding.hpp"
#include "tsptta/error.hpp"
#include "tsptta/metrics.hpp"
#include "tsptta/model.hpp"
#include "tsptta/oracle.hpp"
#include "tsptta/parallel.hpp"
#include "tsptta/persistence.hpp"
#include "tsptta/training.hpp"
#include "tsptta/tsp.hpp"
#include "tsptta/tta.hpp"

namespace {

using namespace tsptta;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, sep)) out.push_back(part);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end) {
    throw ParseError("invalid number '" + s + "' in " + what);
  }
  return v;
}

std::size_t parse_count(const std::string& s, const std::string& what) {
  std::size_t v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end) {
    throw ParseError("invalid integer '" + s + "' in " + what);
  }
  return v;
}

// "x1,y1;x2,y2;..."
TspInstance parse_inline_instance(const std::string& text) {
  std::vector<Point> pts;
  for (const std::string& pair : split(text, ';')) {
    const auto xy = split(pair, ',');
    if (xy.size() != 2) throw ParseError("expected x,y but got '" + pair + "'");
    pts.push_back({parse_double(xy[0], "--instance-inline"),
                   parse_double(xy[1], "--instance-inline")});
  }
  if (pts.size() < 2) throw ParseError("inline instance needs at least 2 cities");
  return TspInstance(std::move(pts));
}

struct DecoderSpec {
  enum class Kind { kGreedy, kBeam, kTta } kind = Kind::kGreedy;
  std::size_t size = 1;  // beam width or augmentation size
};

DecoderSpec parse_decoder(const std::string& s) {
  if (s == "greedy") return {};
  const auto colon = s.find(':');
  if (colon != std::string::npos) {
    const std::string head = s.substr(0, colon);
    const std::size_t size = parse_count(s.substr(colon + 1), "--decoder");
    if (size < 1) throw ParseError("--decoder size must be >= 1");
    if (head == "beam") return {DecoderSpec::Kind::kBeam, size};
    if (head == "tta") return {DecoderSpec::Kind::kTta, size};
  }
  throw ParseError("unknown decoder '" + s + "' (greedy, beam:B or tta:M)");
}

struct DecodeOptions {
  DecoderSpec decoder;
  TtaPolicy policy = TtaPolicy::kPermutation;
  std::uint64_t seed = 0;
};

DecodedTour run_decoder(const TspInstance& inst, const PolicyGraph& g,
                        const DecodeOptions& opt, std::size_t index) {
  switch (opt.decoder.kind) {
    case DecoderSpec::Kind::kGreedy: return decode_greedy(inst, g);
    case DecoderSpec::Kind::kBeam: return decode_beam(inst, g, {opt.decoder.size});
    case DecoderSpec::Kind::kTta: {
      TtaConfig cfg;
      cfg.augment_size = opt.decoder.size;
      cfg.policy = opt.policy;
      cfg.seed = instance_tta_seed(opt.seed, index);
      return tta_solve(inst, g, cfg).best;
    }
  }
  return {};
}

SolveResult run_oracle(const TspInstance& inst, const std::string& method, std::size_t start) {
  if (method == "held-karp") return solve_held_karp(inst);
  if (method == "brute") return solve_brute_force(inst);
  if (method == "nn") return solve_nearest_neighbor(inst, start);
  if (method == "2opt") {
    if (start >= inst.size()) throw ContractViolation("--start out of range");
    return improve_2opt(inst, solve_nearest_neighbor(inst, start).tour);
  }
  throw ParseError("unknown method '" + method + "'");
}

std::vector<double> reference_lengths(const std::vector<TspInstance>& insts,
                                      const std::string& oracle, std::size_t jobs) {
  if (oracle != "held-karp" && oracle != "2opt") {
    throw ParseError("unknown oracle '" + oracle + "' (held-karp or 2opt)");
  }
  std::vector<double> out(insts.size());
  parallel_for(insts.size(), jobs,
               [&](std::size_t i) { out[i] = run_oracle(insts[i], oracle, 0).length; });
  return out;
}

std::string format_tour(const Tour& tour, double length) {
  std::string s = "tour=";
  for (std::size_t i = 0; i < tour.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(tour[i]);
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, " len=%.6f", length);
  return s + buf;
}

Checkpoint load_matching(const std::string& ckpt, std::size_t n) {
  Checkpoint ck = load_checkpoint(ckpt);
  if (ck.config.n_cities != n) {
    throw IncompatibilityError("instances have " + std::to_string(n) +
                               " cities but the checkpoint was trained for " +
                               std::to_string(ck.config.n_cities));
  }
  return ck;
}

class OutputFile {
 public:
  explicit OutputFile(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw Error("cannot open " + path + " for writing");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }
  void close() {
    if (file_.is_open()) {
      file_.close();
      if (file_.fail()) throw Error("failed writing output file");
    }
  }

 private:
  std::ofstream file_;
};

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::size_t n = 10, count = 1000;
  std::uint64_t seed = 0;
  std::string out;
};

void gen_data(const GenDataArgs& a) {
  if (a.n < 2) throw InvalidSizeError("--n must be at least 2");
  save_dataset(a.out, {a.n, a.seed, generate_instances(a.n, a.count, a.seed)});
  std::printf("wrote %zu instances of %zu cities to %s\n", a.count, a.n, a.out.c_str());
}

// Flags that override configuration-file keys.
struct ConfigFlag {
  const char* flag;
  const char* key;
  const char* help;
  std::string value;
};

struct TrainArgs {
  std::string data, val, config, out_ckpt, log;
  std::size_t jobs = default_jobs();
  std::vector<ConfigFlag> overrides{
      {"--n", "n_cities", "cities per instance", {}},
      {"--d-model", "d_model", "embedding width", {}},
      {"--heads", "n_heads", "attention heads", {}},
      {"--enc-layers", "n_enc_layers", "encoder layers", {}},
      {"--dec-layers", "n_dec_layers", "decoder layers", {}},
      {"--d-ff", "d_ff", "feed-forward width", {}},
      {"--input-mode", "input_mode", "distance-matrix or coordinates", {}},
      {"--use-pe", "use_pe", "add positional encoding (true/false)", {}},
      {"--epochs", "epochs", "training epochs", {}},
      {"--batch-size", "batch_size", "instances per gradient step", {}},
      {"--instances-per-epoch", "instances_per_epoch", "training instances per epoch", {}},
      {"--val-size", "val_size", "generated validation instances", {}},
      {"--lr", "learning_rate", "Adam learning rate", {}},
      {"--grad-clip", "grad_clip", "global gradient norm limit", {}},
      {"--seed", "seed", "training seed", {}},
  };
};

void train_command(const TrainArgs& a, const std::vector<const CLI::Option*>& given) {
  std::map<std::string, std::string> kv;
  if (!a.config.empty()) kv = parse_key_values(io::read_file(a.config));
  for (std::size_t i = 0; i < a.overrides.size(); ++i)
    if (given[i]->count() > 0) kv[a.overrides[i].key] = a.overrides[i].value;

  ExperimentConfig e;
  for (const auto& [k, v] : kv) {
    if (!apply_model_key(e.model, k, v) && !apply_train_key(e.train, k, v)) {
      throw ParseError("unknown config key '" + k + "'");
    }
  }
  std::optional<Dataset> data, val;
  if (!a.data.empty()) data = load_dataset(a.data);
  if (!a.val.empty()) val = load_dataset(a.val);
  if (!kv.contains("n_cities")) {
    if (data) e.model.n_cities = data->n;
    else if (val) e.model.n_cities = val->n;
  }
  e.model.validate();
  e.train.validate();
  e.train.jobs = a.jobs;
  for (const Dataset* ds : {data ? &*data : nullptr, val ? &*val : nullptr}) {
    if (ds && ds->n != e.model.n_cities) {
      throw IncompatibilityError("dataset has " + std::to_string(ds->n) +
                                 " cities but the model is configured for " +
                                 std::to_string(e.model.n_cities));
    }
  }
  if (data && data->instances.empty()) throw ContractViolation("training dataset is empty");
  const std::vector<TspInstance> val_set =
      val ? val->instances
          : generate_instances(e.model.n_cities, e.train.val_size,
                               mix_seed(e.train.seed, 0xA11D));

  OutputFile log(a.log);
  if (!a.log.empty()) log.stream() << "epoch,train_len,val_len,baseline_len\n";
  const TrainResult r = train(
      e.model, e.train, val_set,
      data ? std::span<const TspInstance>(data->instances) : std::span<const TspInstance>{},
      [&](const TrainLogRow& row) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%zu,%.9f,%.9f,%.9f\n", row.epoch, row.train_len,
                      row.val_len, row.baseline_len);
        if (!a.log.empty()) log.stream() << buf << std::flush;
        std::printf("epoch %zu train_len=%.6f val_len=%.6f baseline_len=%.6f\n", row.epoch,
                    row.train_len, row.val_len, row.baseline_len);
        std::fflush(stdout);
      });
  log.close();
  save_checkpoint(a.out_ckpt, e.model, r.params);
  const double best = r.log.empty() ? r.initial_val_len : r.log.back().baseline_len;
  std::printf("saved %s initial_val_len=%.6f best_val_len=%.6f\n", a.out_ckpt.c_str(),
              r.initial_val_len, best);
}

struct EvalArgs {
  std::string data, ckpt, decoder = "greedy", policy = "permutation", oracle = "held-karp",
                                out;
  std::uint64_t seed = 0;
  std::size_t jobs = default_jobs();
};

void eval_command(const EvalArgs& a) {
  DecodeOptions opt{parse_decoder(a.decoder), parse_tta_policy(a.policy), a.seed};
  const Dataset ds = load_dataset(a.data);
  if (ds.instances.empty()) throw ContractViolation("dataset is empty");
  const Checkpoint ck = load_matching(a.ckpt, ds.n);
  const PolicyGraph g(ck.params, ck.config, false);
  std::vector<double> pred(ds.instances.size());
  parallel_for(ds.instances.size(), a.jobs, [&](std::size_t i) {
    pred[i] = run_decoder(ds.instances[i], g, opt, i).length;
  });
  const EvalReport report = make_report(pred, reference_lengths(ds.instances, a.oracle, a.jobs));
  OutputFile out(a.out);
  write_report_csv(out.stream(), report);
  out.close();
  if (!a.out.empty()) {
    std::printf("k=%zu avg_len=%.6f mean_gap=%s\n", report.k, report.avg_len,
                format_percent(report.mean_gap).c_str());
  }
}

struct SweepArgs {
  std::string data, ckpt, m = "1,2,4,8,16,32,64,128,256,512,1024", policy = "permutation",
                          oracle = "held-karp", out;
  std::uint64_t seed = 0;
  bool no_timing = false;
  std::size_t jobs = default_jobs();
};

void sweep_command(const SweepArgs& a) {
  std::vector<std::size_t> ms;
  for (const std::string& s : split(a.m, ',')) ms.push_back(parse_count(s, "--m"));
  if (ms.empty()) throw ParseError("--m needs at least one value");
  for (std::size_t i = 0; i < ms.size(); ++i) {
    if (ms[i] < 1 || (i > 0 && ms[i] <= ms[i - 1])) {
      throw ParseError("--m values must be positive and strictly ascending");
    }
  }
  TtaConfig base;
  base.policy = parse_tta_policy(a.policy);
  base.seed = a.seed;
  base.jobs = a.jobs;
  const Dataset ds = load_dataset(a.data);
  if (ds.instances.empty()) throw ContractViolation("dataset is empty");
  const Checkpoint ck = load_matching(a.ckpt, ds.n);
  const PolicyGraph g(ck.params, ck.config, false);
  const std::vector<double> opt = reference_lengths(ds.instances, a.oracle, a.jobs);
  const SweepResult r = gap_vs_m_sweep(ds.instances, opt, g, ms, base);

  OutputFile out(a.out);
  std::ostream& os = out.stream();
  os << "# m=" << a.m << "\n" << "M,mean_gap,std_gap,mean_len,wall_time_ms\n";
  for (const SweepRow& row : r.rows) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%zu,%.9f,%.9f,%.9f,%.3f\n", row.m, row.mean_gap,
                  row.std_gap, row.mean_len, a.no_timing ? 0.0 : row.wall_time_ms);
    os << buf;
  }
  out.close();
  if (!a.out.empty()) {
    std::printf("M=%zu mean_gap=%s -> M=%zu mean_gap=%s\n", r.rows.front().m,
                format_percent(r.rows.front().mean_gap).c_str(), r.rows.back().m,
                format_percent(r.rows.back().mean_gap).c_str());
  }
}

struct SolveArgs {
  std::string instance, ckpt, decoder = "greedy", policy = "permutation";
  std::uint64_t seed = 0;
};

void solve_command(const SolveArgs& a) {
  const TspInstance inst = parse_inline_instance(a.instance);
  DecodeOptions opt{parse_decoder(a.decoder), parse_tta_policy(a.policy), a.seed};
  const Checkpoint ck = load_matching(a.ckpt, inst.size());
  const DecodedTour t = run_decoder(inst, PolicyGraph(ck.params, ck.config, false), opt, 0);
  std::printf("%s\n", format_tour(t.tour, t.length).c_str());
}

struct OracleArgs {
  std::string instance, method = "held-karp";
  std::size_t start = 0;
};

void oracle_command(const OracleArgs& a) {
  const TspInstance inst = parse_inline_instance(a.instance);
  const SolveResult r = run_oracle(inst, a.method, a.start);
  std::printf("%s\n", format_tour(r.tour, r.length).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer TSP policy with test-time augmentation", "tsptta"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a dataset of random instances");
  gen_cmd->add_option("--n", gen.n, "cities per instance")->capture_default_str();
  gen_cmd->add_option("--count", gen.count, "number of instances")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output dataset file")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a policy with REINFORCE");
  train_cmd->add_option("--data", tr.data, "training dataset (default: fresh instances)");
  train_cmd->add_option("--val", tr.val, "validation dataset (default: generated)");
  train_cmd->add_option("--config", tr.config, "key=value configuration file");
  train_cmd->add_option("--out-ckpt", tr.out_ckpt, "checkpoint to write")->required();
  train_cmd->add_option("--log", tr.log, "per-epoch CSV log");
  train_cmd->add_option("--jobs", tr.jobs, "worker threads")->capture_default_str();
  std::vector<const CLI::Option*> train_given;
  for (ConfigFlag& f : tr.overrides)
    train_given.push_back(train_cmd->add_option(f.flag, f.value, f.help));

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint against a reference solver");
  eval_cmd->add_option("--data", ev.data, "dataset to evaluate")->required();
  eval_cmd->add_option("--ckpt", ev.ckpt, "checkpoint")->required();
  eval_cmd->add_option("--decoder", ev.decoder, "greedy, beam:B or tta:M")->capture_default_str();
  eval_cmd->add_option("--tta-policy", ev.policy, "permutation, rotation or rotation+permutation")
      ->capture_default_str();
  eval_cmd->add_option("--seed", ev.seed, "augmentation seed")->capture_default_str();
  eval_cmd->add_option("--oracle", ev.oracle, "held-karp or 2opt")->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "report CSV (default: standard output)");
  eval_cmd->add_option("--jobs", ev.jobs, "worker threads")->capture_default_str();

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("tta-sweep", "optimality gap against augmentation size");
  sweep_cmd->add_option("--data", sw.data, "dataset to evaluate")->required();
  sweep_cmd->add_option("--ckpt", sw.ckpt, "checkpoint")->required();
  sweep_cmd->add_option("--m", sw.m, "ascending augmentation sizes")->capture_default_str();
  sweep_cmd->add_option("--tta-policy", sw.policy, "permutation, rotation or rotation+permutation")
      ->capture_default_str();
  sweep_cmd->add_option("--seed", sw.seed, "augmentation seed")->capture_default_str();
  sweep_cmd->add_option("--oracle", sw.oracle, "held-karp or 2opt")->capture_default_str();
  sweep_cmd->add_option("--out", sw.out, "sweep CSV (default: standard output)");
  sweep_cmd->add_flag("--no-timing", sw.no_timing, "write 0 in the wall_time_ms column");
  sweep_cmd->add_option("--jobs", sw.jobs, "worker threads")->capture_default_str();

  SolveArgs so;
  auto* solve_cmd = app.add_subcommand("solve", "decode one inline instance with a checkpoint");
  solve_cmd->add_option("--instance-inline", so.instance, "\"x1,y1;x2,y2;...\"")->required();
  solve_cmd->add_option("--ckpt", so.ckpt, "checkpoint")->required();
  solve_cmd->add_option("--decoder", so.decoder, "greedy, beam:B or tta:M")->capture_default_str();
  solve_cmd->add_option("--tta-policy", so.policy, "permutation, rotation or rotation+permutation")
      ->capture_default_str();
  solve_cmd->add_option("--seed", so.seed, "augmentation seed")->capture_default_str();

  OracleArgs orc;
  auto* oracle_cmd = app.add_subcommand("oracle", "solve one inline instance with a classical method");
  oracle_cmd->add_option("--instance-inline", orc.instance, "\"x1,y1;x2,y2;...\"")->required();
  oracle_cmd->add_option("--method", orc.method, "held-karp, brute, nn or 2opt")
      ->capture_default_str();
  oracle_cmd->add_option("--start", orc.start, "start city for nn and 2opt")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == '\n') c = ' ';
    std::cerr << "error: " << msg << "\n";
    return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
  }

  try {
    if (gen_cmd->parsed()) gen_data(gen);
    else if (train_cmd->parsed()) train_command(tr, train_given);
    else if (eval_cmd->parsed()) eval_command(ev);
    else if (sweep_cmd->parsed()) sweep_command(sw);
    else if (solve_cmd->parsed()) solve_command(so);
    else if (oracle_cmd->parsed()) oracle_command(orc);
  } catch (const IncompatibilityError& e) {
    std::cerr << "incompatible: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
