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

// Acceptance suite: one PASS/FAIL line per criterion. Criterion 5 trains the
// default toy preset through the command-line tool (about ten minutes on one
// core); criteria 6 and 8 reuse that checkpoint.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gradient_check.hpp"
#include "tsptta/decoding.hpp"
#include "tsptta/metrics.hpp"
#include "tsptta/model.hpp"
#include "tsptta/oracle.hpp"
#include "tsptta/persistence.hpp"
#include "tsptta/tsp.hpp"
#include "tsptta/tta.hpp"

namespace {

using namespace tsptta;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void report(int id, const std::string& name, const std::function<Verdict()>& check) {
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  if (!v.pass) ++g_failures;
  std::printf("[%s] %d %s: %s\n", v.pass ? "PASS" : "FAIL", id, name.c_str(), v.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path g_dir;

std::string path(const std::string& name) { return (g_dir / name).string(); }

int run_cli(const std::string& args, const std::string& stdout_file) {
  const std::string cmd = std::string(TSPTTA_CLI_PATH) + " " + args + " >" + stdout_file +
                          " 2>" + path("stderr.txt");
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

Verdict oracle_correctness() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const TspInstance inst = generate_instance(5 + static_cast<std::size_t>(i % 5), rng);
    worst = std::max(worst, std::abs(solve_held_karp(inst).length -
                                     solve_brute_force(inst).length));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 5.0,
          fmt("200 instances n=5..9, max |HK-brute|=%.3g (<=1e-9), %.2fs (<5s)", worst, secs)};
}

Verdict metric_fidelity() {
  struct Row {
    double obj, ref, gap;
  };
  const Row rows[] = {{5.754, 5.690, 1.12}, {5.698, 5.690, 0.14}, {5.745, 5.690, 0.97},
                      {8.005, 7.765, 3.09}, {7.862, 7.765, 1.25}};
  double worst = 0.0;
  for (const Row& r : rows) {
    const std::vector<double> p{r.obj}, o{r.ref};
    worst = std::max(worst, std::abs(optimality_gap(p, o) * 100.0 - r.gap));
  }
  // Printed as 0.10; the two-decimal objectives give 0.0879, which rounds to 0.09.
  const std::vector<double> p{5.695}, o{5.690};
  const double rounded = std::round(optimality_gap(p, o) * 1e4) / 100.0;
  const bool row4 = rounded >= 0.09 - 1e-12 && rounded <= 0.10 + 1e-12;
  return {worst <= 0.01 + 1e-12 && row4,
          fmt("max deviation %.4fpp over five rows (<=0.01pp); 5.695/5.690 -> %.2f%% "
              "(0.09-0.10 accepted)",
              worst, rounded)};
}

Verdict gradient_integrity() {
  const auto t0 = Clock::now();
  ModelConfig cfg;
  cfg.n_cities = 5;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.d_ff = 16;
  const PolicyParams params = init_params(cfg, 31);
  const TspInstance inst = generate_instance(5, 32);
  Rng rng(33);
  const Tour tour = IndexPermutation::random(5, rng).map();
  const PolicyGraph graph(params, cfg, true);
  backward(tour_log_prob(inst, graph, tour));
  const std::vector<Tensor> analytic = graph.gradients();
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto f = [&](const Tensor& value) {
      PolicyParams shifted = params;
      shifted.values()[k] = value;
      NoGradGuard no_grad;
      return tour_log_prob(inst, PolicyGraph(shifted, cfg, false), tour).value().item();
    };
    worst = std::max(worst, testing::max_relative_error(
                                analytic[k], testing::numeric_gradient(f, params.values()[k])));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0,
          fmt("%zu parameters, max relative error %.3g (<1e-4), %.2fs (<60s)",
              params.parameter_count(), worst, secs)};
}

Verdict tta_laws() {
  const ModelConfig cfg;
  const PolicyGraph g(init_params(cfg, 41), cfg, false);
  const std::vector<TspInstance> insts = generate_instances(cfg.n_cities, 100, 42);
  const std::vector<std::size_t> ladder{1, 2, 4, 8, 16, 32, 64, 128, 256};
  std::size_t greedy_mismatch = 0, monotone_breaks = 0;
  double worst_remap = 0.0;
  for (std::size_t i = 0; i < insts.size(); ++i) {
    TtaConfig one;
    one.seed = instance_tta_seed(7, i);
    const TtaOutcome single = tta_solve(insts[i], g, one);
    const DecodedTour greedy = decode_greedy(insts[i], g);
    if (single.best.tour != greedy.tour || single.best.length != greedy.length ||
        single.best.log_prob != greedy.log_prob)
      ++greedy_mismatch;

    TtaConfig big = one;
    big.augment_size = ladder.back();
    const auto variants = make_variants(insts[i], big);
    std::vector<double> lens;
    for (const TtaVariant& v : variants) {
      const Tour on_variant = decode_greedy(v.instance, g).tour;
      const Tour back = v.sigma.inverse().apply(on_variant);
      const double len = tour_length(insts[i], back);
      worst_remap = std::max(worst_remap, std::abs(len - tour_length(v.instance, on_variant)));
      lens.push_back(len);
    }
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t m : ladder) {
      TtaConfig c = one;
      c.augment_size = m;
      const double best = tta_solve(insts[i], g, c).best.length;
      if (best != *std::min_element(lens.begin(), lens.begin() + static_cast<std::ptrdiff_t>(m)) ||
          best > previous)
        ++monotone_breaks;
      previous = best;
    }
  }
  return {greedy_mismatch == 0 && monotone_breaks == 0 && worst_remap <= 1e-12,
          fmt("100 instances, untrained N=10 model: M=1 vs greedy mismatches %zu, ladder "
              "1..256 monotonicity breaks %zu, max remap error %.3g (<=1e-12)",
              greedy_mismatch, monotone_breaks, worst_remap)};
}

// Shared by criteria 5, 6 and 8.
struct TrainedModel {
  Checkpoint ck;
  std::vector<TspInstance> test;
  std::vector<double> opt;
  std::vector<double> greedy;
  std::vector<double> tta64;
};
std::optional<TrainedModel> g_trained;

Verdict trend_reproduction() {
  const auto t0 = Clock::now();
  const std::string ckpt = path("toy.ckpt");
  if (run_cli("train --jobs 1 --out-ckpt " + ckpt + " --log " + path("toy_log.csv"),
              path("toy_train.txt")) != 0) {
    return {false, "training command failed: " + slurp(path("stderr.txt"))};
  }
  const double train_secs = seconds_since(t0);
  TrainedModel t;
  t.ck = load_checkpoint(ckpt);
  t.test = generate_instances(t.ck.config.n_cities, 200, 0x7E57);
  const PolicyGraph g(t.ck.params, t.ck.config, false);
  for (const TspInstance& inst : t.test) t.opt.push_back(solve_held_karp(inst).length);

  const std::vector<std::size_t> ladder{1, 2, 4, 8, 16, 32, 64};
  TtaConfig base;
  base.seed = 11;
  const SweepResult sweep = gap_vs_m_sweep(t.test, t.opt, g, ladder, base);
  t.greedy = sweep.best_lengths.front();
  t.tta64 = sweep.best_lengths.back();

  const double greedy_gap = optimality_gap(t.greedy, t.opt);
  const double tta_gap = optimality_gap(t.tta64, t.opt);
  std::size_t strict = 0;
  for (std::size_t i = 0; i < t.test.size(); ++i)
    if (t.tta64[i] < t.greedy[i]) ++strict;
  const double strict_frac = static_cast<double>(strict) / static_cast<double>(t.test.size());
  bool monotone = true;
  for (std::size_t r = 1; r < sweep.rows.size(); ++r)
    monotone = monotone && sweep.rows[r].mean_gap <= sweep.rows[r - 1].mean_gap;
  g_trained = std::move(t);

  const bool pass = greedy_gap < 0.10 && tta_gap < greedy_gap && strict_frac >= 0.30 && monotone;
  return {pass, fmt("trained %.0fs; greedy gap %s (<10%%), TTA64 gap %s (< greedy), strict "
                    "improvement on %.1f%% of 200 (>=30%%), sweep %s; std %.4f -> %.4f",
                    train_secs, format_percent(greedy_gap).c_str(),
                    format_percent(tta_gap).c_str(), strict_frac * 100.0,
                    monotone ? "non-increasing" : "NOT monotone", sweep.rows.front().std_gap,
                    sweep.rows.back().std_gap)};
}

Verdict ablation_direction() {
  if (!g_trained) return {false, "no trained model (criterion 5 did not produce one)"};
  const TrainedModel& t = *g_trained;
  const PolicyGraph g(t.ck.params, t.ck.config, false);
  std::vector<double> beam;
  for (const TspInstance& inst : t.test) beam.push_back(decode_beam(inst, g, {64}).length);
  const double greedy_gap = optimality_gap(t.greedy, t.opt);
  const double tta_gap = optimality_gap(t.tta64, t.opt);
  const double beam_gap = optimality_gap(beam, t.opt);
  const bool pass =
      tta_gap <= beam_gap + 0.02 && tta_gap <= greedy_gap && beam_gap <= greedy_gap;
  return {pass, fmt("greedy %s, beam64 %s, TTA64 %s (TTA <= beam + 2pp, both <= greedy)",
                    format_percent(greedy_gap).c_str(), format_percent(beam_gap).c_str(),
                    format_percent(tta_gap).c_str())};
}

Verdict isometry_structure() {
  Rng rng(51);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const TspInstance inst = generate_instance(10, rng);
    const DistanceMatrix d = distance_matrix(inst);
    for (std::size_t m : {2u, 7u, 64u}) {
      for (std::size_t k = 0; k < m; k += 1 + m / 8) {
        const DistanceMatrix r = distance_matrix(rotate_instance(inst, k, m));
        for (std::size_t a = 0; a < 10; ++a)
          for (std::size_t b = 0; b < 10; ++b) worst = std::max(worst, std::abs(d(a, b) - r(a, b)));
      }
    }
  }
  const ModelConfig cfg;
  const PolicyGraph g(init_params(cfg, 52), cfg, false);
  std::size_t unequal = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    TtaConfig c;
    c.augment_size = 16;
    c.policy = TtaPolicy::kRotation;
    const TtaOutcome out = tta_solve(generate_instance(10, s), g, c);
    for (double len : out.all_lengths)
      if (len != out.all_lengths[0]) ++unequal;
  }
  int differing = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const TspInstance inst = generate_instance(10, rng);
    IndexPermutation s = IndexPermutation::random(10, rng);
    while (s.is_identity()) s = IndexPermutation::random(10, rng);
    const Tour base = decode_greedy(inst, g).tour;
    if (s.inverse().apply(decode_greedy(permute_instance(inst, s), g).tour) != base) ++differing;
  }
  return {worst <= 1e-12 && unequal == 0 && differing >= 1,
          fmt("rotation distance drift %.3g (<=1e-12), unequal rotation-TTA lengths %zu of "
              "800, permutation changed the greedy tour in %d of 20 trials (>=1)",
              worst, unequal, differing)};
}

Verdict round_trips() {
  const Dataset ds{10, 61, generate_instances(10, 500, 61)};
  save_dataset(path("rt.bin"), ds);
  const Dataset back = load_dataset(path("rt.bin"));
  bool identical = back.n == ds.n && back.seed == ds.seed && back.instances.size() == 500;
  for (std::size_t i = 0; identical && i < 500; ++i) identical = back.instances[i] == ds.instances[i];
  save_dataset(path("rt2.bin"), back);
  identical = identical && slurp(path("rt.bin")) == slurp(path("rt2.bin"));

  // Trained parameters when available, otherwise a fresh model.
  const ModelConfig cfg = g_trained ? g_trained->ck.config : ModelConfig{};
  const PolicyParams params = g_trained ? g_trained->ck.params : init_params(cfg, 62);
  save_checkpoint(path("rt.ckpt"), cfg, params);
  const Checkpoint ck = load_checkpoint(path("rt.ckpt"), cfg);
  int mismatches = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const TspInstance inst = generate_instance(cfg.n_cities, 6300 + s);
    if (decode_greedy(inst, params, cfg).tour != decode_greedy(inst, ck.params, ck.config).tour)
      ++mismatches;
  }
  return {identical && mismatches == 0,
          fmt("dataset round-trip %s; checkpoint greedy mismatches %d of 50 (%s model)",
              identical ? "bit-identical" : "DIFFERS", mismatches,
              g_trained ? "trained" : "untrained")};
}

Verdict determinism() {
  const std::string inst = "\"0.1,0.2;0.8,0.3;0.5,0.9;0.2,0.7;0.9,0.9;0.4,0.4\"";
  const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
      {"gen-data --n 8 --count 40 --seed 5 --out @OUT@data.bin", {"data.bin"}},
      {"train --data @DATA@ --epochs 2 --instances-per-epoch 64 --val-size 16 --seed 3 "
       "--d-model 16 --heads 2 --d-ff 32 --enc-layers 1 --jobs 1 --out-ckpt @OUT@m.ckpt "
       "--log @OUT@log.csv",
       {"m.ckpt", "log.csv"}},
      {"eval --data @DATA@ --ckpt @CKPT@ --decoder tta:16 --seed 9 --jobs 1 --out @OUT@eval.csv",
       {"eval.csv"}},
      {"eval --data @DATA@ --ckpt @CKPT@ --decoder beam:8 --oracle 2opt --jobs 1 --out "
       "@OUT@beam.csv",
       {"beam.csv"}},
      {"tta-sweep --data @DATA@ --ckpt @CKPT@ --m 1,2,4,8,16 --seed 2 --no-timing --jobs 1 "
       "--out @OUT@sweep.csv",
       {"sweep.csv"}},
      {"oracle --method 2opt --instance-inline " + inst, {}},
  };
  std::string diffs;
  std::size_t compared = 0;
  for (int round = 0; round < 2; ++round) {
    for (const char* copy : {"a_", "b_"}) {
      const std::string prefix = path(std::to_string(round) + copy);
      for (std::size_t c = 0; c < commands.size(); ++c) {
        std::string args = commands[c].first;
        auto replace = [&](const std::string& from, const std::string& to) {
          for (auto p = args.find(from); p != std::string::npos; p = args.find(from))
            args.replace(p, from.size(), to);
        };
        replace("@OUT@", prefix);
        replace("@DATA@", prefix + "data.bin");
        replace("@CKPT@", prefix + "m.ckpt");
        if (run_cli(args, prefix + "stdout" + std::to_string(c) + ".txt") != 0)
          return {false, "command failed: " + args + ": " + slurp(path("stderr.txt"))};
      }
    }
    for (std::size_t c = 0; c < commands.size(); ++c) {
      std::vector<std::string> files = commands[c].second;
      files.push_back("stdout" + std::to_string(c) + ".txt");
      for (const std::string& f : files) {
        std::string a = slurp(path(std::to_string(round) + "a_" + f));
        std::string b = slurp(path(std::to_string(round) + "b_" + f));
        // Output paths echoed on stdout differ by construction.
        for (std::string* s : {&a, &b}) {
          for (const char* tag : {"a_", "b_"})
            for (auto p = s->find(tag); p != std::string::npos; p = s->find(tag)) s->erase(p, 2);
        }
        ++compared;
        if (a != b || (a.empty() && f.find("stdout") != 0)) diffs += " " + f;
      }
    }
  }
  return {diffs.empty(), fmt("%zu output files compared across 2 verification rounds of paired "
                             "--jobs 1 runs; differing:%s",
                             compared, diffs.empty() ? " none" : diffs.c_str())};
}

}  // namespace

int main() {
  g_dir = fs::temp_directory_path() / "tsptta_acceptance";
  fs::remove_all(g_dir);
  fs::create_directories(g_dir);

  report(1, "oracle correctness", oracle_correctness);
  report(2, "metric fidelity", metric_fidelity);
  report(3, "gradient integrity", gradient_integrity);
  report(4, "exact TTA laws", tta_laws);
  report(5, "trend reproduction", trend_reproduction);
  report(6, "ablation direction", ablation_direction);
  report(7, "isometry and permutation structure", isometry_structure);
  report(8, "round-trips", round_trips);
  report(9, "determinism", determinism);

  std::printf("%d of 9 criteria passed\n", 9 - g_failures);
  fs::remove_all(g_dir);
  return g_failures == 0 ? 0 : 1;
}
