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

// Test-time augmentation: decode M transformed copies of an instance and keep
// the shortest tour, measured on the original instance.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "tsptta/decoding.hpp"
#include "tsptta/error.hpp"
#include "tsptta/model.hpp"
#include "tsptta/parallel.hpp"
#include "tsptta/random.hpp"
#include "tsptta/tsp.hpp"

namespace tsptta {

enum class TtaPolicy { kPermutation, kRotation, kRotationPermutation };

inline std::string to_string(TtaPolicy p) {
  switch (p) {
    case TtaPolicy::kPermutation: return "permutation";
    case TtaPolicy::kRotation: return "rotation";
    case TtaPolicy::kRotationPermutation: return "rotation+permutation";
  }
  return "?";
}

inline TtaPolicy parse_tta_policy(const std::string& s) {
  if (s == "permutation") return TtaPolicy::kPermutation;
  if (s == "rotation") return TtaPolicy::kRotation;
  if (s == "rotation+permutation") return TtaPolicy::kRotationPermutation;
  throw ParseError("unknown TTA policy '" + s + "'");
}

struct TtaConfig {
  std::size_t augment_size = 1;  // M
  TtaPolicy policy = TtaPolicy::kPermutation;
  std::uint64_t seed = 0;
  std::size_t beam_width = 0;  // 0: greedy per variant
  std::size_t jobs = 1;
};

struct TtaVariant {
  TspInstance instance;
  IndexPermutation sigma;  // original index i appears as sigma(i) in `instance`
};

// Variant 0 is always the untouched instance. Permutations are drawn i.i.d.
// from one stream seeded by cfg.seed, so the first M permutation variants do
// not depend on how many variants are requested in total.
inline std::vector<TtaVariant> make_variants(const TspInstance& inst,
                                             const TtaConfig& cfg) {
  if (cfg.augment_size < 1) throw ContractViolation("augment size must be >= 1");
  const std::size_t n = inst.size();
  const std::size_t m = cfg.augment_size;
  Rng rng(cfg.seed);
  std::vector<TtaVariant> out;
  out.reserve(m);
  out.push_back({inst, IndexPermutation::identity(n)});
  for (std::size_t k = 1; k < m; ++k) {
    TspInstance base = cfg.policy == TtaPolicy::kPermutation
                           ? inst
                           : rotate_instance(inst, k, m);
    if (cfg.policy == TtaPolicy::kRotation) {
      out.push_back({std::move(base), IndexPermutation::identity(n)});
    } else {
      IndexPermutation sigma = IndexPermutation::random(n, rng);
      TspInstance permuted = permute_instance(base, sigma);
      out.push_back({std::move(permuted), std::move(sigma)});
    }
  }
  return out;
}

struct TtaOutcome {
  DecodedTour best;  // in original city indexing
  std::vector<double> all_lengths;
  std::size_t variant_of_best = 0;
};

// Decodes one variant and maps its tour back to original indices.
inline DecodedTour decode_variant(const TspInstance& original, const TtaVariant& v,
                                  const PolicyGraph& g, std::size_t beam_width) {
  DecodedTour d = beam_width > 0 ? decode_beam(v.instance, g, {beam_width})
                                 : decode_greedy(v.instance, g);
  if (!v.sigma.is_identity()) d.tour = v.sigma.inverse().apply(d.tour);
  d.length = tour_length(original, d.tour);
  return d;
}

inline TtaOutcome tta_solve(const TspInstance& inst, const PolicyGraph& g,
                            const TtaConfig& cfg) {
  if (inst.size() != g.config().n_cities) {
    throw IncompatibilityError("instance size does not match model");
  }
  const std::vector<TtaVariant> variants = make_variants(inst, cfg);
  std::vector<DecodedTour> decoded(variants.size());
  parallel_for(variants.size(), cfg.jobs, [&](std::size_t k) {
    decoded[k] = decode_variant(inst, variants[k], g, cfg.beam_width);
  });

  TtaOutcome out;
  out.all_lengths.reserve(decoded.size());
  for (std::size_t k = 0; k < decoded.size(); ++k) {
    out.all_lengths.push_back(decoded[k].length);
    if (k == 0 || decoded[k].length < decoded[out.variant_of_best].length) {
      out.variant_of_best = k;
    }
  }
  out.best = decoded[out.variant_of_best];
  return out;
}

inline TtaOutcome tta_solve(const TspInstance& inst, const PolicyParams& params,
                            const ModelConfig& cfg, const TtaConfig& tta) {
  return tta_solve(inst, PolicyGraph(params, cfg, false), tta);
}

// Seed used for the variants of instance `index` in batch evaluations.
inline std::uint64_t instance_tta_seed(std::uint64_t seed, std::size_t index) {
  return mix_seed(seed, index);
}

struct SweepRow {
  std::size_t m = 0;
  double mean_gap = 0.0;
  double std_gap = 0.0;
  double mean_len = 0.0;
  double wall_time_ms = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  // best_lengths[r][i]: best tour length of instance i at rows[r].m.
  std::vector<std::vector<double>> best_lengths;
};

// Mean and population standard deviation of pred/opt - 1 over instances.
inline std::pair<double, double> gap_stats(std::span<const double> pred,
                                           std::span<const double> opt) {
  const double k = static_cast<double>(pred.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) mean += pred[i] / opt[i] - 1.0;
  mean /= k;
  double var = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double g = pred[i] / opt[i] - 1.0;
    var += (g - mean) * (g - mean);
  }
  return {mean, std::sqrt(var / k)};
}

// Gap against reference lengths for each M in m_values (ascending). With the
// permutation policy the variant set for M is a prefix of the set for any
// larger M, so per-instance best lengths are non-increasing in M; the largest
// M is decoded once and every row is a prefix minimum. Rotation policies
// depend on M through the angle step and are decoded per row.
inline SweepResult gap_vs_m_sweep(std::span<const TspInstance> instances,
                                  std::span<const double> opt_lengths,
                                  const PolicyGraph& g, std::span<const std::size_t> m_values,
                                  const TtaConfig& base) {
  if (m_values.empty()) throw ContractViolation("sweep needs at least one M");
  if (!std::is_sorted(m_values.begin(), m_values.end()) || m_values.front() < 1) {
    throw ContractViolation("sweep M values must be ascending and >= 1");
  }
  if (opt_lengths.size() != instances.size() || instances.empty()) {
    throw ContractViolation("sweep needs one reference length per instance");
  }
  using Clock = std::chrono::steady_clock;
  const std::size_t k = instances.size();
  SweepResult result;
  result.best_lengths.assign(m_values.size(), std::vector<double>(k));
  std::vector<double> time_ms(m_values.size(), 0.0);

  if (base.policy == TtaPolicy::kPermutation) {
    const std::size_t m_max = m_values.back();
    std::vector<std::vector<double>> per_row_time(k, std::vector<double>(m_values.size()));
    parallel_for(k, base.jobs, [&](std::size_t i) {
      TtaConfig cfg = base;
      cfg.augment_size = m_max;
      cfg.seed = instance_tta_seed(base.seed, i);
      const auto variants = make_variants(instances[i], cfg);
      double best = std::numeric_limits<double>::infinity();
      double elapsed = 0.0;
      std::size_t row = 0;
      for (std::size_t v = 0; v < m_max; ++v) {
        const auto t0 = Clock::now();
        best = std::min(best, decode_variant(instances[i], variants[v], g,
                                             base.beam_width).length);
        elapsed += std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
        while (row < m_values.size() && m_values[row] == v + 1) {
          result.best_lengths[row][i] = best;
          per_row_time[i][row] = elapsed;
          ++row;
        }
      }
    });
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t r = 0; r < m_values.size(); ++r) time_ms[r] += per_row_time[i][r];
  } else {
    for (std::size_t r = 0; r < m_values.size(); ++r) {
      const auto t0 = Clock::now();
      parallel_for(k, base.jobs, [&](std::size_t i) {
        TtaConfig cfg = base;
        cfg.augment_size = m_values[r];
        cfg.seed = instance_tta_seed(base.seed, i);
        cfg.jobs = 1;
        result.best_lengths[r][i] = tta_solve(instances[i], g, cfg).best.length;
      });
      time_ms[r] = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    }
  }

  for (std::size_t r = 0; r < m_values.size(); ++r) {
    const auto& lens = result.best_lengths[r];
    const auto [mean, sd] = gap_stats(lens, opt_lengths);
    double mean_len = 0.0;
    for (double l : lens) mean_len += l;
    result.rows.push_back({m_values[r], mean, sd, mean_len / static_cast<double>(k),
                           time_ms[r]});
  }
  return result;
}

}  // namespace tsptta
