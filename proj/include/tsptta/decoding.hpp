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

// Greedy, sampled and beam-search decoding of complete tours.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "tsptta/autodiff.hpp"
#include "tsptta/error.hpp"
#include "tsptta/model.hpp"
#include "tsptta/random.hpp"
#include "tsptta/tsp.hpp"

namespace tsptta {

struct DecodedTour {
  Tour tour;
  double log_prob = 0.0;
  double length = 0.0;
};

struct BeamConfig {
  std::size_t width = 1;
};

// Highest-probability unvisited city; the lowest index wins ties.
inline std::size_t argmax_city(const Tensor& probs, const std::vector<bool>& visited) {
  std::size_t best = visited.size();
  for (std::size_t j = 0; j < visited.size(); ++j) {
    if (visited[j]) continue;
    if (best == visited.size() || probs[j] > probs[best]) best = j;
  }
  return best;
}

// Inverse-CDF draw from the masked distribution.
inline std::size_t sample_city(const Tensor& probs, const std::vector<bool>& visited,
                               Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t last = visited.size();
  for (std::size_t j = 0; j < visited.size(); ++j) {
    if (visited[j] || probs[j] <= 0.0) continue;
    cum += probs[j];
    last = j;
    if (u < cum) return j;
  }
  return last;  // rounding left u beyond the accumulated mass
}

inline DecodedTour decode_greedy(const TspInstance& inst, const PolicyGraph& g) {
  NoGradGuard no_grad;
  DecoderState state(g, encode_instance(inst, g));
  double log_prob = 0.0;
  while (!state.done()) {
    const Tensor& p = state.probabilities().value();
    const std::size_t c = argmax_city(p, state.visited());
    log_prob += std::log(p[c]);
    state.select(c);
  }
  const double len = tour_length(inst, state.partial());
  return {state.partial(), log_prob, len};
}

inline DecodedTour decode_greedy(const TspInstance& inst, const PolicyParams& params,
                                 const ModelConfig& cfg) {
  return decode_greedy(inst, PolicyGraph(params, cfg, false));
}

// A sampled tour together with its differentiable log-probability.
struct SampledRollout {
  Tour tour;
  Var log_prob;
};

// Samples with graph recording left to the caller's grad mode, so the
// returned log-probability can be back-propagated.
inline SampledRollout sample_rollout(const TspInstance& inst, const PolicyGraph& g,
                                     Rng& rng) {
  DecoderState state(g, encode_instance(inst, g));
  Var log_prob;
  while (!state.done()) {
    const Var p = state.probabilities();
    const std::size_t c = sample_city(p.value(), state.visited(), rng);
    const Var lp = log(element(p, c));
    log_prob = log_prob ? add(log_prob, lp) : lp;
    state.select(c);
  }
  return {state.partial(), log_prob};
}

inline DecodedTour decode_sample(const TspInstance& inst, const PolicyGraph& g,
                                 std::uint64_t seed) {
  NoGradGuard no_grad;
  Rng rng(seed);
  SampledRollout r = sample_rollout(inst, g, rng);
  const double len = tour_length(inst, r.tour);
  return {std::move(r.tour), r.log_prob.value().item(), len};
}

inline DecodedTour decode_sample(const TspInstance& inst, const PolicyParams& params,
                                 const ModelConfig& cfg, std::uint64_t seed) {
  return decode_sample(inst, PolicyGraph(params, cfg, false), seed);
}

// Log-probability the policy assigns to a complete tour, as a graph node.
inline Var tour_log_prob(const TspInstance& inst, const PolicyGraph& g,
                         const Tour& tour) {
  require_tour(tour, inst.size());
  DecoderState state(g, encode_instance(inst, g));
  Var log_prob;
  for (std::size_t c : tour) {
    const Var lp = log(element(state.probabilities(), c));
    log_prob = log_prob ? add(log_prob, lp) : lp;
    state.select(c);
  }
  return log_prob;
}

// Keeps the `width` highest summed-log-prob partial tours per step (ties:
// lexicographically smaller prefix first) and returns the shortest of the
// completed candidates.
inline DecodedTour decode_beam(const TspInstance& inst, const PolicyGraph& g,
                               BeamConfig beam) {
  if (beam.width < 1) throw ContractViolation("beam width must be >= 1");
  NoGradGuard no_grad;
  struct Beam {
    DecoderState state;
    double score;
  };
  struct Expansion {
    std::size_t parent;
    std::size_t city;
    double score;
  };

  std::vector<Beam> beams;
  beams.push_back({DecoderState(g, encode_instance(inst, g)), 0.0});
  const std::size_t n = inst.size();
  for (std::size_t step = 0; step < n; ++step) {
    std::vector<Expansion> cand;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      const Tensor& p = beams[b].state.probabilities().value();
      const auto& visited = beams[b].state.visited();
      for (std::size_t j = 0; j < n; ++j) {
        if (visited[j]) continue;
        cand.push_back({b, j, beams[b].score + std::log(p[j])});
      }
    }
    auto better = [&](const Expansion& a, const Expansion& b) {
      if (a.score != b.score) return a.score > b.score;
      const Tour& pa = beams[a.parent].state.partial();
      const Tour& pb = beams[b.parent].state.partial();
      if (pa != pb) return pa < pb;
      return a.city < b.city;
    };
    const std::size_t keep = std::min(beam.width, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep),
                      cand.end(), better);
    std::vector<Beam> next;
    next.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
      Beam child = beams[cand[i].parent];
      child.state.select(cand[i].city);
      child.score = cand[i].score;
      next.push_back(std::move(child));
    }
    beams = std::move(next);
  }

  DecodedTour best;
  best.length = std::numeric_limits<double>::infinity();
  for (const Beam& b : beams) {
    const double len = tour_length(inst, b.state.partial());
    if (len < best.length) best = {b.state.partial(), b.score, len};
  }
  return best;
}

inline DecodedTour decode_beam(const TspInstance& inst, const PolicyParams& params,
                               const ModelConfig& cfg, BeamConfig beam) {
  return decode_beam(inst, PolicyGraph(params, cfg, false), beam);
}

}  // namespace tsptta
