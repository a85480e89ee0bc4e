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

// Reference solvers: exact (brute force, Held-Karp) and classical heuristics
// (nearest neighbour, 2-opt). Ties always go to the lowest index.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "tsptta/error.hpp"
#include "tsptta/tsp.hpp"

namespace tsptta {

enum class SolveMethod { kBruteForce, kHeldKarp, kNearestNeighbor, kTwoOpt };

inline std::string_view method_name(SolveMethod m) {
  switch (m) {
    case SolveMethod::kBruteForce: return "brute";
    case SolveMethod::kHeldKarp: return "held-karp";
    case SolveMethod::kNearestNeighbor: return "nn";
    case SolveMethod::kTwoOpt: return "2opt";
  }
  return "?";
}

struct SolveResult {
  Tour tour;
  double length = 0.0;
  SolveMethod method = SolveMethod::kHeldKarp;
};

inline constexpr std::size_t kBruteForceMaxCities = 10;
inline constexpr std::size_t kHeldKarpMaxCities = 16;
inline constexpr std::size_t kTwoOptMaxPasses = 10000;

// Enumerates every circuit with city 0 fixed first, skipping the mirrored
// half (second city greater than the last city).
inline SolveResult solve_brute_force(const TspInstance& inst) {
  const std::size_t n = inst.size();
  if (n > kBruteForceMaxCities) {
    throw SizeLimitError("brute force supports at most " +
                         std::to_string(kBruteForceMaxCities) + " cities, got " +
                         std::to_string(n));
  }
  const DistanceMatrix d = distance_matrix(inst);
  Tour rest(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) rest[i] = i + 1;

  Tour best;
  double best_len = std::numeric_limits<double>::infinity();
  Tour candidate(n);
  candidate[0] = 0;
  do {
    if (rest.size() >= 2 && rest.front() > rest.back()) continue;
    std::copy(rest.begin(), rest.end(), candidate.begin() + 1);
    const double len = tour_length(d, candidate);
    if (len < best_len) {
      best_len = len;
      best = candidate;
    }
  } while (std::next_permutation(rest.begin(), rest.end()));
  return {best, tour_length(inst, best), SolveMethod::kBruteForce};
}

// Bellman-Held-Karp DP over subsets of cities {1..n-1}, anchored at city 0.
// cost[S][j] = shortest path from 0 through exactly S ending at j (j in S).
inline SolveResult solve_held_karp(const TspInstance& inst) {
  const std::size_t n = inst.size();
  if (n > kHeldKarpMaxCities) {
    throw SizeLimitError("Held-Karp supports at most " +
                         std::to_string(kHeldKarpMaxCities) + " cities, got " +
                         std::to_string(n));
  }
  const DistanceMatrix d = distance_matrix(inst);
  if (n == 2) return {{0, 1}, tour_length(inst, Tour{0, 1}), SolveMethod::kHeldKarp};

  const std::size_t m = n - 1;  // city c in {1..n-1} is bit c-1
  const std::size_t full = (std::size_t{1} << m) - 1;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> cost((full + 1) * m, kInf);
  std::vector<std::uint8_t> parent((full + 1) * m, 0);

  for (std::size_t j = 0; j < m; ++j) cost[(std::size_t{1} << j) * m + j] = d(0, j + 1);

  for (std::size_t s = 1; s <= full; ++s) {
    for (std::size_t j = 0; j < m; ++j) {
      if (!(s & (std::size_t{1} << j))) continue;
      const std::size_t prev = s & ~(std::size_t{1} << j);
      if (prev == 0) continue;
      double best = kInf;
      std::uint8_t arg = 0;
      for (std::size_t i = 0; i < m; ++i) {
        if (!(prev & (std::size_t{1} << i))) continue;
        const double c = cost[prev * m + i] + d(i + 1, j + 1);
        if (c < best) {
          best = c;
          arg = static_cast<std::uint8_t>(i);
        }
      }
      cost[s * m + j] = best;
      parent[s * m + j] = arg;
    }
  }

  double best = kInf;
  std::size_t last = 0;
  for (std::size_t j = 0; j < m; ++j) {
    const double c = cost[full * m + j] + d(j + 1, 0);
    if (c < best) {
      best = c;
      last = j;
    }
  }

  Tour tour(n);
  std::size_t s = full;
  std::size_t j = last;
  for (std::size_t pos = n - 1; pos >= 1; --pos) {
    tour[pos] = j + 1;
    const std::size_t pj = parent[s * m + j];
    s &= ~(std::size_t{1} << j);
    j = pj;
  }
  tour[0] = 0;
  return {tour, tour_length(inst, tour), SolveMethod::kHeldKarp};
}

inline SolveResult solve_nearest_neighbor(const TspInstance& inst, std::size_t start = 0) {
  const std::size_t n = inst.size();
  if (start >= n) throw ContractViolation("nearest neighbour start out of range");
  const DistanceMatrix d = distance_matrix(inst);
  std::vector<bool> visited(n, false);
  Tour tour{start};
  visited[start] = true;
  std::size_t cur = start;
  for (std::size_t step = 1; step < n; ++step) {
    std::size_t next = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (visited[j]) continue;
      if (next == n || d(cur, j) < d(cur, next)) next = j;
    }
    visited[next] = true;
    tour.push_back(next);
    cur = next;
  }
  return {tour, tour_length(inst, tour), SolveMethod::kNearestNeighbor};
}

// First-improvement 2-opt: reverse tour[i+1..j] whenever replacing edges
// (a,b),(c,e) by (a,c),(b,e) shortens the circuit; restart the scan after
// every improvement.
inline SolveResult improve_2opt(const TspInstance& inst, Tour tour) {
  const std::size_t n = inst.size();
  require_tour(tour, n);
  const DistanceMatrix d = distance_matrix(inst);
  constexpr double kMinGain = 1e-12;

  std::size_t passes = 0;
  bool improved = n >= 4;
  while (improved) {
    if (++passes > kTwoOptMaxPasses) {
      throw Error("2-opt exceeded " + std::to_string(kTwoOptMaxPasses) + " passes");
    }
    improved = false;
    for (std::size_t i = 0; i + 2 < n && !improved; ++i) {
      for (std::size_t j = i + 2; j < n; ++j) {
        if (i == 0 && j == n - 1) continue;  // adjacent edges
        const std::size_t a = tour[i], b = tour[i + 1];
        const std::size_t c = tour[j], e = tour[(j + 1) % n];
        const double delta = d(a, c) + d(b, e) - d(a, b) - d(c, e);
        if (delta < -kMinGain) {
          std::reverse(tour.begin() + static_cast<std::ptrdiff_t>(i + 1),
                       tour.begin() + static_cast<std::ptrdiff_t>(j + 1));
          improved = true;
          break;
        }
      }
    }
  }
  const double len = tour_length(inst, tour);
  return {std::move(tour), len, SolveMethod::kTwoOpt};
}

// Reference used where an exact optimum is too expensive: 2-opt started from
// the nearest-neighbour tour out of city 0.
inline SolveResult solve_2opt(const TspInstance& inst) {
  return improve_2opt(inst, solve_nearest_neighbor(inst, 0).tour);
}

}  // namespace tsptta
