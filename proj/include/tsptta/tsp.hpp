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

// Euclidean TSP instances, distance matrices, tours and the two group actions
// used for test-time augmentation: relabelling cities (index permutation) and
// rotating the plane about (0.5, 0.5).

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsptta/error.hpp"
#include "tsptta/random.hpp"

namespace tsptta {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(const Point& a, const Point& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

class TspInstance {
 public:
  TspInstance() = default;
  explicit TspInstance(std::vector<Point> coords) : coords_(std::move(coords)) {
    if (coords_.size() < 2) {
      throw InvalidSizeError("a TSP instance needs at least 2 cities, got " +
                             std::to_string(coords_.size()));
    }
  }

  std::size_t size() const { return coords_.size(); }
  const Point& operator[](std::size_t i) const { return coords_[i]; }
  const std::vector<Point>& coords() const { return coords_; }

  friend bool operator==(const TspInstance&, const TspInstance&) = default;

 private:
  std::vector<Point> coords_;
};

class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  DistanceMatrix(std::size_t n, std::vector<double> d) : n_(n), d_(std::move(d)) {
    if (d_.size() != n_ * n_) throw ContractViolation("distance matrix must be n*n");
  }

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
  // Row-major storage. The matrix is symmetric, so row i is also column i.
  std::span<const double> data() const { return d_; }
  std::span<const double> column(std::size_t i) const {
    return std::span<const double>(d_).subspan(i * n_, n_);
  }

  friend bool operator==(const DistanceMatrix&, const DistanceMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> d_;
};

using Tour = std::vector<std::size_t>;

inline bool is_permutation_of(std::span<const std::size_t> order, std::size_t n) {
  if (order.size() != n) return false;
  std::vector<bool> seen(n, false);
  for (std::size_t v : order) {
    if (v >= n || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

inline void require_tour(std::span<const std::size_t> tour, std::size_t n) {
  if (!is_permutation_of(tour, n)) {
    throw ContractViolation("tour is not a permutation of 0.." +
                            std::to_string(n == 0 ? 0 : n - 1));
  }
}

// A bijection sigma on {0..n-1}; sigma(i) is the new label of city i.
class IndexPermutation {
 public:
  IndexPermutation() = default;
  explicit IndexPermutation(std::vector<std::size_t> map) : map_(std::move(map)) {
    if (!is_permutation_of(map_, map_.size())) {
      throw ContractViolation("index map is not a bijection");
    }
  }

  static IndexPermutation identity(std::size_t n) {
    std::vector<std::size_t> m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = i;
    return IndexPermutation(std::move(m));
  }

  // Uniform over all n! permutations (Fisher-Yates).
  static IndexPermutation random(std::size_t n, Rng& rng) {
    std::vector<std::size_t> m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.below(i));
      std::swap(m[i - 1], m[j]);
    }
    return IndexPermutation(std::move(m));
  }

  std::size_t size() const { return map_.size(); }
  std::size_t operator()(std::size_t i) const { return map_[i]; }
  const std::vector<std::size_t>& map() const { return map_; }

  IndexPermutation inverse() const {
    std::vector<std::size_t> inv(map_.size());
    for (std::size_t i = 0; i < map_.size(); ++i) inv[map_[i]] = i;
    return IndexPermutation(std::move(inv));
  }

  bool is_identity() const {
    for (std::size_t i = 0; i < map_.size(); ++i)
      if (map_[i] != i) return false;
    return true;
  }

  // Applies the map to every city index of a tour.
  Tour apply(std::span<const std::size_t> tour) const {
    Tour out(tour.size());
    for (std::size_t k = 0; k < tour.size(); ++k) out[k] = map_.at(tour[k]);
    return out;
  }

  friend bool operator==(const IndexPermutation&, const IndexPermutation&) = default;

 private:
  std::vector<std::size_t> map_;
};

inline TspInstance generate_instance(std::size_t n, Rng& rng) {
  if (n < 2) throw InvalidSizeError("instance size must be >= 2");
  std::vector<Point> pts(n);
  for (Point& p : pts) {
    p.x = rng.uniform();
    p.y = rng.uniform();
  }
  return TspInstance(std::move(pts));
}

inline TspInstance generate_instance(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return generate_instance(n, rng);
}

inline std::vector<TspInstance> generate_instances(std::size_t n, std::size_t count,
                                                   std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TspInstance> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(generate_instance(n, rng));
  return out;
}

inline DistanceMatrix distance_matrix(const TspInstance& inst) {
  const std::size_t n = inst.size();
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = distance(inst[i], inst[j]);
      d[i * n + j] = v;
      d[j * n + i] = v;
    }
  }
  return DistanceMatrix(n, std::move(d));
}

namespace detail {

// Sums edge lengths starting at city 0 and heading towards its lower-indexed
// neighbour, so every rotation and reversal of a circuit sums identically.
template <typename EdgeLength>
double circuit_length(std::span<const std::size_t> tour, EdgeLength&& edge) {
  const std::size_t n = tour.size();
  std::size_t pos = 0;
  while (tour[pos] != 0) ++pos;
  const bool forward = tour[(pos + 1) % n] < tour[(pos + n - 1) % n];
  double len = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t a = tour[pos];
    pos = forward ? (pos + 1) % n : (pos + n - 1) % n;
    len += edge(a, tour[pos]);
  }
  return len;
}

}  // namespace detail

// Closed-circuit length, including the edge back to the first city.
inline double tour_length(const TspInstance& inst, std::span<const std::size_t> tour) {
  require_tour(tour, inst.size());
  return detail::circuit_length(
      tour, [&](std::size_t a, std::size_t b) { return distance(inst[a], inst[b]); });
}

inline double tour_length(const DistanceMatrix& d, std::span<const std::size_t> tour) {
  require_tour(tour, d.size());
  return detail::circuit_length(tour, [&](std::size_t a, std::size_t b) { return d(a, b); });
}

// Relabels cities: output[sigma(i)] == input[i]. Geometry is unchanged.
inline TspInstance permute_instance(const TspInstance& inst,
                                    const IndexPermutation& sigma) {
  if (sigma.size() != inst.size()) {
    throw ContractViolation("permutation size does not match instance size");
  }
  std::vector<Point> out(inst.size());
  for (std::size_t i = 0; i < inst.size(); ++i) out[sigma(i)] = inst[i];
  return TspInstance(std::move(out));
}

// Simultaneous row and column permutation: D'[sigma(i)][sigma(j)] = D[i][j].
inline DistanceMatrix permute_matrix(const DistanceMatrix& d,
                                     const IndexPermutation& sigma) {
  const std::size_t n = d.size();
  if (sigma.size() != n) {
    throw ContractViolation("permutation size does not match matrix size");
  }
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[sigma(i) * n + sigma(j)] = d(i, j);
  return DistanceMatrix(n, std::move(out));
}

inline constexpr Point kRotationCenter{0.5, 0.5};

// Rotates every city by k * 2pi / m about (0.5, 0.5). Points may leave the
// unit square; they are not clipped.
inline TspInstance rotate_instance(const TspInstance& inst, std::size_t k,
                                   std::size_t m) {
  if (m < 1 || k >= m) {
    throw ContractViolation("rotation variant " + std::to_string(k) +
                            " out of range for augment count " + std::to_string(m));
  }
  if (k == 0) return inst;
  const double step = 2.0 * std::numbers::pi / static_cast<double>(m);
  const double angle = static_cast<double>(k) * step;
  std::vector<Point> out(inst.size());
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const double dx = inst[i].x - kRotationCenter.x;
    const double dy = inst[i].y - kRotationCenter.y;
    const double base = std::atan2(dy, dx);
    const double r = std::hypot(dx, dy);
    out[i] = {kRotationCenter.x + r * std::cos(base + angle),
              kRotationCenter.y + r * std::sin(base + angle)};
  }
  return TspInstance(std::move(out));
}

}  // namespace tsptta
