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

// Library walk-through: build an untrained policy, decode one random instance
// greedily, with beam search and with permutation TTA, and compare against
// the exact optimum.

#include <cstdio>

#include "tsptta/decoding.hpp"
#include "tsptta/model.hpp"
#include "tsptta/oracle.hpp"
#include "tsptta/tsp.hpp"
#include "tsptta/tta.hpp"

int main() {
  using namespace tsptta;

  ModelConfig cfg;  // 10 cities, d_model 64, 2 encoder layers, 1 decoder layer
  const PolicyParams params = init_params(cfg, 1);
  const PolicyGraph policy(params, cfg, /*track_grad=*/false);

  const TspInstance inst = generate_instance(cfg.n_cities, 42);
  const double opt = solve_held_karp(inst).length;

  const DecodedTour greedy = decode_greedy(inst, policy);
  const DecodedTour beam = decode_beam(inst, policy, {16});
  TtaConfig tta;
  tta.augment_size = 64;
  tta.seed = 7;
  const TtaOutcome aug = tta_solve(inst, policy, tta);

  std::printf("optimum     %.4f\n", opt);
  std::printf("greedy      %.4f\n", greedy.length);
  std::printf("beam:16     %.4f\n", beam.length);
  std::printf("tta:64      %.4f (variant %zu)\n", aug.best.length, aug.variant_of_best);
}
