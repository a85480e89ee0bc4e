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

// REINFORCE training with a greedy rollout baseline taken from the best
// parameters seen so far on a held-out validation set.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsptta/autodiff.hpp"
#include "tsptta/decoding.hpp"
#include "tsptta/error.hpp"
#include "tsptta/model.hpp"
#include "tsptta/parallel.hpp"
#include "tsptta/random.hpp"
#include "tsptta/tsp.hpp"

namespace tsptta {

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m, v;
  std::size_t step = 0;
};

// One bias-corrected Adam update, in place.
inline void adam_step(std::vector<Tensor>& params, std::span<const Tensor> grads,
                      AdamState& state, const AdamConfig& cfg) {
  if (grads.size() != params.size()) {
    throw DimensionError("adam_step: gradient count does not match parameters");
  }
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.shape(), 0.0);
      state.v.emplace_back(p.shape(), 0.0);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape()) {
      throw DimensionError("adam_step: gradient shape mismatch");
    }
    auto p = params[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    const auto g = grads[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      p[j] -= cfg.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.epsilon);
    }
  }
}

// Rescales grads so their joint L2 norm is at most max_norm; returns the
// norm before clipping.
inline double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads)
    for (double v : g.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Tensor& g : grads)
      for (double& v : g.data()) v *= s;
  }
  return norm;
}

enum class BaselineRule { kMeanImprovement };

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::size_t instances_per_epoch = 2000;
  std::size_t val_size = 200;
  AdamConfig adam{};
  double grad_clip = 1.0;
  BaselineRule baseline_rule = BaselineRule::kMeanImprovement;
  std::uint64_t seed = 1;
  std::size_t jobs = 1;

  void validate() const {
    if (batch_size == 0 || instances_per_epoch == 0) {
      throw ContractViolation("batch_size and instances_per_epoch must be positive");
    }
    if (!(adam.learning_rate > 0.0)) throw ContractViolation("learning rate must be > 0");
  }
};

// Frozen copy of the best parameters so far and their validation mean.
struct BaselineParams {
  PolicyParams params;
  double val_mean = 0.0;
};

inline std::vector<double> greedy_lengths(const PolicyParams& params,
                                          const ModelConfig& cfg,
                                          std::span<const TspInstance> instances,
                                          std::size_t jobs = 1) {
  const PolicyGraph g(params, cfg, false);
  std::vector<double> out(instances.size());
  parallel_for(instances.size(), jobs,
               [&](std::size_t i) { out[i] = decode_greedy(instances[i], g).length; });
  return out;
}

inline double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

inline double greedy_mean_length(const PolicyParams& params, const ModelConfig& cfg,
                                 std::span<const TspInstance> instances,
                                 std::size_t jobs = 1) {
  return mean_of(greedy_lengths(params, cfg, instances, jobs));
}

struct BatchResult {
  double loss = 0.0;
  std::vector<Tensor> grads;
  double mean_sampled_length = 0.0;
  double mean_baseline_length = 0.0;
  std::vector<double> advantages;
};

// Surrogate loss mean_i A_i * log p(pi_i) with A_i = L(pi_i) - L(greedy tour
// of the baseline) held constant. Descending it lowers the probability of
// tours longer than the baseline. Instance i samples with
// mix_seed(seed, i), so the result does not depend on `jobs`.
inline BatchResult reinforce_batch(const PolicyParams& params,
                                   const BaselineParams& baseline,
                                   std::span<const TspInstance> batch,
                                   const ModelConfig& cfg, std::uint64_t seed,
                                   std::size_t jobs = 1) {
  if (batch.empty()) throw ContractViolation("reinforce_batch: empty batch");
  for (const TspInstance& inst : batch) {
    if (inst.size() != cfg.n_cities) {
      throw IncompatibilityError("batch instance size does not match model");
    }
  }
  const PolicyGraph baseline_graph(baseline.params, cfg, false);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  struct PerInstance {
    double sampled = 0.0, base = 0.0, loss = 0.0;
    std::vector<Tensor> grads;
  };
  std::vector<PerInstance> rows(batch.size());
  parallel_for(batch.size(), jobs, [&](std::size_t i) {
    PerInstance& row = rows[i];
    row.base = decode_greedy(batch[i], baseline_graph).length;
    const PolicyGraph graph(params, cfg, true);
    Rng rng(mix_seed(seed, i));
    SampledRollout r = sample_rollout(batch[i], graph, rng);
    row.sampled = tour_length(batch[i], r.tour);
    const double advantage = row.sampled - row.base;
    const Var surrogate = mul_scalar(r.log_prob, advantage * inv_b);
    row.loss = surrogate.value().item();
    if (advantage != 0.0) backward(surrogate);
    row.grads = graph.gradients();
  });

  BatchResult out;
  out.grads.reserve(params.size());
  for (const Tensor& p : params.values()) out.grads.emplace_back(p.shape(), 0.0);
  for (PerInstance& row : rows) {
    out.loss += row.loss;
    out.mean_sampled_length += row.sampled * inv_b;
    out.mean_baseline_length += row.base * inv_b;
    out.advantages.push_back(row.sampled - row.base);
    for (std::size_t k = 0; k < row.grads.size(); ++k) {
      auto dst = out.grads[k].data();
      const auto src = row.grads[k].data();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }
  if (!std::isfinite(out.loss)) {
    throw TrainingDivergence("non-finite REINFORCE loss");
  }
  return out;
}

// Replaces the baseline when the current parameters have a strictly lower
// mean greedy length on the validation set.
inline BaselineParams maybe_update_baseline(const PolicyParams& params,
                                            const BaselineParams& baseline,
                                            std::span<const TspInstance> val_set,
                                            const ModelConfig& cfg,
                                            std::size_t jobs = 1) {
  const double current = greedy_mean_length(params, cfg, val_set, jobs);
  if (current < baseline.val_mean) return {params, current};
  return baseline;
}

struct TrainLogRow {
  std::size_t epoch = 0;
  double train_len = 0.0;     // mean sampled tour length over the epoch
  double val_len = 0.0;       // greedy mean on the validation set after the epoch
  double baseline_len = 0.0;  // baseline validation mean after the update
};

struct TrainResult {
  PolicyParams params;        // best on the validation set (the final baseline)
  PolicyParams final_params;  // parameters after the last optimizer step
  double initial_val_len = 0.0;
  std::vector<TrainLogRow> log;
};

using TrainProgress = std::function<void(const TrainLogRow&)>;

// Epoch instances come from `source` (cycled) when given, otherwise they are
// freshly generated from the seed every epoch.
inline TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg,
                         std::span<const TspInstance> val_set,
                         std::span<const TspInstance> source = {},
                         const TrainProgress& progress = {},
                         std::optional<PolicyParams> initial = std::nullopt) {
  model_cfg.validate();
  cfg.validate();
  TrainResult result;
  result.params = initial ? std::move(*initial)
                          : init_params(model_cfg, mix_seed(cfg.seed, 0x1417));
  check_params(result.params, model_cfg);
  result.final_params = result.params;
  if (cfg.epochs == 0 && val_set.empty()) return result;
  if (val_set.empty()) throw ContractViolation("training needs a validation set");

  BaselineParams baseline{result.params,
                          greedy_mean_length(result.params, model_cfg, val_set, cfg.jobs)};
  result.initial_val_len = baseline.val_mean;
  AdamState adam;
  PolicyParams& params = result.final_params;
  std::size_t cursor = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<TspInstance> epoch_set;
    if (!source.empty()) {
      epoch_set.reserve(cfg.instances_per_epoch);
      for (std::size_t i = 0; i < cfg.instances_per_epoch; ++i) {
        epoch_set.push_back(source[cursor]);
        cursor = (cursor + 1) % source.size();
      }
    } else {
      epoch_set = generate_instances(model_cfg.n_cities, cfg.instances_per_epoch,
                                     mix_seed(cfg.seed, epoch));
    }

    double sampled_total = 0.0;
    const std::uint64_t epoch_seed = mix_seed(cfg.seed ^ 0x5EED, epoch);
    for (std::size_t start = 0, b = 0; start < epoch_set.size();
         start += cfg.batch_size, ++b) {
      const std::size_t count = std::min(cfg.batch_size, epoch_set.size() - start);
      const std::span<const TspInstance> batch(epoch_set.data() + start, count);
      BatchResult br = reinforce_batch(params, baseline, batch, model_cfg,
                                       mix_seed(epoch_seed, b), cfg.jobs);
      sampled_total += br.mean_sampled_length * static_cast<double>(count);
      clip_global_norm(br.grads, cfg.grad_clip);
      adam_step(params.values(), br.grads, adam, cfg.adam);
    }

    const double val_len = greedy_mean_length(params, model_cfg, val_set, cfg.jobs);
    if (!std::isfinite(val_len)) {
      throw TrainingDivergence("non-finite validation length at epoch " +
                               std::to_string(epoch));
    }
    if (val_len < baseline.val_mean) baseline = {params, val_len};

    TrainLogRow row{epoch, sampled_total / static_cast<double>(epoch_set.size()),
                    val_len, baseline.val_mean};
    result.log.push_back(row);
    if (progress) progress(row);
  }
  result.params = std::move(baseline.params);
  return result;
}

}  // namespace tsptta
