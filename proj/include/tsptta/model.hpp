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

// Transformer policy over the column sequence of a distance matrix.
//
// Encoder input is the start token followed by one row per city (its
// distance-matrix column, or its raw coordinates in the ablation mode),
// linearly embedded and offset by a sinusoidal positional encoding of the
// row index. A post-norm encoder stack produces (N+1) x d_model memory.
//
// The decoder is auto-regressive: its input sequence is the start-token
// memory row followed by the memory rows of the cities chosen so far, each
// offset by the encoding of its step index. Every layer applies causal
// self-attention, cross-attention to the memory and a feed-forward block.
// The last row is projected to N logits, visited cities are masked and a
// softmax gives the next-city distribution. Causality lets DecoderState
// cache keys and values, so each step only processes one new row.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tsptta/autodiff.hpp"
#include "tsptta/error.hpp"
#include "tsptta/random.hpp"
#include "tsptta/tsp.hpp"

namespace tsptta {

enum class InputMode { kDistanceMatrix, kCoordinates };

inline std::string to_string(InputMode m) {
  return m == InputMode::kDistanceMatrix ? "distance-matrix" : "coordinates";
}

inline InputMode parse_input_mode(const std::string& s) {
  if (s == "distance-matrix") return InputMode::kDistanceMatrix;
  if (s == "coordinates") return InputMode::kCoordinates;
  throw ParseError("unknown input mode '" + s + "'");
}

struct ModelConfig {
  std::size_t n_cities = 10;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_enc_layers = 2;
  std::size_t n_dec_layers = 1;
  std::size_t d_ff = 256;
  InputMode input_mode = InputMode::kDistanceMatrix;
  bool use_pe = true;

  std::size_t input_width() const {
    return input_mode == InputMode::kDistanceMatrix ? n_cities : 2;
  }

  void validate() const {
    if (n_cities < 2) throw ContractViolation("model needs n_cities >= 2");
    if (d_model < 2 || n_heads == 0 || d_model % n_heads != 0) {
      throw ContractViolation("d_model must be >= 2 and divisible by n_heads");
    }
    if (d_ff == 0) throw ContractViolation("d_ff must be positive");
  }

  // Six encoder layers, two decoder layers, width 512.
  static ModelConfig full_scale(std::size_t n) {
    return {n, 512, 8, 6, 2, 2048, InputMode::kDistanceMatrix, true};
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Named parameter tensors in a fixed schema order.
class PolicyParams {
 public:
  void add(std::string name, Tensor value) {
    if (index_.contains(name)) throw ContractViolation("duplicate parameter " + name);
    index_.emplace(name, values_.size());
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
  }

  std::size_t size() const { return values_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Tensor>& values() const { return values_; }
  std::vector<Tensor>& values() { return values_; }

  const Tensor& at(const std::string& name) const { return values_.at(lookup(name)); }
  Tensor& at(const std::string& name) { return values_.at(lookup(name)); }
  bool contains(const std::string& name) const { return index_.contains(name); }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const Tensor& t : values_) total += t.size();
    return total;
  }

  friend bool operator==(const PolicyParams& a, const PolicyParams& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractViolation("unknown parameter " + name);
    return it->second;
  }

  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

// (name, shape) for every parameter the configuration requires, in order.
inline std::vector<std::pair<std::string, Shape>> parameter_schema(
    const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d_model, f = cfg.d_ff;
  std::vector<std::pair<std::string, Shape>> s;
  auto linear = [&](const std::string& p, std::size_t in, std::size_t out) {
    s.push_back({p + ".weight", {in, out}});
    s.push_back({p + ".bias", {out}});
  };
  auto attention = [&](const std::string& p) {
    for (const char* w : {"q", "k", "v", "o"}) linear(p + "." + w, d, d);
  };
  auto norm = [&](const std::string& p) {
    s.push_back({p + ".gain", {d}});
    s.push_back({p + ".bias", {d}});
  };
  auto ff = [&](const std::string& p) {
    linear(p + ".in", d, f);
    linear(p + ".out", f, d);
  };

  s.push_back({"embed.weight", {cfg.input_width(), d}});
  s.push_back({"start", {1, cfg.input_width()}});
  for (std::size_t l = 0; l < cfg.n_enc_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    attention(p + ".attn");
    norm(p + ".norm1");
    ff(p + ".ff");
    norm(p + ".norm2");
  }
  for (std::size_t l = 0; l < cfg.n_dec_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    attention(p + ".self");
    norm(p + ".norm1");
    attention(p + ".cross");
    norm(p + ".norm2");
    ff(p + ".ff");
    norm(p + ".norm3");
  }
  linear("out", d, cfg.n_cities);
  return s;
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Linear layers ~ U(+-1/sqrt(fan_in)), norm gains 1 and biases 0, start
// token ~ N(0, 0.02). Deterministic per seed.
inline PolicyParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  PolicyParams params;
  std::size_t fan_in = 1;
  for (auto& [name, shape] : parameter_schema(cfg)) {
    Tensor t(shape, 0.0);
    if (name == "start") {
      for (double& v : t.data()) v = rng.normal(0.0, 0.02);
    } else if (name.find(".norm") != std::string::npos) {
      if (ends_with(name, ".gain")) t = Tensor(shape, 1.0);
    } else {
      if (ends_with(name, ".weight")) fan_in = shape[0];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (double& v : t.data()) v = rng.uniform(-bound, bound);
    }
    params.add(name, std::move(t));
  }
  return params;
}

// Throws IncompatibilityError unless params follow the schema of cfg.
inline void check_params(const PolicyParams& params, const ModelConfig& cfg) {
  const auto schema = parameter_schema(cfg);
  if (params.size() != schema.size()) {
    throw IncompatibilityError("parameter count " + std::to_string(params.size()) +
                               " does not match configuration (" +
                               std::to_string(schema.size()) + ")");
  }
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (params.names()[i] != schema[i].first ||
        params.values()[i].shape() != schema[i].second) {
      throw IncompatibilityError("parameter " + params.names()[i] + " " +
                                 shape_string(params.values()[i].shape()) +
                                 " does not match expected " + schema[i].first +
                                 " " + shape_string(schema[i].second));
    }
  }
}

// PE[t, 2j] = sin(t / 10000^(2j/d)), PE[t, 2j+1] = cos(t / 10000^(2j/d)).
inline std::vector<double> positional_encoding(std::size_t t, std::size_t d_model) {
  std::vector<double> pe(d_model);
  for (std::size_t i = 0; i < d_model; i += 2) {
    const double freq = std::pow(10000.0, static_cast<double>(i) /
                                              static_cast<double>(d_model));
    const double angle = static_cast<double>(t) / freq;
    pe[i] = std::sin(angle);
    if (i + 1 < d_model) pe[i + 1] = std::cos(angle);
  }
  return pe;
}

// Rows [first, first + count) of the positional table as a constant.
inline Var positional_rows(std::size_t first, std::size_t count, std::size_t d_model) {
  Tensor t({count, d_model});
  for (std::size_t r = 0; r < count; ++r) {
    const auto pe = positional_encoding(first + r, d_model);
    std::copy(pe.begin(), pe.end(), t.data().begin() + r * d_model);
  }
  return constant(std::move(t));
}

struct Linear {
  Var weight, bias;
  Var operator()(const Var& x) const { return add_bias(matmul(x, weight), bias); }
};

struct Norm {
  Var gain, bias;
  Var operator()(const Var& x) const { return layer_norm(x, gain, bias); }
};

struct FeedForward {
  Linear in, out;
  Var operator()(const Var& x) const { return out(relu(in(x))); }
};

struct Attention {
  Linear q, k, v, o;
};

struct EncoderLayer {
  Attention attn;
  Norm norm1;
  FeedForward ff;
  Norm norm2;
};

struct DecoderLayer {
  Attention self_attn;
  Norm norm1;
  Attention cross_attn;
  Norm norm2;
  FeedForward ff;
  Norm norm3;
};

// Graph leaves for one forward pass. With track_grad the leaves are
// parameters whose gradients can be read back through leaves().
class PolicyGraph {
 public:
  PolicyGraph(const PolicyParams& params, const ModelConfig& cfg, bool track_grad)
      : cfg_(cfg) {
    check_params(params, cfg);
    leaves_.reserve(params.size());
    for (const Tensor& t : params.values())
      leaves_.push_back(track_grad ? parameter(t) : constant(t));

    std::size_t next = 0;
    auto take = [&] { return leaves_[next++]; };
    auto linear = [&] {
      Linear l;
      l.weight = take();
      l.bias = take();
      return l;
    };
    auto attention = [&] {
      Attention a;
      a.q = linear();
      a.k = linear();
      a.v = linear();
      a.o = linear();
      return a;
    };
    auto norm = [&] {
      Norm n;
      n.gain = take();
      n.bias = take();
      return n;
    };
    auto ff = [&] {
      FeedForward f;
      f.in = linear();
      f.out = linear();
      return f;
    };

    embed_ = take();
    start_ = take();
    for (std::size_t l = 0; l < cfg.n_enc_layers; ++l) {
      EncoderLayer e;
      e.attn = attention();
      e.norm1 = norm();
      e.ff = ff();
      e.norm2 = norm();
      encoder_.push_back(std::move(e));
    }
    for (std::size_t l = 0; l < cfg.n_dec_layers; ++l) {
      DecoderLayer dl;
      dl.self_attn = attention();
      dl.norm1 = norm();
      dl.cross_attn = attention();
      dl.norm2 = norm();
      dl.ff = ff();
      dl.norm3 = norm();
      decoder_.push_back(std::move(dl));
    }
    out_ = linear();
  }

  const ModelConfig& config() const { return cfg_; }
  const std::vector<Var>& leaves() const { return leaves_; }
  const Var& embed() const { return embed_; }
  const Var& start() const { return start_; }
  const std::vector<EncoderLayer>& encoder() const { return encoder_; }
  const std::vector<DecoderLayer>& decoder() const { return decoder_; }
  const Linear& output() const { return out_; }

  // Gradients of every leaf, in schema order.
  std::vector<Tensor> gradients() const {
    std::vector<Tensor> g;
    g.reserve(leaves_.size());
    for (const Var& v : leaves_) g.push_back(v.grad());
    return g;
  }

 private:
  ModelConfig cfg_;
  std::vector<Var> leaves_;
  Var embed_, start_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  Linear out_;
};

// N x input_width model input: distance-matrix columns or raw coordinates.
inline Tensor model_input(const TspInstance& inst, const ModelConfig& cfg) {
  const std::size_t n = inst.size();
  if (n != cfg.n_cities) {
    throw IncompatibilityError("instance has " + std::to_string(n) +
                               " cities but the model expects " +
                               std::to_string(cfg.n_cities));
  }
  if (cfg.input_mode == InputMode::kCoordinates) {
    Tensor t({n, 2});
    for (std::size_t i = 0; i < n; ++i) {
      t(i, 0) = inst[i].x;
      t(i, 1) = inst[i].y;
    }
    return t;
  }
  const DistanceMatrix d = distance_matrix(inst);
  return Tensor({n, n}, std::vector<double>(d.data().begin(), d.data().end()));
}

// (N+1) x d_model: start token at position 0, row i of the input at i+1.
inline Var embed_inputs(const Tensor& input, const PolicyGraph& g) {
  const ModelConfig& cfg = g.config();
  if (input.rank() != 2 || input.cols() != cfg.input_width() ||
      input.rows() != cfg.n_cities) {
    throw ContractViolation("model input " + shape_string(input.shape()) +
                            " does not match configured width " +
                            std::to_string(cfg.input_width()));
  }
  const Var rows = concat({g.start(), constant(input)}, 0);
  Var embedded = matmul(rows, g.embed());
  if (cfg.use_pe) {
    embedded = add(embedded, positional_rows(0, cfg.n_cities + 1, cfg.d_model));
  }
  return embedded;
}

// Multi-head scaled dot-product attention of query rows over key/value rows.
inline Var attend(const Var& q, const Var& k, const Var& v, std::size_t n_heads) {
  const std::size_t dk = q.cols() / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  if (n_heads == 1) return matmul(softmax(mul_scalar(matmul_nt(q, k), scale)), v);
  std::vector<Var> heads;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const Var qh = slice_cols(q, h * dk, dk);
    const Var kh = slice_cols(k, h * dk, dk);
    const Var vh = slice_cols(v, h * dk, dk);
    heads.push_back(matmul(softmax(mul_scalar(matmul_nt(qh, kh), scale)), vh));
  }
  return concat(heads, 1);
}

inline Var self_attention(const Attention& a, const Var& x, std::size_t n_heads) {
  return a.o(attend(a.q(x), a.k(x), a.v(x), n_heads));
}

// Post-norm encoder stack; returns the (N+1) x d_model memory.
inline Var encode(const Var& embedded, const PolicyGraph& g) {
  const std::size_t heads = g.config().n_heads;
  Var x = embedded;
  for (const EncoderLayer& layer : g.encoder()) {
    x = layer.norm1(add(x, self_attention(layer.attn, x, heads)));
    x = layer.norm2(add(x, layer.ff(x)));
  }
  return x;
}

inline Var encode_instance(const TspInstance& inst, const PolicyGraph& g) {
  return encode(embed_inputs(model_input(inst, g.config()), g), g);
}

// Incremental decoder for one instance. Copies share cached keys/values,
// which are immutable graph nodes, so beams can fork cheaply.
class DecoderState {
 public:
  DecoderState(const PolicyGraph& g, Var memory)
      : graph_(&g), memory_(std::move(memory)), visited_(g.config().n_cities, false) {
    const ModelConfig& cfg = g.config();
    if (memory_.rows() != cfg.n_cities + 1 || memory_.cols() != cfg.d_model) {
      throw ContractViolation("decoder memory must be (N+1) x d_model");
    }
    for (const DecoderLayer& layer : g.decoder()) {
      cross_k_.push_back(layer.cross_attn.k(memory_));
      cross_v_.push_back(layer.cross_attn.v(memory_));
    }
    self_k_.resize(g.decoder().size());
    self_v_.resize(g.decoder().size());
  }

  std::size_t step() const { return partial_.size(); }
  bool done() const { return partial_.size() == visited_.size(); }
  const Tour& partial() const { return partial_; }
  const std::vector<bool>& visited() const { return visited_; }

  // Next-city distribution (1 x N); visited cities get exactly 0.
  const Var& probabilities() {
    if (!probs_) probs_ = run_step();
    return probs_;
  }

  void select(std::size_t city) {
    if (city >= visited_.size() || visited_[city]) {
      throw ContractViolation("cannot select city " + std::to_string(city));
    }
    probabilities();  // make sure the current row is cached before moving on
    visited_[city] = true;
    partial_.push_back(city);
    probs_ = Var();
  }

 private:
  Var run_step() {
    if (done()) throw ContractViolation("decode step requested after all cities visited");
    const ModelConfig& cfg = graph_->config();
    const std::size_t t = partial_.size();
    const std::size_t source_row = t == 0 ? 0 : partial_.back() + 1;
    Var x = add(gather_rows(memory_, {source_row}), positional_rows(t, 1, cfg.d_model));

    const std::size_t heads = cfg.n_heads;
    for (std::size_t l = 0; l < graph_->decoder().size(); ++l) {
      const DecoderLayer& layer = graph_->decoder()[l];
      self_k_[l].push_back(layer.self_attn.k(x));
      self_v_[l].push_back(layer.self_attn.v(x));
      const Var keys = self_k_[l].size() == 1 ? self_k_[l][0] : concat(self_k_[l], 0);
      const Var values = self_v_[l].size() == 1 ? self_v_[l][0] : concat(self_v_[l], 0);
      const Var sa = layer.self_attn.o(attend(layer.self_attn.q(x), keys, values, heads));
      x = layer.norm1(add(x, sa));
      const Var ca = layer.cross_attn.o(
          attend(layer.cross_attn.q(x), cross_k_[l], cross_v_[l], heads));
      x = layer.norm2(add(x, ca));
      x = layer.norm3(add(x, layer.ff(x)));
    }
    return softmax(graph_->output()(x), visited_);
  }

  const PolicyGraph* graph_;
  Var memory_;
  std::vector<Var> cross_k_, cross_v_;
  std::vector<std::vector<Var>> self_k_, self_v_;
  std::vector<bool> visited_;
  Tour partial_;
  Var probs_;
};

// Stateless form: replays the partial tour and returns the distribution for
// the next step. `visited` must mark exactly the cities in `partial`.
inline Tensor decode_step(const Var& memory, const std::vector<bool>& visited,
                          const Tour& partial, const PolicyGraph& g) {
  const std::size_t n = g.config().n_cities;
  if (visited.size() != n) throw ContractViolation("visited mask has wrong length");
  if (partial.size() >= n) {
    throw ContractViolation("decode_step: all cities already visited");
  }
  std::vector<bool> expected(n, false);
  for (std::size_t c : partial) {
    if (c >= n || expected[c]) throw ContractViolation("partial tour is not injective");
    expected[c] = true;
  }
  if (expected != visited) {
    throw ContractViolation("visited mask inconsistent with partial tour");
  }
  DecoderState state(g, memory);
  for (std::size_t c : partial) state.select(c);
  return state.probabilities().value();
}

}  // namespace tsptta
