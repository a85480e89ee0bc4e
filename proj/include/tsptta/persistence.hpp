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

// Binary dataset and checkpoint files, and key=value configuration text.
//
// All multi-byte fields are little-endian regardless of host byte order.
//
// Dataset ("TSPD1"):
//   magic      5 bytes  "TSPD1"
//   n          u32      cities per instance
//   k          u32      instance count
//   seed       u64      generator seed (informational)
//   body       k * n * 2 f64 coordinates, instance-major, x before y
//
// Checkpoint ("TSPM1"):
//   magic      5 bytes  "TSPM1"
//   cfg_len    u32      length of the model configuration text
//   cfg        cfg_len bytes of key=value lines
//   count      u32      number of parameters
//   manifest   count x { name_len u32, name bytes, rank u32, rank x u32 dims }
//   body       every parameter as f32, in manifest order, row-major

#pragma once

#include <bit>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tsptta/error.hpp"
#include "tsptta/model.hpp"
#include "tsptta/training.hpp"
#include "tsptta/tsp.hpp"

namespace tsptta {

inline constexpr std::string_view kDatasetMagic = "TSPD1";
inline constexpr std::string_view kCheckpointMagic = "TSPM1";
inline constexpr std::size_t kDatasetHeaderBytes = 5 + 4 + 4 + 8;

namespace io {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

// Bounds-checked little-endian reader over an in-memory file image.
class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::string_view take(std::size_t n) {
    if (n > remaining()) throw CorruptionError("file truncated");
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint64_t uint(int bytes) {
    const std::string_view s = take(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path + " for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path);
}

}  // namespace io

struct Dataset {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::vector<TspInstance> instances;
};

inline std::string encode_dataset(const Dataset& ds) {
  std::string out(kDatasetMagic);
  io::put_u32(out, static_cast<std::uint32_t>(ds.n));
  io::put_u32(out, static_cast<std::uint32_t>(ds.instances.size()));
  io::put_u64(out, ds.seed);
  for (const TspInstance& inst : ds.instances) {
    if (inst.size() != ds.n) throw ContractViolation("dataset instance size mismatch");
    for (const Point& p : inst.coords()) {
      io::put_f64(out, p.x);
      io::put_f64(out, p.y);
    }
  }
  return out;
}

inline Dataset decode_dataset(std::string_view bytes) {
  io::Reader r(bytes);
  if (bytes.size() < kDatasetMagic.size() ||
      r.take(kDatasetMagic.size()) != kDatasetMagic) {
    throw FormatError("not a dataset file (bad magic)");
  }
  Dataset ds;
  ds.n = r.u32();
  const std::uint64_t k = r.u32();
  ds.seed = r.u64();
  if (ds.n < 2) throw CorruptionError("dataset declares fewer than 2 cities");
  const std::uint64_t expected = k * ds.n * 16;  // both factors < 2^32
  if (expected != r.remaining()) {
    throw CorruptionError("dataset body is " + std::to_string(r.remaining()) +
                          " bytes, header declares " + std::to_string(expected));
  }
  ds.instances.reserve(k);
  for (std::uint64_t i = 0; i < k; ++i) {
    std::vector<Point> pts(ds.n);
    for (Point& p : pts) {
      p.x = r.f64();
      p.y = r.f64();
    }
    ds.instances.emplace_back(std::move(pts));
  }
  return ds;
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
  io::write_file(path, encode_dataset(ds));
}

inline Dataset load_dataset(const std::string& path) {
  return decode_dataset(io::read_file(path));
}

// key=value lines; blank lines and '#' comments are ignored.
inline std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("invalid value '" + value + "' for " + key);
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ParseError("invalid boolean '" + value + "' for " + key);
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline std::string model_config_text(const ModelConfig& c) {
  std::ostringstream os;
  os << "n_cities=" << c.n_cities << "\n"
     << "d_model=" << c.d_model << "\n"
     << "n_heads=" << c.n_heads << "\n"
     << "n_enc_layers=" << c.n_enc_layers << "\n"
     << "n_dec_layers=" << c.n_dec_layers << "\n"
     << "d_ff=" << c.d_ff << "\n"
     << "input_mode=" << to_string(c.input_mode) << "\n"
     << "use_pe=" << (c.use_pe ? "true" : "false") << "\n";
  return os.str();
}

inline std::string train_config_text(const TrainConfig& c) {
  std::ostringstream os;
  os << "epochs=" << c.epochs << "\n"
     << "batch_size=" << c.batch_size << "\n"
     << "instances_per_epoch=" << c.instances_per_epoch << "\n"
     << "val_size=" << c.val_size << "\n"
     << "learning_rate=" << detail::format_double(c.adam.learning_rate) << "\n"
     << "beta1=" << detail::format_double(c.adam.beta1) << "\n"
     << "beta2=" << detail::format_double(c.adam.beta2) << "\n"
     << "epsilon=" << detail::format_double(c.adam.epsilon) << "\n"
     << "grad_clip=" << detail::format_double(c.grad_clip) << "\n"
     << "seed=" << c.seed << "\n";
  return os.str();
}

// Applies recognised model keys; returns true if the key was consumed.
inline bool apply_model_key(ModelConfig& c, const std::string& key,
                            const std::string& value) {
  using detail::parse_number;
  if (key == "n_cities") c.n_cities = parse_number<std::size_t>(key, value);
  else if (key == "d_model") c.d_model = parse_number<std::size_t>(key, value);
  else if (key == "n_heads") c.n_heads = parse_number<std::size_t>(key, value);
  else if (key == "n_enc_layers") c.n_enc_layers = parse_number<std::size_t>(key, value);
  else if (key == "n_dec_layers") c.n_dec_layers = parse_number<std::size_t>(key, value);
  else if (key == "d_ff") c.d_ff = parse_number<std::size_t>(key, value);
  else if (key == "input_mode") c.input_mode = parse_input_mode(value);
  else if (key == "use_pe") c.use_pe = detail::parse_bool(key, value);
  else return false;
  return true;
}

inline bool apply_train_key(TrainConfig& c, const std::string& key,
                            const std::string& value) {
  using detail::parse_number;
  if (key == "epochs") c.epochs = parse_number<std::size_t>(key, value);
  else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "instances_per_epoch") c.instances_per_epoch = parse_number<std::size_t>(key, value);
  else if (key == "val_size") c.val_size = parse_number<std::size_t>(key, value);
  else if (key == "learning_rate") c.adam.learning_rate = parse_number<double>(key, value);
  else if (key == "beta1") c.adam.beta1 = parse_number<double>(key, value);
  else if (key == "beta2") c.adam.beta2 = parse_number<double>(key, value);
  else if (key == "epsilon") c.adam.epsilon = parse_number<double>(key, value);
  else if (key == "grad_clip") c.grad_clip = parse_number<double>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "baseline_rule") {
    if (value != "mean-improvement") throw ParseError("unknown baseline_rule '" + value + "'");
    c.baseline_rule = BaselineRule::kMeanImprovement;
  } else return false;
  return true;
}

inline ModelConfig parse_model_config(std::string_view text) {
  ModelConfig c;
  for (const auto& [k, v] : parse_key_values(text)) {
    if (!apply_model_key(c, k, v)) throw ParseError("unknown model key '" + k + "'");
  }
  c.validate();
  return c;
}

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
};

// A single file may carry both model and training keys.
inline ExperimentConfig parse_experiment_config(std::string_view text) {
  ExperimentConfig e;
  for (const auto& [k, v] : parse_key_values(text)) {
    if (!apply_model_key(e.model, k, v) && !apply_train_key(e.train, k, v)) {
      throw ParseError("unknown config key '" + k + "'");
    }
  }
  e.model.validate();
  e.train.validate();
  return e;
}

struct Checkpoint {
  ModelConfig config;
  PolicyParams params;
};

inline std::string encode_checkpoint(const ModelConfig& cfg, const PolicyParams& params) {
  check_params(params, cfg);
  std::string out(kCheckpointMagic);
  const std::string text = model_config_text(cfg);
  io::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  io::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.names()[i];
    io::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    const Shape& shape = params.values()[i].shape();
    io::put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) io::put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (const Tensor& t : params.values())
    for (double v : t.data()) io::put_f32(out, static_cast<float>(v));
  return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  io::Reader r(bytes);
  if (bytes.size() < kCheckpointMagic.size() ||
      r.take(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  Checkpoint ck;
  const std::uint32_t text_len = r.u32();
  ck.config = parse_model_config(r.take(text_len));

  const std::uint32_t count = r.u32();
  std::vector<std::pair<std::string, Shape>> manifest;
  std::uint64_t total = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(r.take(r.u32()));
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw CorruptionError("bad rank for " + name);
    Shape shape(rank);
    std::uint64_t elems = 1;
    for (auto& d : shape) {
      d = r.u32();
      if (d == 0) throw CorruptionError("zero extent in " + name);
      elems *= d;
      if (elems > bytes.size()) throw CorruptionError("implausible shape for " + name);
    }
    total += elems;
    manifest.emplace_back(std::move(name), std::move(shape));
  }
  if (manifest != parameter_schema(ck.config)) {
    throw IncompatibilityError("checkpoint manifest does not match its model configuration");
  }
  if (r.remaining() != total * 4) {
    throw CorruptionError("checkpoint body is " + std::to_string(r.remaining()) +
                          " bytes, manifest declares " + std::to_string(total * 4));
  }
  for (auto& [name, shape] : manifest) {
    Tensor t(shape);
    for (double& v : t.data()) v = static_cast<double>(r.f32());
    ck.params.add(name, std::move(t));
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                            const PolicyParams& params) {
  io::write_file(path, encode_checkpoint(cfg, params));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path));
}

// Loads and insists the stored configuration equals `expected`.
inline Checkpoint load_checkpoint(const std::string& path, const ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.config == expected)) {
    throw IncompatibilityError("checkpoint configuration differs from the current model");
  }
  return ck;
}

}  // namespace tsptta
