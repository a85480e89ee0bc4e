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

// Optimality gap and average tour length, plus the per-instance report.

#pragma once

#include <cstddef>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tsptta/error.hpp"

namespace tsptta {

// (1/K) * sum_k (pred_k / opt_k - 1), as a fraction.
inline double optimality_gap(std::span<const double> pred, std::span<const double> opt) {
  if (pred.size() != opt.size()) {
    throw ContractViolation("optimality_gap: length mismatch");
  }
  if (pred.empty()) throw ContractViolation("optimality_gap: no instances");
  double total = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (!(opt[k] > 0.0)) {
      throw ContractViolation("optimality_gap: reference length must be positive");
    }
    total += pred[k] / opt[k] - 1.0;
  }
  return total / static_cast<double>(pred.size());
}

inline double average_tour_length(std::span<const double> pred) {
  if (pred.empty()) throw ContractViolation("average_tour_length: no instances");
  double total = 0.0;
  for (double l : pred) total += l;
  return total / static_cast<double>(pred.size());
}

// Fraction rendered as a percentage with two decimals, e.g. "1.12%".
inline std::string format_percent(double fraction) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f%%", fraction * 100.0);
  return buf;
}

struct EvalRow {
  std::size_t id = 0;
  double pred_len = 0.0;
  double opt_len = 0.0;
  double gap = 0.0;
};

struct EvalReport {
  std::size_t k = 0;
  double mean_gap = 0.0;
  double avg_len = 0.0;
  std::vector<EvalRow> rows;
};

inline EvalReport make_report(std::span<const double> pred, std::span<const double> opt) {
  EvalReport r;
  r.mean_gap = optimality_gap(pred, opt);
  r.avg_len = average_tour_length(pred);
  r.k = pred.size();
  for (std::size_t i = 0; i < pred.size(); ++i)
    r.rows.push_back({i, pred[i], opt[i], pred[i] / opt[i] - 1.0});
  return r;
}

// CSV with header id,pred_len,opt_len,gap followed by one '#' summary line.
inline void write_report_csv(std::ostream& os, const EvalReport& r) {
  char buf[160];
  os << "id,pred_len,opt_len,gap\n";
  for (const EvalRow& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.9f,%.9f,%.9f\n", row.id, row.pred_len,
                  row.opt_len, row.gap);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "# k=%zu avg_len=%.6f mean_gap=%s\n", r.k, r.avg_len,
                format_percent(r.mean_gap).c_str());
  os << buf;
}

}  // namespace tsptta
