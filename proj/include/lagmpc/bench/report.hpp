// Copyright 2026 The lagmpc Authors
//
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

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "lagmpc/core.hpp"

namespace lagmpc::bench {

/// One CSV row. Timing columns are NaN (written empty) when not measured.
struct BenchRow {
  std::string experiment;
  std::string variant;
  Index horizon = 0;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
  double wall_ms_median = std::nan("");
  double wall_ms_p95 = std::nan("");
};

inline const char* kBenchCsvHeader = "experiment,variant,horizon,seed,metric,value,wall_ms_median,wall_ms_p95";

/// Linear-interpolated quantile of a sample, p in [0, 1].
inline double quantile(std::vector<double> v, double p) {
  require(!v.empty(), ErrorKind::kInvalidArg, "quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}
inline double median(const std::vector<double>& v) { return quantile(v, 0.5); }

struct CellSummary {
  std::string experiment, variant, metric;
  Index horizon = 0;
  std::size_t count = 0;
  double median = 0.0, q25 = 0.0, q75 = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  long skipped = 0;  // segments or episodes left out, with the reason in notes
  std::vector<std::string> notes;

  void add(BenchRow r) { rows.push_back(std::move(r)); }
  void append(const BenchReport& o) {
    rows.insert(rows.end(), o.rows.begin(), o.rows.end());
    skipped += o.skipped;
    notes.insert(notes.end(), o.notes.begin(), o.notes.end());
  }

  std::vector<double> values(const std::string& variant, Index horizon, const std::string& metric) const {
    std::vector<double> out;
    for (const auto& r : rows)
      if (r.variant == variant && r.horizon == horizon && r.metric == metric) out.push_back(r.value);
    return out;
  }

  /// Median and interquartile range per (experiment, variant, horizon, metric) cell.
  std::vector<CellSummary> summarize() const {
    std::map<std::tuple<std::string, std::string, Index, std::string>, std::vector<double>> cells;
    for (const auto& r : rows) cells[{r.experiment, r.variant, r.horizon, r.metric}].push_back(r.value);
    std::vector<CellSummary> out;
    for (const auto& [key, v] : cells) {
      CellSummary c;
      std::tie(c.experiment, c.variant, c.horizon, c.metric) = key;
      c.count = v.size();
      c.median = median(v);
      c.q25 = quantile(v, 0.25);
      c.q75 = quantile(v, 0.75);
      out.push_back(c);
    }
    return out;
  }

  void write_csv(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
    out << kBenchCsvHeader << "\n";
    out.precision(17);
    auto timing = [&](double x) {
      if (!std::isnan(x)) out << x;
    };
    for (const auto& r : rows) {
      out << r.experiment << "," << r.variant << "," << r.horizon << "," << r.seed << "," << r.metric << ","
          << r.value << ",";
      timing(r.wall_ms_median);
      out << ",";
      timing(r.wall_ms_p95);
      out << "\n";
    }
  }

  void write_summary_csv(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
    out << "experiment,variant,horizon,metric,count,median,q25,q75\n";
    out.precision(17);
    for (const auto& c : summarize())
      out << c.experiment << "," << c.variant << "," << c.horizon << "," << c.metric << "," << c.count << ","
          << c.median << "," << c.q25 << "," << c.q75 << "\n";
  }
};

}  // namespace lagmpc::bench
