// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace nf {

struct MetricsRow {
  std::string run;
  std::size_t step = 0;
  std::string metric;
  double value = 0.0;
  std::map<std::string, std::string> meta;

  bool operator==(const MetricsRow&) const = default;
};

// Nine significant digits ("%.9g"): exact for float-valued metrics.
std::string format_metric_value(double v);

// Header `run,step,metric,value,meta`; meta is `key=value` pairs joined by
// ';'. Fields containing commas, quotes or newlines are double-quoted.
std::string metrics_to_csv(const std::vector<MetricsRow>& rows);
// Throws ParseError for malformed input.
std::vector<MetricsRow> metrics_from_csv(std::string_view text);
// One JSON object per row with the same fields.
std::string metrics_to_jsonl(const std::vector<MetricsRow>& rows);

// Append-only row collection for one experiment.
class MetricsLog {
 public:
  void add(const std::string& run, std::size_t step, const std::string& metric, double value,
           std::map<std::string, std::string> meta = {});
  const std::vector<MetricsRow>& rows() const { return rows_; }
  // Value of the last row matching run and metric; throws ContractError when
  // there is none.
  double last(const std::string& run, const std::string& metric) const;
  // Writes `<dir>/metrics.csv` and `<dir>/metrics.jsonl`. Throws IoError.
  void write(const std::filesystem::path& dir) const;

 private:
  std::vector<MetricsRow> rows_;
};

// Throws IoError when the file cannot be written.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace nf
