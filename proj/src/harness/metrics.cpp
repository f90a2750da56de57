// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/harness/metrics.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "nf/error.hpp"

namespace nf {

namespace {

constexpr std::string_view kHeader = "run,step,metric,value,meta";

std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string encode_meta(const std::map<std::string, std::string>& meta) {
  std::string out;
  for (const auto& [k, v] : meta) {
    if (k.empty() || k.find_first_of(";=") != std::string::npos ||
        v.find(';') != std::string::npos) {
      throw ContractError("metadata '" + k + "' cannot contain ';' or '=' in its key or ';' in " +
                          "its value");
    }
    if (!out.empty()) out += ';';
    out += k + '=' + v;
  }
  return out;
}

std::map<std::string, std::string> decode_meta(const std::string& text, std::size_t pos) {
  std::map<std::string, std::string> meta;
  std::size_t begin = 0;
  while (begin < text.size()) {
    std::size_t end = text.find(';', begin);
    if (end == std::string::npos) end = text.size();
    const std::string item = text.substr(begin, end - begin);
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ParseError("bad metadata entry '" + item + "'", pos);
    meta[item.substr(0, eq)] = item.substr(eq + 1);
    begin = end + 1;
  }
  return meta;
}

// Splits CSV text into records of fields, honouring double quotes.
std::vector<std::pair<std::size_t, std::vector<std::string>>> split_csv(std::string_view text) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> records;
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false, any = false;
  std::size_t record_start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty()) throw ParseError("quote inside an unquoted field", i);
      quoted = true;
      any = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      fields.push_back(std::move(field));
      field.clear();
      records.emplace_back(record_start, std::move(fields));
      fields.clear();
      any = false;
      record_start = i + 1;
    } else if (c != '\r') {
      field += c;
      any = true;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", text.size());
  if (any || !field.empty()) {
    fields.push_back(std::move(field));
    records.emplace_back(record_start, std::move(fields));
  }
  return records;
}

}  // namespace

std::string format_metric_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  std::string out(kHeader);
  out += '\n';
  for (const MetricsRow& r : rows) {
    out += quote(r.run) + ',' + std::to_string(r.step) + ',' + quote(r.metric) + ',' +
           format_metric_value(r.value) + ',' + quote(encode_meta(r.meta)) + '\n';
  }
  return out;
}

std::vector<MetricsRow> metrics_from_csv(std::string_view text) {
  auto records = split_csv(text);
  if (records.empty()) throw ParseError("missing CSV header", 0);
  const auto& header = records.front().second;
  if (header != std::vector<std::string>{"run", "step", "metric", "value", "meta"}) {
    throw ParseError("unexpected CSV header", 0);
  }
  std::vector<MetricsRow> rows;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& [pos, f] = records[i];
    if (f.size() != 5) {
      throw ParseError("expected 5 fields, found " + std::to_string(f.size()), pos);
    }
    MetricsRow r;
    r.run = f[0];
    const auto [p, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), r.step);
    if (ec != std::errc() || p != f[1].data() + f[1].size()) {
      throw ParseError("bad step '" + f[1] + "'", pos);
    }
    r.metric = f[2];
    char* end = nullptr;
    r.value = std::strtod(f[3].c_str(), &end);
    if (f[3].empty() || end != f[3].c_str() + f[3].size()) {
      throw ParseError("bad value '" + f[3] + "'", pos);
    }
    r.meta = decode_meta(f[4], pos);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string metrics_to_jsonl(const std::vector<MetricsRow>& rows) {
  std::string out;
  for (const MetricsRow& r : rows) {
    nlohmann::ordered_json j;
    j["run"] = r.run;
    j["step"] = r.step;
    j["metric"] = r.metric;
    j["value"] = std::strtod(format_metric_value(r.value).c_str(), nullptr);
    j["meta"] = r.meta;
    out += j.dump() + '\n';
  }
  return out;
}

void MetricsLog::add(const std::string& run, std::size_t step, const std::string& metric,
                     double value, std::map<std::string, std::string> meta) {
  rows_.push_back(MetricsRow{run, step, metric, value, std::move(meta)});
}

double MetricsLog::last(const std::string& run, const std::string& metric) const {
  for (auto it = rows_.rbegin(); it != rows_.rend(); ++it) {
    if (it->run == run && it->metric == metric) return it->value;
  }
  throw ContractError("no metric '" + metric + "' recorded for run '" + run + "'");
}

void MetricsLog::write(const std::filesystem::path& dir) const {
  write_text_file(dir / "metrics.csv", metrics_to_csv(rows_));
  write_text_file(dir / "metrics.jsonl", metrics_to_jsonl(rows_));
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace nf
