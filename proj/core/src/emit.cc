// Copyright 2026 The sdlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Metrics serialization: CSV, JSON and per-series plot files.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sdlab/error.h"
#include "sdlab/harness.h"

namespace sdlab {
namespace {

using nlohmann::json;

// Shortest form that round-trips through strtod.
std::string Num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

double ParseDouble(const std::string& s) {
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw Error(ErrorCode::kCorruptFile, "bad number '" + s + "' in metrics");
  }
  return x;
}

std::int64_t ParseInt(const std::string& s) {
  std::size_t used = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::logic_error&) {
    used = std::string::npos;
  }
  if (used != s.size()) {
    throw Error(ErrorCode::kCorruptFile, "bad integer '" + s + "' in metrics");
  }
  return v;
}

std::uint64_t ParseUint(const std::string& s) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &used);
  } catch (const std::logic_error&) {
    used = std::string::npos;
  }
  if (used != s.size() || (!s.empty() && s[0] == '-')) {
    throw Error(ErrorCode::kCorruptFile, "bad seed '" + s + "' in metrics");
  }
  return v;
}

void CheckText(const std::string& s) {
  if (s.find_first_of(",\n\r\"") != std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument,
                "metrics field '" + s + "' cannot be written as plain CSV");
  }
}

std::string Sanitize(std::string s) {
  for (char& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') {
      ch = '_';
    }
  }
  return s;
}

void Check(std::ostream& out, const std::filesystem::path& path) {
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

}  // namespace

EmitFormat ParseEmitFormat(std::string_view name) {
  if (name == "csv") return EmitFormat::kCsv;
  if (name == "json") return EmitFormat::kJson;
  if (name == "plotdata") return EmitFormat::kPlotData;
  throw Error(ErrorCode::kConfig, "unknown format '" + std::string(name) + "'");
}

void WriteCsv(std::span<const MetricsRecord> records, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : records) {
    CheckText(r.run_id);
    CheckText(r.scenario);
    CheckText(r.method);
    CheckText(r.loss);
    out << r.run_id << ',' << r.scenario << ',' << r.method << ',' << r.loss
        << ',' << Num(r.learning_rate) << ',' << r.data_size << ',' << r.seed
        << ',' << Num(r.acceptance_rate) << ','
        << Num(r.mean_accepted_per_round) << ',' << r.rounds << ','
        << Num(r.train_loss_final) << ',' << Num(r.wall_time_seconds) << '\n';
  }
}

std::vector<MetricsRecord> ReadCsv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw Error(ErrorCode::kCorruptFile, "metrics CSV header mismatch");
  }
  std::vector<MetricsRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 12) {
      throw Error(ErrorCode::kCorruptFile,
                  "metrics row has " + std::to_string(f.size()) + " fields");
    }
    MetricsRecord r;
    r.run_id = f[0];
    r.scenario = f[1];
    r.method = f[2];
    r.loss = f[3];
    r.learning_rate = ParseDouble(f[4]);
    r.data_size = static_cast<int>(ParseInt(f[5]));
    r.seed = ParseUint(f[6]);
    r.acceptance_rate = ParseDouble(f[7]);
    r.mean_accepted_per_round = ParseDouble(f[8]);
    r.rounds = ParseInt(f[9]);
    r.train_loss_final = ParseDouble(f[10]);
    r.wall_time_seconds = ParseDouble(f[11]);
    records.push_back(std::move(r));
  }
  return records;
}

void WriteJson(std::span<const MetricsRecord> records, std::ostream& out) {
  auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  json arr = json::array();
  for (const auto& r : records) {
    arr.push_back({{"run_id", r.run_id},
                   {"scenario", r.scenario},
                   {"method", r.method},
                   {"loss", r.loss},
                   {"learning_rate", r.learning_rate},
                   {"data_size", r.data_size},
                   {"seed", r.seed},
                   {"acceptance_rate", num(r.acceptance_rate)},
                   {"mean_accepted_per_round", num(r.mean_accepted_per_round)},
                   {"rounds", r.rounds},
                   {"train_loss_final", num(r.train_loss_final)},
                   {"wall_time_seconds", r.wall_time_seconds}});
  }
  out << arr.dump(1) << '\n';
}

std::vector<MetricsRecord> ReadJson(std::istream& in) {
  json arr;
  try {
    arr = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, std::string("metrics JSON: ") + e.what());
  }
  if (!arr.is_array()) throw Error(ErrorCode::kCorruptFile, "metrics JSON must be an array");
  auto num = [](const json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  std::vector<MetricsRecord> records;
  try {
    for (const auto& o : arr) {
      MetricsRecord r;
      r.run_id = o.at("run_id").get<std::string>();
      r.scenario = o.at("scenario").get<std::string>();
      r.method = o.at("method").get<std::string>();
      r.loss = o.at("loss").get<std::string>();
      r.learning_rate = o.at("learning_rate").get<double>();
      r.data_size = o.at("data_size").get<int>();
      r.seed = o.at("seed").get<std::uint64_t>();
      r.acceptance_rate = num(o.at("acceptance_rate"));
      r.mean_accepted_per_round = num(o.at("mean_accepted_per_round"));
      r.rounds = o.at("rounds").get<std::int64_t>();
      r.train_loss_final = num(o.at("train_loss_final"));
      r.wall_time_seconds = o.at("wall_time_seconds").get<double>();
      records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, std::string("metrics JSON: ") + e.what());
  }
  return records;
}

std::vector<std::filesystem::path> WritePlotData(
    std::span<const MetricsRecord> records, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string());

  std::set<int> sizes;
  std::set<double> rates;
  std::set<std::string> scenarios;
  for (const auto& r : records) {
    sizes.insert(r.data_size);
    rates.insert(r.learning_rate);
    scenarios.insert(r.scenario);
  }
  // The axis is whatever varies; method-only sweeps collapse to one file.
  enum { kSize, kRate, kMethodAxis } axis =
      sizes.size() > 1 ? kSize : (rates.size() > 1 ? kRate : kMethodAxis);
  const char* axis_name = axis == kSize   ? "data_size"
                          : axis == kRate ? "learning_rate"
                                          : "method";

  // series -> x -> acceptance values (x is a string for the method axis).
  std::map<std::string, std::map<std::string, std::vector<double>>> series;
  std::map<std::string, std::map<std::string, double>> order;
  for (const auto& r : records) {
    std::string name = axis == kMethodAxis ? std::string("methods") : r.method;
    if (axis != kMethodAxis && scenarios.size() > 1) name = r.scenario + "-" + name;
    std::string x = axis == kSize   ? std::to_string(r.data_size)
                    : axis == kRate ? Num(r.learning_rate)
                                    : r.scenario + "-" + r.method;
    series[name][x].push_back(r.acceptance_rate);
    const double key = axis == kSize   ? r.data_size
                       : axis == kRate ? r.learning_rate
                                       : static_cast<double>(order[name].size());
    order[name].try_emplace(x, key);
  }

  std::vector<std::filesystem::path> paths;
  for (const auto& [name, points] : series) {
    std::vector<std::pair<double, std::string>> xs;
    for (const auto& [x, v] : points) xs.emplace_back(order[name][x], x);
    std::sort(xs.begin(), xs.end());
    const auto path = dir / (Sanitize(name) + ".dat");
    std::ofstream out(path);
    Check(out, path);
    out << "# " << axis_name << " mean_acceptance standard_error n\n";
    for (const auto& [key, x] : xs) {
      const auto& v = points.at(x);
      double mean = 0.0;
      for (double a : v) mean += a;
      mean /= v.size();
      double se = 0.0;
      if (v.size() > 1) {
        for (double a : v) se += (a - mean) * (a - mean);
        se = std::sqrt(se / (v.size() - 1) / v.size());
      }
      out << x << ' ' << Num(mean) << ' ' << Num(se) << ' ' << v.size() << '\n';
    }
    Check(out, path);
    paths.push_back(path);
  }
  return paths;
}

std::vector<std::filesystem::path> Emit(std::span<const MetricsRecord> records,
                                        EmitFormat format,
                                        const std::filesystem::path& dir) {
  if (format == EmitFormat::kPlotData) return WritePlotData(records, dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string());
  const auto path = dir / (format == EmitFormat::kCsv ? "metrics.csv" : "metrics.json");
  std::ofstream out(path, std::ios::binary);
  Check(out, path);
  if (format == EmitFormat::kCsv) {
    WriteCsv(records, out);
  } else {
    WriteJson(records, out);
  }
  out.flush();
  Check(out, path);
  return {path};
}

}  // namespace sdlab
