#pragma once

// Rows of figure datasets, CSV tables and the ordered parallel runner.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "comet/errors.hpp"

namespace comet {

struct ExperimentRecord {
  std::string experiment_id;
  std::string curve;  // CSV file stem
  std::size_t point = 0;
  double sweep_coordinate = 0.0;
  std::string model_tag;  // "full" | "effective" | "analytic"
  std::map<std::string, double> observables;
  int n_max_used = 0;
  double tail = 0.0;

  std::string where() const {
    return experiment_id + "/" + curve + " point " + std::to_string(point) + " (" + model_tag + ", coordinate " +
           fmt(sweep_coordinate) + ")";
  }

  void validate(double tail_tol) const {
    if (model_tag != "full" && model_tag != "effective" && model_tag != "analytic")
      throw std::logic_error("ExperimentRecord: unknown model tag " + model_tag);
    for (const auto& [name, value] : observables)
      if (!std::isfinite(value)) throw NumericalError("non-finite " + name + " at " + where());
    if (!(tail < tail_tol) && model_tag != "analytic")
      throw TruncationError("tail " + fmt(tail) + " at " + where() + " exceeds tail_tol " + fmt(tail_tol), n_max_used,
                            tail);
  }
};

// Shortest decimal string that parses back to the same double.
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double x = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError("not a number: '" + s + "'");
  return x;
}

struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& label) const {
    const auto it = std::find(header.begin(), header.end(), label);
    if (it == header.end()) throw ConfigError("table " + name + " has no column " + label);
    return static_cast<std::size_t>(it - header.begin());
  }

  std::vector<double> values(const std::string& label) const {
    const auto c = column(label);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }

  std::string csv() const {
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
    out += '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + format_double(r[i]);
      out += '\n';
    }
    return out;
  }
};

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!line.empty() && line.back() == sep) parts.emplace_back();
  return parts;
}

inline Table read_csv(const std::string& path, const std::string& name) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  Table t{name, {}, {}};
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + " is empty");
  t.header = split(line, ',');
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != t.header.size()) throw ConfigError(path + ": ragged row");
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(parse_double(c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

// A CSV of records: first column the sweep coordinate, then <observable>_<tag> columns.
struct CurveSpec {
  std::string name;
  std::string coordinate;
  std::vector<std::string> columns;
};

inline std::string column_name(const std::string& observable, const std::string& tag) { return observable + "_" + tag; }

inline Table assemble_curve(const CurveSpec& spec, const std::vector<ExperimentRecord>& records) {
  std::map<std::size_t, std::pair<double, std::map<std::string, double>>> rows;
  for (const auto& r : records) {
    if (r.curve != spec.name) continue;
    auto [it, fresh] = rows.try_emplace(r.point, r.sweep_coordinate, std::map<std::string, double>{});
    if (!fresh && it->second.first != r.sweep_coordinate)
      throw std::logic_error("curve " + spec.name + ": inconsistent coordinate at point " + std::to_string(r.point));
    for (const auto& [obs, v] : r.observables) it->second.second[column_name(obs, r.model_tag)] = v;
  }
  Table t{spec.name, {spec.coordinate}, {}};
  t.header.insert(t.header.end(), spec.columns.begin(), spec.columns.end());
  for (const auto& [point, row] : rows) {
    std::vector<double> out{row.first};
    for (const auto& c : spec.columns) {
      const auto it = row.second.find(c);
      if (it == row.second.end())
        throw std::logic_error("curve " + spec.name + ": no " + c + " at point " + std::to_string(point));
      out.push_back(it->second);
    }
    t.rows.push_back(std::move(out));
  }
  return t;
}

// Runs fn(i) for i in [0, count) on up to `threads` workers. Results stay indexed by i,
// and the exception of the lowest failing index is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, threads));
  if (n == 1 || count <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < std::min(n, count); ++k) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace comet
