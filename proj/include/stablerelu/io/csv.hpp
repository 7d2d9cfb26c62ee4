#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stablerelu/dataset.hpp"
#include "stablerelu/errors.hpp"
#include "stablerelu/funcspace.hpp"
#include "stablerelu/trainer.hpp"

namespace stablerelu::io {

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Shortest text that reads back to the same double.
inline std::string fmt_shortest(double v) {
  if (!std::isfinite(v)) return fmt_double(v);
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string cell(double v) { return fmt_double(v); }
inline std::string cell(long v) { return std::to_string(v); }
inline std::string cell(std::uint64_t v) { return std::to_string(v); }
inline std::string cell(bool v) { return v ? "true" : "false"; }
inline std::string cell(const std::string& v) { return v; }
template <typename T>
std::string cell(const std::optional<T>& v) {
  return v ? cell(*v) : std::string();
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

  template <typename... Ts>
  void row(const Ts&... values) {
    std::vector<std::string> cells{cell(values)...};
    if (cells.size() != header_.size()) {
      throw Error(ErrorKind::kInvalidConfig, "csv row width mismatch");
    }
    rows_.push_back(std::move(cells));
  }

  std::string str() const {
    std::string out = join(header_);
    for (const auto& r : rows_) out += join(r);
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::kMissingFile, "cannot write " + path);
    f << str();
  }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    return line + '\n';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline const std::vector<std::string>& records_header() {
  static const std::vector<std::string> h{
      "step", "loss", "mse", "grad_norm", "lambda_max_full", "lambda_max_gn",
      "weighted_tv", "tv_plain", "knot_count", "diff_margin"};
  return h;
}

inline CsvWriter records_csv(const std::vector<TrainRecord>& records) {
  CsvWriter w(records_header());
  for (const auto& r : records) {
    w.row(r.step, r.loss, r.mse, r.grad_norm, r.lambda_max_full, r.lambda_max_gn,
          r.weighted_tv, r.tv_plain, r.knot_count, r.diff_margin);
  }
  return w;
}

// Reads a file with a header line into named numeric columns; empty cells
// become NaN.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw Error(ErrorKind::kInvalidValue, "csv has no column " + name);
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kMissingFile, "cannot read " + path);
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string c;
    while (std::getline(ss, c, ',')) out.push_back(c);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(in, line)) throw Error(ErrorKind::kInvalidValue, path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split(line);
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size()) {
      throw Error(ErrorKind::kInvalidValue,
                  path + ": line " + std::to_string(lineno) + " has wrong width");
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      if (c.empty()) {
        row.push_back(std::nan(""));
        continue;
      }
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw Error(ErrorKind::kInvalidValue,
                    path + ": line " + std::to_string(lineno) + " bad number '" + c + "'");
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// Dataset from a CSV with columns x and y. Rows are sorted by x.
inline Dataset load_dataset_csv(const std::string& path, std::optional<double> x_max) {
  const CsvTable t = read_csv(path);
  const std::size_t cx = t.column("x");
  const std::size_t cy = t.column("y");
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : t.rows) pts.emplace_back(r[cx], r[cy]);
  std::sort(pts.begin(), pts.end());
  Dataset d;
  double m = 0.0;
  for (const auto& [x, y] : pts) {
    d.xs.push_back(x);
    d.ys.push_back(y);
    m = std::max(m, std::fabs(x));
  }
  d.x_max = x_max.value_or(m > 0.0 ? m : 1.0);
  return d;
}

inline CsvWriter weight_profile_csv(const EmpiricalWeight& g, long points) {
  CsvWriter w({"x", "g"});
  const double lo = g.lo(), hi = g.hi();
  for (long i = 0; i < points; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    w.row(x, g(x));
  }
  return w;
}

}  // namespace stablerelu::io
