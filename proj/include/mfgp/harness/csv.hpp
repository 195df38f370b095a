#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "mfgp/error.hpp"

namespace mfgp::harness {

/// Marker written for values that do not exist (e.g. an sd over one replication).
inline constexpr const char* kAbsent = "NA";

/// Six significant digits; NaN prints as the absent marker.
inline std::string fmt(double v) {
  if (std::isnan(v)) return kAbsent;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

using Cell = std::variant<std::string, long, double>;

inline std::string render(const Cell& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  if (const auto* i = std::get_if<long>(&c)) return std::to_string(*i);
  return fmt(std::get<double>(c));
}

/// In-memory CSV table; cells are rendered only when written.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    if (row.size() != header.size()) throw InvalidArgument("table row width does not match header");
    rows.push_back(std::move(row));
  }

  std::string str() const {
    std::ostringstream os;
    for (std::size_t k = 0; k < header.size(); ++k) os << (k ? "," : "") << header[k];
    os << '\n';
    for (const auto& r : rows) {
      for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "," : "") << render(r[k]);
      os << '\n';
    }
    return os.str();
  }

  void write(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path + " for writing");
    f << str();
  }
};

/// Raw CSV content: header plus string cells, 1-based data row numbers for messages.
struct CsvContent {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n\xEF\xBB\xBF");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline CsvContent read_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  CsvContent c;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (first) {
      c.header = std::move(cells);
      first = false;
    } else {
      c.rows.push_back(std::move(cells));
    }
  }
  return c;
}

}  // namespace mfgp::harness
