#pragma once

#include <charconv>
#include <cmath>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <boost/date_time/gregorian/gregorian.hpp>
#include <boost/date_time/posix_time/posix_time.hpp>

#include "mfgp/error.hpp"
#include "mfgp/harness/csv.hpp"
#include "mfgp/kernels.hpp"
#include "mfgp/model.hpp"

namespace mfgp::harness {

class SchemaError : public Error {
 public:
  using Error::Error;
};

class EmptyFidelity : public Error {
 public:
  using Error::Error;
};

class NonFiniteValue : public Error {
 public:
  NonFiniteValue(const std::string& file, long row, const std::string& column)
      : Error(file + ": missing or non-finite value in column '" + column + "' at data row " +
              std::to_string(row)),
        row_(row) {}
  long row() const { return row_; }

 private:
  long row_;
};

struct LfRow {
  double s1, s2, t, y;
};

struct HfRow {
  int station;
  double s1, s2, t, y;
};

struct StationMatch {
  int station = 0;
  Location where;     // station coordinates
  Location lf_cell;   // nearest LF location
  double distance = 0.0;
};

struct IngestReport {
  long duplicate_lf = 0;
  long duplicate_hf = 0;
  long hf_without_lf = 0;  // HF rows whose matched LF cell has no value at that time
  bool iso_time = false;
};

struct RealDataset {
  std::vector<LfRow> lf;
  std::vector<HfRow> hf;
  std::vector<StationMatch> matches;  // sorted by station id
  IngestReport report;

  const StationMatch& match_of(int station) const {
    for (const auto& m : matches) {
      if (m.station == station) return m;
    }
    throw InvalidArgument("unknown station " + std::to_string(station));
  }

  std::vector<int> stations() const {
    std::vector<int> out;
    for (const auto& m : matches) out.push_back(m.station);
    return out;
  }

  /// Model input: HF rows read the LF process at their matched cell and time.
  MfData to_mfdata() const {
    MfData d;
    d.y_lf.resize(static_cast<Eigen::Index>(lf.size()));
    for (std::size_t k = 0; k < lf.size(); ++k) {
      d.lf.push_back({lf[k].s1, lf[k].s2, lf[k].t});
      d.y_lf(static_cast<Eigen::Index>(k)) = lf[k].y;
    }
    std::map<int, Location> cell;
    for (const auto& m : matches) cell[m.station] = m.lf_cell;
    d.y_hf.resize(static_cast<Eigen::Index>(hf.size()));
    for (std::size_t k = 0; k < hf.size(); ++k) {
      const auto& r = hf[k];
      d.hf.push_back({r.s1, r.s2, r.t});
      d.hf_link.push_back({cell.at(r.station).s1, cell.at(r.station).s2, r.t});
      d.hf_station.push_back(r.station);
      d.y_hf(static_cast<Eigen::Index>(k)) = r.y;
    }
    return d;
  }
};

namespace detail {

inline std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (*b == '+') ++b;
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) return std::nullopt;
  return v;
}

inline std::optional<boost::posix_time::ptime> parse_iso(std::string s) {
  using namespace boost::posix_time;
  if (!s.empty() && (s.back() == 'Z' || s.back() == 'z')) s.pop_back();
  try {
    if (s.size() == 10) return ptime(boost::gregorian::from_simple_string(s));
    if (s.find('T') != std::string::npos) {
      // basic and extended forms both appear in the wild
      if (s.find('-') != std::string::npos) return from_iso_extended_string(s);
      return from_iso_string(s);
    }
    return time_from_string(s);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline void expect_header(const CsvContent& c, const std::vector<std::string>& want, const std::string& file) {
  if (c.header != want) {
    std::string w;
    for (const auto& h : want) w += (w.empty() ? "" : ",") + h;
    throw SchemaError(file + ": header must be exactly '" + w + "'");
  }
}

}  // namespace detail

/*
 * Reads `s1,s2,t,y_L` and `station_id,s1,s2,t,y_H`. Time is numeric or
 * ISO-8601 in both files; ISO stamps become hours since the earliest one.
 * Repeated keys keep their first row and are counted in the report.
 */
inline RealDataset ingest(const std::string& lf_path, const std::string& hf_path) {
  const CsvContent lfc = read_csv(lf_path);
  const CsvContent hfc = read_csv(hf_path);
  detail::expect_header(lfc, {"s1", "s2", "t", "y_L"}, lf_path);
  detail::expect_header(hfc, {"station_id", "s1", "s2", "t", "y_H"}, hf_path);
  if (lfc.rows.empty()) throw EmptyFidelity(lf_path + ": no LF rows");
  if (hfc.rows.empty()) throw EmptyFidelity(hf_path + ": no HF rows");

  // decide the time encoding from the first LF row
  const bool iso = !detail::parse_number(lfc.rows.front().size() > 2 ? lfc.rows.front()[2] : "").has_value() &&
                   lfc.rows.front().size() > 2 && detail::parse_iso(lfc.rows.front()[2]).has_value();

  std::optional<boost::posix_time::ptime> origin;
  auto scan_origin = [&](const CsvContent& c, std::size_t col) {
    for (const auto& r : c.rows) {
      if (r.size() <= col) continue;
      if (const auto p = detail::parse_iso(r[col]); p && (!origin || *p < *origin)) origin = *p;
    }
  };
  if (iso) {
    scan_origin(lfc, 2);
    scan_origin(hfc, 3);
  }

  auto cell = [&](const std::vector<std::string>& r, std::size_t col, const std::string& file,
                  long row, const std::string& name) {
    if (col >= r.size()) throw NonFiniteValue(file, row, name);
    const auto v = detail::parse_number(r[col]);
    if (!v || !std::isfinite(*v)) throw NonFiniteValue(file, row, name);
    return *v;
  };
  auto time_cell = [&](const std::vector<std::string>& r, std::size_t col, const std::string& file,
                       long row) {
    if (!iso) return cell(r, col, file, row, "t");
    if (col >= r.size()) throw NonFiniteValue(file, row, "t");
    const auto p = detail::parse_iso(r[col]);
    if (!p) throw SchemaError(file + ": unparseable timestamp at data row " + std::to_string(row));
    return static_cast<double>((*p - *origin).total_seconds()) / 3600.0;
  };

  RealDataset ds;
  ds.report.iso_time = iso;
  std::set<SpaceTimePoint> lf_seen;
  for (std::size_t k = 0; k < lfc.rows.size(); ++k) {
    const auto& r = lfc.rows[k];
    const long row = static_cast<long>(k) + 1;
    if (r.size() != 4) throw SchemaError(lf_path + ": wrong number of fields at data row " + std::to_string(row));
    LfRow x{cell(r, 0, lf_path, row, "s1"), cell(r, 1, lf_path, row, "s2"), time_cell(r, 2, lf_path, row),
            cell(r, 3, lf_path, row, "y_L")};
    if (!lf_seen.insert({x.s1, x.s2, x.t}).second) {
      ++ds.report.duplicate_lf;
      continue;
    }
    ds.lf.push_back(x);
  }

  std::map<int, Location> station_at;
  std::set<std::pair<int, double>> hf_seen;
  for (std::size_t k = 0; k < hfc.rows.size(); ++k) {
    const auto& r = hfc.rows[k];
    const long row = static_cast<long>(k) + 1;
    if (r.size() != 5) throw SchemaError(hf_path + ": wrong number of fields at data row " + std::to_string(row));
    const double id = cell(r, 0, hf_path, row, "station_id");
    if (id != std::floor(id)) throw SchemaError(hf_path + ": non-integer station_id at data row " + std::to_string(row));
    HfRow x{static_cast<int>(id), cell(r, 1, hf_path, row, "s1"), cell(r, 2, hf_path, row, "s2"),
            time_cell(r, 3, hf_path, row), cell(r, 4, hf_path, row, "y_H")};
    const auto [it, fresh] = station_at.emplace(x.station, Location{x.s1, x.s2});
    if (!fresh && !(it->second == Location{x.s1, x.s2})) {
      throw SchemaError(hf_path + ": station " + std::to_string(x.station) + " changes coordinates at data row " +
                        std::to_string(row));
    }
    if (!hf_seen.insert({x.station, x.t}).second) {
      ++ds.report.duplicate_hf;
      continue;
    }
    ds.hf.push_back(x);
  }

  // nearest LF location; the sorted scan with strict '<' keeps the lower (s1, s2) on ties
  std::set<Location> cells;
  for (const auto& r : ds.lf) cells.insert({r.s1, r.s2});
  for (const auto& [id, where] : station_at) {
    StationMatch m{id, where, *cells.begin(), std::numeric_limits<double>::infinity()};
    for (const auto& c : cells) {
      const double d = std::hypot(c.s1 - where.s1, c.s2 - where.s2);
      if (d < m.distance) {
        m.distance = d;
        m.lf_cell = c;
      }
    }
    ds.matches.push_back(m);
  }
  for (const auto& r : ds.hf) {
    const auto& c = ds.match_of(r.station).lf_cell;
    if (!lf_seen.contains({c.s1, c.s2, r.t})) ++ds.report.hf_without_lf;
  }
  return ds;
}

/// Writes station_id,s1,s2,lf_s1,lf_s2,distance.
inline Table matching_table(const RealDataset& ds) {
  Table t{{"station_id", "s1", "s2", "lf_s1", "lf_s2", "distance"}, {}};
  for (const auto& m : ds.matches) {
    t.add({long(m.station), m.where.s1, m.where.s2, m.lf_cell.s1, m.lf_cell.s2, m.distance});
  }
  return t;
}

/// CSV tables in the ingest schema, for simulator output.
inline Table lf_table(const MfData& d) {
  Table t{{"s1", "s2", "t", "y_L"}, {}};
  for (int r = 0; r < d.n_lf(); ++r) t.add({d.lf[r].s1, d.lf[r].s2, d.lf[r].t, d.y_lf(r)});
  return t;
}

}  // namespace mfgp::harness
