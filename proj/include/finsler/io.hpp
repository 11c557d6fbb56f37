#pragma once

// CSV and JSON artifacts. CSV files carry a schema_version column and print
// doubles with 17 significant digits so values round-trip exactly.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "finsler/config.hpp"

namespace finsler {

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_weighted(const WeightedValue& w) { return w.is_finite() ? fmt_double(w.value) : "-inf"; }

inline std::string weight_label(const WeightK& k) {
  if (k.is_infinite()) return "inf";
  std::string s = fmt_double(k.k);
  for (char& c : s)
    if (c == '.') c = 'p';
  return s;
}

/// Fixed-column CSV writer; the schema_version column is prepended.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> columns) : out_(path), width_(columns.size()) {
    if (!out_) fail(ErrorCode::InvalidArgument, "cannot write " + path.string());
    out_ << "schema_version";
    for (const auto& c : columns) out_ << ',' << c;
    out_ << '\n';
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != width_) fail(ErrorCode::InvalidArgument, "CSV row width mismatch");
    out_ << kSchemaVersion;
    for (const auto& c : cells) out_ << ',' << c;
    out_ << '\n';
  }

 private:
  std::ofstream out_;
  std::size_t width_;
};

inline std::vector<std::string> indexed(const std::string& prefix, int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

inline void append(std::vector<std::string>& cells, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) cells.push_back(fmt_double(v[i]));
}

// ---------------------------------------------------------------------------
// Points files: one (x, Y, W) sample per line, 3n comma- or space-separated
// numbers. Blank lines and lines starting with '#' are skipped.

struct SamplePoint {
  Vec x, Y, W;
  int line = 0;
};

inline std::vector<SamplePoint> read_points(std::istream& in, int n) {
  std::vector<SamplePoint> out;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    auto first = text.find_first_not_of(" \t\r");
    if (first == std::string::npos || text[first] == '#') continue;
    for (char& c : text)
      if (c == ',') c = ' ';
    std::istringstream ss(text);
    std::vector<double> vals;
    std::string tok;
    while (ss >> tok) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        fail(ErrorCode::BadPointsRow, "line " + std::to_string(line) + ": '" + tok + "' is not a number");
      }
    }
    if (static_cast<int>(vals.size()) != 3 * n)
      fail(ErrorCode::BadPointsRow, "line " + std::to_string(line) + ": expected " + std::to_string(3 * n) + " values, got " + std::to_string(vals.size()));
    SamplePoint p{Vec(n), Vec(n), Vec(n), line};
    for (int i = 0; i < n; ++i) {
      p.x[i] = vals[static_cast<std::size_t>(i)];
      p.Y[i] = vals[static_cast<std::size_t>(n + i)];
      p.W[i] = vals[static_cast<std::size_t>(2 * n + i)];
    }
    for (double v : vals)
      if (!std::isfinite(v)) fail(ErrorCode::BadPointsRow, "line " + std::to_string(line) + ": non-finite value");
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<SamplePoint> read_points(const std::filesystem::path& path, int n) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::BadPointsRow, "cannot open points file " + path.string());
  return read_points(in, n);
}

// ---------------------------------------------------------------------------
// Tables

inline std::vector<std::string> curvature_columns(int n, const std::vector<WeightK>& ks) {
  std::vector<std::string> c = {"row"};
  for (const char* p : {"x", "Y", "W"})
    for (auto& s : indexed(p, n)) c.push_back(s);
  for (const char* s : {"ricci", "s_curvature", "s_dot"}) c.push_back(s);
  for (const auto& k : ks) c.push_back("wric_k" + weight_label(k));
  for (const auto& k : ks) c.push_back("mixed_wric_k" + weight_label(k));
  for (const char* s : {"t_norm", "t_antisymmetry", "u_norm", "divc_norm", "misalignment", "cartan_max"}) c.push_back(s);
  return c;
}

/// `t_antisymmetry` is |T(Y, W) + T(W, Y)|; `cartan_max` is max |C_ijk(x, Y)|.
inline std::vector<std::string> curvature_row(std::size_t row, const CurvatureReport& r, double t_antisymmetry, double cartan_max) {
  std::vector<std::string> c = {std::to_string(row)};
  append(c, r.x);
  append(c, r.Y);
  append(c, r.W);
  for (double v : {r.ricci, r.s_curv, r.s_dot}) c.push_back(fmt_double(v));
  for (const auto& [k, w] : r.wric) c.push_back(fmt_weighted(w));
  for (const auto& [k, w] : r.mixed_wric) c.push_back(fmt_weighted(w));
  for (double v : {r.t.dual_norm, t_antisymmetry, r.u.norm, r.divC_norm, r.misalignment.value, cartan_max}) c.push_back(fmt_double(v));
  return c;
}

inline void write_field_csv(const std::filesystem::path& path, const ScalarField& f) {
  const int n = f.domain.dim();
  std::vector<std::string> cols = indexed("i", n);
  for (auto& s : indexed("x", n)) cols.push_back(s);
  cols.push_back("u");
  CsvWriter w(path, cols);
  for (std::size_t idx = 0; idx < f.values.size(); ++idx) {
    std::vector<std::string> cells;
    for (int m : f.domain.multi(idx)) cells.push_back(std::to_string(m));
    append(cells, f.domain.point(idx));
    cells.push_back(fmt_double(f.values[idx]));
    w.row(cells);
  }
}

/// Reads nodal values written by write_field_csv back onto `domain`.
inline ScalarField read_field_csv(const std::filesystem::path& path, const GridDomain& domain) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::InvalidArgument, "cannot open " + path.string());
  ScalarField f(domain);
  std::string line;
  std::getline(in, line);
  std::size_t count = 0;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const auto n = static_cast<std::size_t>(domain.dim());
    if (cells.size() != 2 + 2 * n) fail(ErrorCode::InvalidArgument, "malformed field row");
    std::vector<int> m;
    for (std::size_t a = 0; a < n; ++a) m.push_back(std::stoi(cells[1 + a]));
    f.values[domain.index(m)] = std::stod(cells.back());
    ++count;
  }
  if (count != domain.size()) fail(ErrorCode::InvalidArgument, "field file does not cover the grid");
  return f;
}

inline std::vector<std::string> liouville_columns(int n) {
  std::vector<std::string> c = {"a", "b", "h_max"};
  for (auto& s : indexed("argmax_x", n)) c.push_back(s);
  for (const char* s : {"center_energy", "empirical_C", "bound", "estimate_holds", "iterations", "residual", "status"}) c.push_back(s);
  return c;
}

inline std::vector<std::string> liouville_row(const LiouvilleRecord& r) {
  std::vector<std::string> c = {fmt_double(r.a), fmt_double(r.b), fmt_double(r.h_max)};
  append(c, r.argmax);
  c.push_back(fmt_double(r.center_energy));
  c.push_back(fmt_double(r.empirical_C));
  c.push_back(fmt_double(r.bound));
  c.push_back(r.estimate_holds ? "1" : "0");
  c.push_back(std::to_string(r.solve.iterations));
  c.push_back(fmt_double(r.solve.residual));
  c.push_back(std::string(to_string(r.solve.status)));
  return c;
}

inline void write_geodesic_csv(const std::filesystem::path& path, const MetricSpec& spec, const GeodesicPath& p) {
  const int n = spec.dim();
  std::vector<std::string> cols = {"t"};
  for (auto& s : indexed("x", n)) cols.push_back(s);
  for (auto& s : indexed("v", n)) cols.push_back(s);
  cols.push_back("F");
  cols.push_back("F_drift");
  CsvWriter w(path, cols);
  const double F0 = eval_metric(spec, p.samples.front().x, p.samples.front().v);
  for (const auto& s : p.samples) {
    std::vector<std::string> cells = {fmt_double(s.t)};
    append(cells, s.x);
    append(cells, s.v);
    const double F = eval_metric(spec, s.x, s.v);
    cells.push_back(fmt_double(F));
    cells.push_back(fmt_double(std::abs(F - F0)));
    w.row(cells);
  }
}

// ---------------------------------------------------------------------------
// Digests and manifests

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string digest(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

inline std::string spec_hash(const RunConfig& rc) { return digest(rc.raw.at("metric").dump()); }

struct RunManifest {
  std::string subcommand;
  std::string config_digest;
  std::string spec_hash;
  double wall_time = 0.0;
  std::vector<std::string> outputs;
  Json summary = Json::object();
  std::vector<std::string> warnings;

  Json to_json(const Json& config) const {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["subcommand"] = subcommand;
#ifdef FINSLER_VERSION
    j["library_version"] = FINSLER_VERSION;
#else
    j["library_version"] = "unknown";
#endif
    j["config_digest"] = config_digest;
    j["spec_hash"] = spec_hash;
    j["config"] = config;
    j["wall_time_s"] = wall_time;
    j["outputs"] = outputs;
    j["summary"] = summary;
    j["warnings"] = warnings;
    return j;
  }
};

inline void write_manifest(const std::filesystem::path& path, const RunManifest& m, const Json& config) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::InvalidArgument, "cannot write " + path.string());
  out << m.to_json(config).dump(2) << '\n';
}

/// JSON number, with non-finite values as strings.
inline Json json_number(double v) {
  if (std::isfinite(v)) return v;
  return fmt_double(v);
}

}  // namespace finsler
