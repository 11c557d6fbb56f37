#pragma once

// JSON run configuration: metric spec, measure and per-subcommand sections.
// Every parse failure is an Error with code ConfigParse naming the field.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "finsler/liouville.hpp"

namespace finsler {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

[[noreturn]] inline void config_error(const std::string& field, const std::string& msg) { fail(ErrorCode::ConfigParse, field + ": " + msg); }

namespace cfg {

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline const Json& require(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) config_error(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) config_error(join(path, key), "missing");
  return *it;
}

inline double number(const Json& v, const std::string& field) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
  }
  config_error(field, "expected a number");
}

inline double number(const Json& j, const std::string& key, const std::string& path, double fallback) {
  return j.contains(key) ? number(j[key], join(path, key)) : fallback;
}

inline int integer(const Json& j, const std::string& key, const std::string& path, int fallback) {
  if (!j.contains(key)) return fallback;
  const Json& v = j[key];
  if (!v.is_number_integer()) config_error(join(path, key), "expected an integer");
  return v.get<int>();
}

inline std::string string(const Json& v, const std::string& field) {
  if (!v.is_string()) config_error(field, "expected a string");
  return v.get<std::string>();
}

inline Vec vec(const Json& v, const std::string& field, int n) {
  if (!v.is_array()) config_error(field, "expected an array of numbers");
  if (n >= 0 && static_cast<int>(v.size()) != n) config_error(field, "expected " + std::to_string(n) + " entries");
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = number(v[i], field + "[" + std::to_string(i) + "]");
  return out;
}

inline std::vector<double> list(const Json& v, const std::string& field) {
  Vec x = vec(v, field, -1);
  return {x.data(), x.data() + x.size()};
}

inline Expr expr(const Json& v, const std::string& field, int n) {
  if (v.is_number()) return Expr::parse(v.dump(), n);
  try {
    return Expr::parse(string(v, field), n);
  } catch (const Error& e) {
    config_error(field, e.what());
  }
}

inline std::vector<Expr> exprs(const Json& v, const std::string& field, int n, std::size_t count) {
  if (!v.is_array() || v.size() != count) config_error(field, "expected " + std::to_string(count) + " expressions");
  std::vector<Expr> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(expr(v[i], field + "[" + std::to_string(i) + "]", n));
  return out;
}

inline Box box(const Json& v, const std::string& field, int n) {
  Box b{vec(require(v, "lo", field), join(field, "lo"), n), vec(require(v, "hi", field), join(field, "hi"), n)};
  for (int i = 0; i < n; ++i)
    if (!(b.lo[i] < b.hi[i])) config_error(field, "lo must be below hi on every axis");
  return b;
}

/// Metric without chart or measure, for use as a conformal base.
inline MetricSpec family(const Json& j, const std::string& path, int n, const Box& chart) {
  const std::string fam = string(require(j, "family", path), join(path, "family"));
  const auto nn = static_cast<std::size_t>(n);
  if (fam == "euclidean") return MetricSpec::euclidean(n, chart);
  if (fam == "riemannian") return MetricSpec::riemannian(n, exprs(require(j, "a", path), join(path, "a"), n, nn * nn), chart);
  if (fam == "randers")
    return MetricSpec::randers(n, exprs(require(j, "a", path), join(path, "a"), n, nn * nn), exprs(require(j, "b", path), join(path, "b"), n, nn), chart);
  if (fam == "conformal") {
    MetricSpec base = family(require(j, "base", path), join(path, "base"), n, chart);
    return MetricSpec::conformal(base, expr(require(j, "phi", path), join(path, "phi"), n));
  }
  config_error(join(path, "family"), "unknown family '" + fam + "'");
}

}  // namespace cfg

/// Reads the "metric" object: family, dim, chart, coefficients and measure.
inline MetricSpec parse_metric(const Json& j, const std::string& path = "metric") {
  const Json& d = cfg::require(j, "dim", path);
  if (!d.is_number_integer() || d.get<int>() < 1 || d.get<int>() > 4) config_error(cfg::join(path, "dim"), "expected an integer in 1..4");
  const int n = d.get<int>();
  Box chart = cfg::box(cfg::require(j, "chart", path), cfg::join(path, "chart"), n);
  MetricSpec spec = cfg::family(j, path, n, chart);
  if (j.contains("measure")) {
    const Json& m = j["measure"];
    const std::string mp = cfg::join(path, "measure");
    const std::string kind = cfg::string(cfg::require(m, "kind", mp), cfg::join(mp, "kind"));
    if (kind == "density") {
      spec = spec.with_measure(Measure::density(cfg::expr(cfg::require(m, "sigma", mp), cfg::join(mp, "sigma"), n)));
    } else if (kind != "lebesgue") {
      config_error(cfg::join(mp, "kind"), "expected 'lebesgue' or 'density'");
    }
  }
  return spec;
}

inline SolverConfig parse_solver_config(const Json& j, const std::string& path, SolverConfig base = {}) {
  base.tol = cfg::number(j, "tol", path, base.tol);
  base.max_iter = cfg::integer(j, "max_iter", path, base.max_iter);
  if (!(base.tol > 0.0)) config_error(cfg::join(path, "tol"), "must be positive");
  if (base.max_iter < 1) config_error(cfg::join(path, "max_iter"), "must be at least 1");
  return base;
}

struct SolveSection {
  Box box;
  int resolution = 65;
  Expr boundary;
  SolverConfig solver;
};

struct LiouvilleSection {
  Vec x0;
  std::vector<double> radii;
  double oscillation = 1.0;
  LiouvilleConfig config;
};

struct TensorsSection {
  std::filesystem::path points;
  std::vector<WeightK> ks;
  int alpha_resolution = 32;
};

struct GeodesicSection {
  Vec x0, y0;
  double t_max = 1.0;
  double step = 1e-3;
};

struct ValidateSection {
  int samples = 20;
  std::optional<double> flag_curvature;
  double tol = 1e-6;
};

struct RunConfig {
  Json raw;
  std::filesystem::path dir;
  MetricSpec metric;

  const Json& section(const std::string& name) const { return cfg::require(raw, name, ""); }
};

inline RunConfig parse_config(const Json& raw, std::filesystem::path dir = {}) {
  if (!raw.is_object()) config_error("<root>", "expected a JSON object");
  if (raw.contains("schema_version")) {
    const Json& v = raw["schema_version"];
    if (!v.is_number_integer() || v.get<int>() != kSchemaVersion) config_error("schema_version", "unsupported version");
  }
  return RunConfig{raw, std::move(dir), parse_metric(cfg::require(raw, "metric", ""))};
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) config_error(path.string(), "cannot open config file");
  Json raw;
  try {
    raw = Json::parse(in);
  } catch (const Json::exception& e) {
    config_error(path.string(), e.what());
  }
  return parse_config(raw, path.parent_path());
}

inline SolveSection parse_solve(const RunConfig& rc) {
  const Json& j = rc.section("solve");
  const int n = rc.metric.dim();
  SolveSection s{j.contains("box") ? cfg::box(j["box"], "solve.box", n) : rc.metric.chart(), cfg::integer(j, "resolution", "solve", 65),
                 cfg::expr(cfg::require(j, "boundary", "solve"), "solve.boundary", n), parse_solver_config(j, "solve")};
  if (s.resolution < 9) config_error("solve.resolution", "must be at least 9");
  for (int i = 0; i < n; ++i)
    if (s.box.lo[i] < rc.metric.chart().lo[i] || s.box.hi[i] > rc.metric.chart().hi[i]) config_error("solve.box", "must lie inside the metric chart");
  return s;
}

inline LiouvilleSection parse_liouville(const RunConfig& rc) {
  const Json& j = rc.section("liouville");
  const int n = rc.metric.dim();
  LiouvilleSection s;
  s.x0 = j.contains("x0") ? cfg::vec(j["x0"], "liouville.x0", n) : Vec(Vec::Zero(n));
  s.radii = cfg::list(cfg::require(j, "radii", "liouville"), "liouville.radii");
  if (s.radii.empty()) config_error("liouville.radii", "must be nonempty");
  for (std::size_t i = 0; i < s.radii.size(); ++i)
    if (!(s.radii[i] > 0.0) || (i > 0 && !(s.radii[i] > s.radii[i - 1]))) config_error("liouville.radii", "must be positive and strictly increasing");
  s.oscillation = cfg::number(j, "oscillation", "liouville", 1.0);
  if (!(s.oscillation >= 0.0)) config_error("liouville.oscillation", "must be nonnegative");
  s.config.resolution = cfg::integer(j, "resolution", "liouville", s.config.resolution);
  if (s.config.resolution < 9) config_error("liouville.resolution", "must be at least 9");
  s.config.C = cfg::number(j, "C", "liouville", s.config.C);
  s.config.solver = parse_solver_config(j, "liouville", s.config.solver);
  return s;
}

inline TensorsSection parse_tensors(const RunConfig& rc) {
  const Json& j = rc.section("tensors");
  TensorsSection s;
  std::filesystem::path p = cfg::string(cfg::require(j, "points", "tensors"), "tensors.points");
  s.points = p.is_absolute() ? p : rc.dir / p;
  if (j.contains("k")) {
    for (double k : cfg::list(j["k"], "tensors.k")) s.ks.push_back(WeightK{k});
  } else {
    s.ks = {WeightK{static_cast<double>(rc.metric.dim())}, WeightK{rc.metric.dim() + 1.0}, WeightK::infinity()};
  }
  for (const auto& k : s.ks)
    if (k.k < rc.metric.dim()) config_error("tensors.k", "weights must be at least the dimension");
  s.alpha_resolution = cfg::integer(j, "misalignment_resolution", "tensors", 32);
  if (s.alpha_resolution < 16) config_error("tensors.misalignment_resolution", "must be at least 16");
  return s;
}

inline GeodesicSection parse_geodesic(const RunConfig& rc) {
  const Json& j = rc.section("geodesic");
  const int n = rc.metric.dim();
  GeodesicSection s{cfg::vec(cfg::require(j, "x0", "geodesic"), "geodesic.x0", n), cfg::vec(cfg::require(j, "y0", "geodesic"), "geodesic.y0", n),
                    cfg::number(j, "t_max", "geodesic", 1.0), cfg::number(j, "step", "geodesic", 1e-3)};
  if (!(s.t_max > 0.0)) config_error("geodesic.t_max", "must be positive");
  if (!(s.step > 0.0)) config_error("geodesic.step", "must be positive");
  return s;
}

inline ValidateSection parse_validate(const RunConfig& rc) {
  ValidateSection s;
  if (!rc.raw.contains("validate")) return s;
  const Json& j = rc.raw["validate"];
  s.samples = cfg::integer(j, "samples", "validate", s.samples);
  if (s.samples < 1) config_error("validate.samples", "must be at least 1");
  if (j.contains("flag_curvature")) s.flag_curvature = cfg::number(j["flag_curvature"], "validate.flag_curvature");
  s.tol = cfg::number(j, "tol", "validate", s.tol);
  return s;
}

}  // namespace finsler
