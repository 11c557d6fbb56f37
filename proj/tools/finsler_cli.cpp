#include <chrono>
#include <map>
#include <iostream>

#include <CLI11.hpp>

#include "finsler/io.hpp"
#include "finsler/validate.hpp"

namespace fs = std::filesystem;
using namespace finsler;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kConfigError = 2, kNumericalFailure = 3, kHypothesisViolated = 4 };

struct Options {
  std::string config;
  std::string out = ".";
  int threads = 1;
  bool strict = false;
  std::uint64_t seed = 1;
};

struct Outcome {
  RunManifest manifest;
  int code = kOk;
};

Outcome run_tensors(const RunConfig& rc, const Options& opt, const fs::path& out) {
  const MetricSpec& spec = rc.metric;
  auto sec = parse_tensors(rc);
  auto points = read_points(sec.points, spec.dim());
  double t_max = 0, u_max = 0, divc_max = 0, alpha_max = 1;
  std::vector<CurvatureReport> reports(points.size());
  std::vector<std::pair<double, double>> extra(points.size());
  detail::parallel_for(points.size(), opt.threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& p = points[i];
      reports[i] = curvature_report(spec, p.x, p.Y, p.W, sec.ks, sec.alpha_resolution);
      double antisym = (reports[i].t.T + t_tensor(spec, p.x, p.W, p.Y).T).norm();
      extra[i] = {antisym, fundamental_tensor(spec, p.x, p.Y).cartan.max_abs()};
    }
  });
  CsvWriter csv(out / "tensors.csv", curvature_columns(spec.dim(), sec.ks));
  for (std::size_t i = 0; i < points.size(); ++i) {
    csv.row(curvature_row(i, reports[i], extra[i].first, extra[i].second));
    t_max = std::max(t_max, reports[i].t.dual_norm);
    u_max = std::max(u_max, reports[i].u.norm);
    divc_max = std::max(divc_max, reports[i].divC_norm);
    alpha_max = std::max(alpha_max, reports[i].misalignment.value);
  }
  Outcome o;
  o.manifest.outputs = {"tensors.csv"};
  o.manifest.summary = {{"rows", points.size()}, {"max_t_norm", t_max}, {"max_u_norm", u_max}, {"max_divc_norm", divc_max}, {"max_misalignment", alpha_max}};
  return o;
}

Outcome run_solve(const RunConfig& rc, const Options& opt, const fs::path& out) {
  const MetricSpec& spec = rc.metric;
  auto sec = parse_solve(rc);
  sec.solver.threads = opt.threads;
  GridDomain dom(sec.box, sec.resolution);
  BoundaryData data = [&](const Vec& x) { return sec.boundary(as_span(x)); };
  ScalarField u = solve_dirichlet(dom, spec, data, sec.solver);
  u.meta.spec_hash = spec_hash(rc);
  write_field_csv(out / "field.csv", u);
  ScalarField h = harmonic_extension(dom, data);
  double gap = 0;
  for (std::size_t i = 0; i < dom.size(); ++i) gap = std::max(gap, std::abs(u.values[i] - h.values[i]));
  Outcome o;
  o.manifest.outputs = {"field.csv"};
  o.manifest.summary = {{"status", to_string(u.meta.status)}, {"iterations", u.meta.iterations}, {"energy", u.meta.energy},
                        {"residual", u.meta.residual}, {"harmonic_gap", gap}, {"resolution", sec.resolution}};
  if (u.meta.status != SolveStatus::Converged) {
    o.manifest.warnings.push_back("solver stopped with status " + to_string(u.meta.status));
    o.code = kNumericalFailure;
  }
  return o;
}

Outcome run_liouville(const RunConfig& rc, const Options& opt, const fs::path& out) {
  const MetricSpec& spec = rc.metric;
  auto sec = parse_liouville(rc);
  sec.config.solver.threads = opt.threads;
  auto res = liouville_experiment(spec, sec.x0, sec.radii, sec.oscillation, sec.config);
  CsvWriter csv(out / "liouville.csv", liouville_columns(spec.dim()));
  Json records = Json::array();
  bool converged = true;
  for (const auto& r : res.records) {
    csv.row(liouville_row(r));
    converged = converged && r.solve.status == SolveStatus::Converged;
    records.push_back({{"a", r.a}, {"center_energy", r.center_energy}, {"empirical_C", r.empirical_C}, {"h_max", r.h_max}});
  }
  Outcome o;
  o.manifest.outputs = {"liouville.csv"};
  Json slope = nullptr;
  if (res.records.size() >= 3) slope = json_number(decay_slope(res.records));
  o.manifest.summary = {{"records", records},
                        {"decay_slope", slope},
                        {"curvature_hypothesis",
                         {{"violated", res.hypothesis.violated},
                          {"min_mixed_ricci", json_number(res.hypothesis.min_mixed_ricci)},
                          {"K0", res.hypothesis.K0},
                          {"samples", res.hypothesis.samples}}}};
  if (!converged) {
    o.manifest.warnings.push_back("a Liouville solve did not converge");
    o.code = kNumericalFailure;
  }
  if (res.hypothesis.violated) {
    o.manifest.warnings.push_back("CurvatureHypothesisViolated: sampled mixed weighted Ricci curvature is negative");
    if (opt.strict && o.code == kOk) o.code = kHypothesisViolated;
  }
  return o;
}

Outcome run_validate(const RunConfig& rc, const Options& opt, const fs::path& out) {
  auto checks = run_invariants(rc.metric, parse_validate(rc), opt.seed);
  CsvWriter csv(out / "validate.csv", {"check", "value", "tol", "pass"});
  Outcome o;
  std::size_t failed = 0;
  for (const auto& c : checks) {
    csv.row({c.name, fmt_double(c.value), fmt_double(c.tol), c.pass ? "1" : "0"});
    if (!c.pass) {
      ++failed;
      o.manifest.warnings.push_back("check failed: " + c.name);
    }
  }
  o.manifest.outputs = {"validate.csv"};
  o.manifest.summary = {{"checks", checks.size()}, {"failed", failed}, {"seed", opt.seed}};
  if (failed) o.code = kNumericalFailure;
  return o;
}

Outcome run_geodesic(const RunConfig& rc, const Options&, const fs::path& out) {
  auto sec = parse_geodesic(rc);
  auto path = integrate_geodesic(rc.metric, sec.x0, sec.y0, sec.t_max, sec.step);
  write_geodesic_csv(out / "geodesic.csv", rc.metric, path);
  Outcome o;
  o.manifest.outputs = {"geodesic.csv"};
  o.manifest.summary = {{"samples", path.samples.size()}, {"F_drift", path.drift}, {"t_max", sec.t_max}};
  return o;
}

int dispatch(const std::string& name, const Options& opt) {
  using Runner = Outcome (*)(const RunConfig&, const Options&, const fs::path&);
  static const std::map<std::string, Runner> runners = {
      {"tensors", run_tensors}, {"solve", run_solve}, {"liouville", run_liouville}, {"validate", run_validate}, {"geodesic", run_geodesic}};
  const auto start = std::chrono::steady_clock::now();
  try {
    RunConfig rc = load_config(opt.config);
    fs::path out(opt.out);
    fs::create_directories(out);
    Outcome o = runners.at(name)(rc, opt, out);
    o.manifest.subcommand = name;
    o.manifest.config_digest = digest(rc.raw.dump());
    o.manifest.spec_hash = spec_hash(rc);
    o.manifest.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.manifest.outputs.push_back("manifest.json");
    write_manifest(out / "manifest.json", o.manifest, rc.raw);
    for (const auto& w : o.manifest.warnings) std::cerr << "warning: " << w << '\n';
    return o.code;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::ConfigParse || e.code() == ErrorCode::BadPointsRow ? kConfigError : kNumericalFailure;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finsler metric-measure geometry and exponentially harmonic functions"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--config", opt.config, "JSON run configuration")->required();
  app.add_option("--out", opt.out, "output directory")->capture_default_str();
  app.add_option("--threads", opt.threads, "worker threads")->check(CLI::Range(1, 1024))->capture_default_str();
  app.add_flag("--strict", opt.strict, "treat curvature hypothesis violations as failures");
  app.add_option("--seed", opt.seed, "seed for sampled checks")->capture_default_str();
  for (const char* name : {"tensors", "solve", "liouville", "validate", "geodesic"}) app.add_subcommand(name)->fallthrough();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  return dispatch(app.get_subcommands().front()->get_name(), opt);
}
