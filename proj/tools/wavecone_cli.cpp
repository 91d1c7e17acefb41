// wavecone: experiment runner and report generator.
//
//   wavecone run <config.json> [--override k=v ...] [--jobs N] [--seed S]
//   wavecone report <run-dir>
//
// Configs are fail-closed JSON: unknown keys anywhere are schema errors
// (exit 2). Runtime failures exit 1 with diagnostics; a run exits 0 iff
// every in-config assertion passes. Each run directory is self-describing:
// manifest.json echoes the effective config, the seed, and the summary
// numbers next to the CSV/snapshot artifacts.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

#include "wavecone/detector/pipeline.hpp"
#include "wavecone/scattering/span.hpp"
#include "wavecone/solver/cascade.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wavecone;

namespace {

// ---------------------------------------------------------------------------
// Schema plumbing
// ---------------------------------------------------------------------------

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check_keys(const json& j, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw SchemaError(ctx + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw SchemaError(ctx + ": unknown key \"" + key + "\"");
  }
}

const json& require(const json& j, const std::string& ctx, const char* key) {
  auto it = j.find(key);
  if (it == j.end())
    throw SchemaError(ctx + ": missing required key \"" + key + "\"");
  return *it;
}

template <typename T>
T get_or(const json& j, const char* key, T def) {
  auto it = j.find(key);
  if (it == j.end()) return def;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw SchemaError(std::string("key \"") + key + "\": wrong type");
  }
}

template <int N>
Vec<N> parse_vec(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != N)
    throw SchemaError(ctx + ": expected an array of " + std::to_string(N) +
                      " numbers");
  Vec<N> v{};
  for (int i = 0; i < N; ++i) {
    if (!j[i].is_number()) throw SchemaError(ctx + ": expected numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

// Dotted-path override: "--override grid.n=129".
void apply_override(json& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw SchemaError("override \"" + kv + "\": expected key=value");
  const std::string path = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // bare strings are allowed unquoted
  }
  json* node = &cfg;
  size_t pos = 0;
  while (true) {
    const auto dot = path.find('.', pos);
    const std::string part = path.substr(pos, dot - pos);
    if (part.empty())
      throw SchemaError("override \"" + kv + "\": empty path segment");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    pos = dot + 1;
  }
}

// ---------------------------------------------------------------------------
// Artifact writers (deterministic formatting)
// ---------------------------------------------------------------------------

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class Csv {
 public:
  Csv(const fs::path& path, const std::vector<std::string>& header)
      : out_(path) {
    if (!out_) throw std::runtime_error("cannot open " + path.string());
    for (size_t i = 0; i < header.size(); ++i)
      out_ << (i ? "," : "") << header[i];
    out_ << "\n";
  }
  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i)
      out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

void write_series(const fs::path& path, const std::string& xname,
                  const std::vector<double>& x, const std::string& yname,
                  const std::vector<double>& y) {
  Csv csv(path, {xname, yname});
  const size_t n = std::min(x.size(), y.size());
  for (size_t i = 0; i < n; ++i) csv.row({fmt(x[i]), fmt(y[i])});
}

// ---------------------------------------------------------------------------
// Config -> domain objects
// ---------------------------------------------------------------------------

template <int N>
MetricSpec<N> make_metric(const json& m) {
  check_keys(m, "metric",
             {"preset", "half_extent", "t_lo", "t_hi", "lambda", "amplitude",
              "center", "width", "time_independent"});
  const std::string preset = require(m, "metric", "preset").get<std::string>();
  const double he = get_or(m, "half_extent", 10.0);
  const double tlo = get_or(m, "t_lo", -10.0);
  const double thi = get_or(m, "t_hi", 30.0);
  if (preset == "minkowski") return minkowski<N>(he, tlo, thi);
  if (preset == "conformal-minkowski")
    return conformal_minkowski<N>(
        require(m, "metric", "lambda").get<double>(), he, tlo, thi);
  if (preset == "bump-perturbed")
    return bump_perturbed<N>(
        require(m, "metric", "amplitude").get<double>(),
        parse_vec<N>(require(m, "metric", "center"), "metric.center"),
        require(m, "metric", "width").get<double>(),
        get_or(m, "time_independent", false), he, tlo, thi);
  if (preset == "ultrastatic-sphere") {
    if constexpr (N == 3)
      return ultrastatic_sphere(tlo, thi);
    else
      throw SchemaError("metric: ultrastatic-sphere requires dim 2");
  }
  throw SchemaError("metric: unknown preset \"" + preset + "\"");
}

template <int D>
PipelineConfig<D> make_pipeline_config(const json& cfg) {
  PipelineConfig<D> pc;
  if (cfg.contains("grid")) {
    const json& g = cfg["grid"];
    check_keys(g, "grid", {"n", "extent", "t0", "t1"});
    pc.n = get_or(g, "n", pc.n);
    pc.extent = get_or(g, "extent", pc.extent);
    pc.t0 = get_or(g, "t0", pc.t0);
    pc.t1 = get_or(g, "t1", pc.t1);
  }
  if (cfg.contains("pipeline")) {
    const json& p = cfg["pipeline"];
    check_keys(p, "pipeline",
               {"freq", "cone_h", "a", "theta_min_deg", "theta_det",
                "band_rel_lo", "band_rel_hi", "s_tol", "reg_ratio",
                "null_margin", "persist_floor", "smooth_n"});
    pc.freq = get_or(p, "freq", pc.freq);
    pc.cone_h = get_or(p, "cone_h", pc.cone_h);
    pc.a = get_or(p, "a", pc.a);
    if (p.contains("theta_min_deg"))
      pc.theta_min = p["theta_min_deg"].get<double>() * M_PI / 180.0;
    pc.theta_det = get_or(p, "theta_det", pc.theta_det);
    pc.band_rel_lo = get_or(p, "band_rel_lo", pc.band_rel_lo);
    pc.band_rel_hi = get_or(p, "band_rel_hi", pc.band_rel_hi);
    pc.s_tol = get_or(p, "s_tol", pc.s_tol);
    pc.reg_ratio = get_or(p, "reg_ratio", pc.reg_ratio);
    pc.null_margin = get_or(p, "null_margin", pc.null_margin);
    pc.persist_floor = get_or(p, "persist_floor", pc.persist_floor);
    pc.smooth_n = get_or(p, "smooth_n", pc.smooth_n);
  }
  return pc;
}

template <int N>
ObserverCurve<N> make_observer(const json& cfg) {
  const json& o = require(cfg, "config", "observer");
  check_keys(o, "observer", {"base", "half_width"});
  return axis_observer<N>(
      parse_vec<N>(require(o, "observer", "base"), "observer.base"),
      get_or(o, "half_width", 1.4));
}

// Indexed parallel loop; results land by index so artifacts stay
// deterministic regardless of the schedule.
void parallel_for(int n, int jobs, const std::function<void(int)>& body) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::mutex err_mutex;
  std::string first_error;
  for (int w = 0; w < jobs; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          body(i);
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lk(err_mutex);
          if (first_error.empty()) first_error = e.what();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (!first_error.empty()) throw std::runtime_error(first_error);
}

struct RunContext {
  json cfg;            // effective config (after overrides)
  fs::path dir;        // run directory
  uint64_t seed = 1;
  int jobs = 1;
  json summary;        // experiment-specific numbers for the manifest
};

// ---------------------------------------------------------------------------
// geometry-selftest
// ---------------------------------------------------------------------------

template <int N>
bool run_geometry_selftest(RunContext& rc) {
  const json& params = rc.cfg.value("params", json::object());
  check_keys(params, "params",
             {"rays", "pairs", "s_max", "tol_flow", "tol_null", "tol_tau"});
  const int rays = get_or(params, "rays", 64);
  const int pairs = get_or(params, "pairs", 64);
  const double s_max = get_or(params, "s_max", 5.0);
  const double tol_flow = get_or(params, "tol_flow", 1e-6);
  const double tol_null = get_or(params, "tol_null", 1e-8);
  const double tol_tau = get_or(params, "tol_tau", 1e-6);

  const auto spec = make_metric<N>(require(rc.cfg, "config", "metric"));
  const bool flat = spec.name == "minkowski";
  std::mt19937_64 rng(rc.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  const double box = 0.25 * (spec.chart.hi[1] - spec.chart.lo[1]);
  const double t_mid = 0.5 * (spec.chart.lo[0] + spec.chart.hi[0]);
  auto sample_point = [&] {
    Vec<N> x{};
    x[0] = t_mid + 0.1 * (spec.chart.hi[0] - spec.chart.lo[0]) * uni(rng);
    for (int i = 1; i < N; ++i) x[i] = box * uni(rng);
    return x;
  };

  Csv rays_csv(rc.dir / "geometry_rays.csv",
               {"ray", "s", "pos_err", "null_residual"});
  double max_flow = 0.0, max_null = 0.0;
  for (int r = 0; r < rays; ++r) {
    const Vec<N> x0 = sample_point();
    std::array<double, N - 1> dir{};
    for (int i = 0; i < N - 1; ++i) dir[i] = uni(rng);
    const auto xi = null_from_spatial<N>(spec, x0, dir);
    const auto bc = flow(spec, xi, s_max, FlowDirection::forward);
    for (int k = 1; k <= 8; ++k) {
      const double s = std::min(bc.s_end, s_max) * k / 8.0;
      const auto cv = bc.eval(s);
      double pos_err = 0.0;
      if (flat) {
        // Hamiltonian null flow in flat space: x(s) = x0 + 2 s (1, xi').
        Vec<N> exact = x0;
        exact[0] += 2.0 * s;
        for (int i = 1; i < N; ++i) exact[i] += 2.0 * s * xi.xi[i];
        pos_err = norm(cv.x - exact);
      }
      const auto ev = spec.at(cv.x);
      const double nres = std::abs(quad_form<N>(ev.ginv, cv.xi));
      max_flow = std::max(max_flow, pos_err);
      max_null = std::max(max_null, nres);
      rays_csv.row({std::to_string(r), fmt(s), fmt(pos_err), fmt(nres)});
    }
  }

  double max_tau = 0.0;
  if (flat) {
    CausalEngine<N> eng(spec);
    Csv tau_csv(rc.dir / "geometry_tau.csv",
                {"pair", "tau", "tau_exact", "err"});
    for (int kept = 0; kept < pairs; ++kept) {
      const Vec<N> p = sample_point();
      Vec<N> q = p;
      const double dt = 0.5 + std::abs(uni(rng));
      q[0] = p[0] + dt;
      // Spatial displacement strictly inside the light cone.
      double d2 = 0.0;
      for (int i = 1; i < N; ++i) {
        const double di = 0.3 * dt * uni(rng);
        q[i] = p[i] + di;
        d2 += di * di;
      }
      const double exact = std::sqrt(dt * dt - d2);
      const auto tr = eng.time_separation(p, q);
      const double err = std::abs(tr.tau - exact);
      max_tau = std::max(max_tau, err);
      tau_csv.row({std::to_string(kept), fmt(tr.tau), fmt(exact), fmt(err)});
    }
  }

  rc.summary["max_flow_err"] = max_flow;
  rc.summary["max_null_residual"] = max_null;
  rc.summary["max_tau_err"] = max_tau;
  bool pass = max_null <= tol_null;
  if (flat) pass = pass && max_flow <= tol_flow && max_tau <= tol_tau;
  std::printf("geometry-selftest: flow %.3e  null %.3e  tau %.3e  -> %s\n",
              max_flow, max_null, max_tau, pass ? "pass" : "FAIL");
  return pass;
}

// ---------------------------------------------------------------------------
// packet-propagation
// ---------------------------------------------------------------------------

bool run_packet_propagation(RunContext& rc) {
  constexpr int D = 2, N = 3;
  const json& params = rc.cfg.value("params", json::object());
  check_keys(params, "params", {"x", "dir", "snapshot"});
  const auto spec = make_metric<N>(require(rc.cfg, "config", "metric"));
  const auto pc = make_pipeline_config<D>(rc.cfg);
  const auto mu = make_observer<N>(rc.cfg);

  const Vec<N> x = parse_vec<N>(require(params, "params", "x"), "params.x");
  const json& jd = require(params, "params", "dir");
  if (!jd.is_array() || jd.size() != D)
    throw SchemaError("params.dir: expected an array of 2 numbers");
  std::array<double, D> dir{jd[0].get<double>(), jd[1].get<double>()};
  const auto xi = null_from_spatial<N>(spec, x, dir);

  // Where should the packet cross the curve? Closest approach of the
  // forward flowout, refined on the curve parameter.
  const auto bc = flow(spec, xi, 40.0, FlowDirection::forward);
  double s_expect = 0.0, dmin = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 512; ++i) {
    const double r = -1.0 + 2.0 * i / 512.0;
    const double d = detail::min_distance_to_point<N>(bc, mu.pos(r));
    if (d < dmin) { dmin = d; s_expect = r; }
  }
  const auto grid = make_grid<D>(spec, pc.extent, pc.n, pc.t0, pc.t1);
  if (dmin > 3.0 * grid.h)
    throw std::runtime_error(
        "packet-propagation: flowout misses the observer curve (distance " +
        fmt(dmin) + ")");

  const bool want_snapshot = get_or(params, "snapshot", true);
  WaveSystem<D> sys(spec, grid);
  Orchestra<D> orch(sys);
  FieldSpec<D> f;
  f.name = "u";
  f.sources.push_back(
      {1.0, make_packet<D>(spec, xi, pc.cone_h, pc.freq, grid, pc.smooth_n)});
  const int u = orch.add_field(std::move(f));
  if (want_snapshot) orch.keep_final(u);
  orch.set_trace(mu, detail::s_of_time<N>(mu), {u});
  const auto rep = orch.run();
  if (rep.blew_up) throw std::runtime_error("packet-propagation: blow-up");

  const double dtds = detail::dt_ds<N>(mu);
  PipelineRun pr;
  pr.s_expect = s_expect;
  pr.report = detect_trace_singularities(rep.traces.at("u"),
                                         pc.band_rel_lo * pc.freq * dtds,
                                         pc.band_rel_hi * pc.freq * dtds,
                                         pc.theta_det);
  const double s_tol =
      pc.s_tol > 0.0 ? pc.s_tol : 1.5 * pc.chi_radius(grid) / dtds;
  detail::match_peak(pr, s_tol);

  write_series(rc.dir / "trace_u.csv", "s", rep.traces.at("u").s, "value",
               rep.traces.at("u").values);
  write_series(rc.dir / "scores_u.csv", "s", pr.report.s, "score",
               pr.report.energy);
  if (want_snapshot)
    snapshot::write<D>((rc.dir / "field_u_final.bin").string(), grid,
                       rep.final_fields.at("u"), grid.time_at(grid.nt));

  rc.summary["s_expect"] = s_expect;
  rc.summary["s_found"] = pr.s_found;
  rc.summary["detected"] = pr.detected;
  std::printf("packet-propagation: expect s=%.4f found s=%.4f  -> %s\n",
              s_expect, pr.s_found, pr.detected ? "pass" : "FAIL");
  return pr.detected;
}

// ---------------------------------------------------------------------------
// linearization-crosscheck
// ---------------------------------------------------------------------------

bool run_linearization_crosscheck(RunContext& rc) {
  constexpr int D = 2, N = 3;
  const json& params = rc.cfg.value("params", json::object());
  check_keys(params, "params", {"tol_rel", "tol_mixed", "freq", "cone_h"});
  const double tol_rel = get_or(params, "tol_rel", 0.05);
  const double tol_mixed = get_or(params, "tol_mixed", 1e-3);
  const double freq = get_or(params, "freq", 10.0);
  const double cone_h = get_or(params, "cone_h", 1.0);

  const auto spec = make_metric<N>(require(rc.cfg, "config", "metric"));
  const auto pc = make_pipeline_config<D>(rc.cfg);
  const auto grid = make_grid<D>(spec, pc.extent, pc.n, pc.t0, pc.t1);
  WaveSystem<D> sys(spec, grid);

  // Three packets crossing near the origin.
  auto mk = [&](double x, double y, double dx, double dy) {
    Covector<N> xi;
    xi.x = {1.25, x, y};
    xi.xi = null_from_spatial<N>(spec, xi.x, {dx, dy}).xi;
    return make_packet<D>(spec, xi, cone_h, freq, grid);
  };
  std::map<int, SourceTerm<D>> sources{{1, mk(-0.4, 0.0, 1.0, 0.0)},
                                       {2, mk(0.4, 0.1, -1.0, 0.0)},
                                       {3, mk(0.0, -0.4, 0.0, 1.0)}};

  Orchestra<D> orch(sys);
  const IndexSet J = 0b1110;
  const auto cb = cascade_add<D>(orch, sources, J);
  const auto st =
      stencil_add<D>(orch, sources, J, {{1, 1.0}, {2, 1.0}, {3, 1.0}});
  const auto st12 = stencil_add<D>(orch, sources, 0b0110, {{1, 1.0}, {2, 1.0}});
  orch.add_comparison("cross", st.combo, cb.id(J));
  orch.add_comparison("n123", cb.id(J), cb.id(J));
  orch.add_comparison("n12", st12.combo, st12.combo);
  const auto rep = orch.run();
  if (rep.blew_up) throw std::runtime_error("linearization: field blow-up");

  const double rel = rep.rel_l2("cross");
  const double mixed = rep.l2("n12") / std::max(rep.l2("n123"), 1e-300);
  Csv csv(rc.dir / "crosscheck.csv", {"comparison", "value", "tolerance"});
  csv.row({"stencil_vs_cascade_rel_l2", fmt(rel), fmt(tol_rel)});
  csv.row({"u12_over_u123", fmt(mixed), fmt(tol_mixed)});

  rc.summary["stencil_vs_cascade_rel_l2"] = rel;
  rc.summary["u12_over_u123"] = mixed;
  const bool pass = rel <= tol_rel && mixed <= tol_mixed;
  std::printf("linearization-crosscheck: rel %.3e  mixed %.3e  -> %s\n", rel,
              mixed, pass ? "pass" : "FAIL");
  return pass;
}

// ---------------------------------------------------------------------------
// boomerang
// ---------------------------------------------------------------------------

bool run_boomerang(RunContext& rc) {
  constexpr int D = 2, N = 3;
  const json& params = rc.cfg.value("params", json::object());
  check_keys(params, "params", {"pairs", "hit_fraction", "min_agree"});
  const int n_pairs = get_or(params, "pairs", 4);
  const double hit_fraction = get_or(params, "hit_fraction", 0.5);
  const int min_agree = get_or(params, "min_agree", n_pairs);

  const auto spec = make_metric<N>(require(rc.cfg, "config", "metric"));
  auto pc = make_pipeline_config<D>(rc.cfg);
  std::mt19937_64 rng(rc.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  struct Case {
    Covector<N> xi1;
    Vec<N> x0;
    ObserverCurve<N> mu;
    double t1;        // grid end time for this geometry
    bool oracle;      // geometric incidence
    double margin;    // flowout-to-x0 chart distance
  };
  std::vector<Case> cases(n_pairs);
  for (int i = 0; i < n_pairs; ++i) {
    Case c;
    // Aim every packet through a neighborhood of the spatial origin so the
    // sources, targets, and observers all stay in the grid interior.
    const double ang = M_PI * uni(rng);
    const double s_hit = 0.5 + 0.1 * uni(rng);
    Vec<N> base{0.35, -2.0 * s_hit * std::cos(ang) + 0.15 * uni(rng),
                -2.0 * s_hit * std::sin(ang) + 0.15 * uni(rng)};
    c.xi1 = null_from_spatial<N>(spec, base,
                                 {std::cos(ang), std::sin(ang)});
    const auto bc = flow(spec, c.xi1, 2.0, FlowDirection::forward);
    c.x0 = bc.eval(s_hit).x;
    const bool hit = (i + 1) <= static_cast<int>(hit_fraction * n_pairs + 0.5);
    if (!hit) c.x0[0] += 0.9 + 0.3 * uni(rng);  // interior of the cone: miss
    const double off = std::hypot(0.7, 0.35);
    c.mu = axis_observer<N>({c.x0[0] + off, c.x0[1] + 0.7, c.x0[2] - 0.35},
                            1.4);
    c.t1 = c.x0[0] + off + 1.6;
    c.margin = detail::min_distance_to_point<N>(
        flow(spec, c.xi1, 40.0, FlowDirection::forward), c.x0);
    c.oracle = c.margin <= 1e-6;
    cases[i] = std::move(c);
  }

  struct Result {
    bool verdict = false, guarded = false;
    std::string note;
  };
  std::vector<Result> results(n_pairs);
  parallel_for(n_pairs, rc.jobs, [&](int i) {
    CausalEngine<N> eng(spec);
    PipelineConfig<D> cfg = pc;
    cfg.t1 = cases[i].t1;
    std::vector<PipelineRun> log;
    try {
      results[i].verdict =
          boomerang_test<D>(eng, cases[i].mu, {cases[i].x0, {}},
                            cases[i].xi1, cfg, &log);
      results[i].guarded = !log.empty() && log.back().guarded;
    } catch (const std::exception& e) {
      results[i].note = e.what();
    }
  });

  Csv csv(rc.dir / "verdicts.csv",
          {"id", "oracle", "verdict", "agree", "margin", "x0_t", "x0_x",
           "x0_y", "note"});
  int agree = 0;
  for (int i = 0; i < n_pairs; ++i) {
    const bool ok = results[i].verdict == cases[i].oracle &&
                    results[i].note.empty();
    agree += ok;
    csv.row({std::to_string(i), cases[i].oracle ? "yes" : "no",
             results[i].verdict ? "yes" : "no", ok ? "1" : "0",
             fmt(cases[i].margin), fmt(cases[i].x0[0]), fmt(cases[i].x0[1]),
             fmt(cases[i].x0[2]), results[i].note});
  }

  rc.summary["pairs"] = n_pairs;
  rc.summary["agree"] = agree;
  const bool pass = agree >= min_agree;
  std::printf("boomerang: %d/%d agree (need %d)  -> %s\n", agree, n_pairs,
              min_agree, pass ? "pass" : "FAIL");
  return pass;
}

// ---------------------------------------------------------------------------
// relation-batch
// ---------------------------------------------------------------------------

template <int N>
std::vector<Quadruple<N>> sample_quads(const MetricSpec<N>& spec, int count,
                                       double corrupt_fraction,
                                       std::mt19937_64& rng,
                                       std::vector<int>* corrupted) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::vector<Quadruple<N>> quads;
  const int n_corrupt = static_cast<int>(corrupt_fraction * count + 0.5);
  while (static_cast<int>(quads.size()) < count) {
    Vec<N> y{};
    y[0] = 1.3;
    y[1] = -0.10 + 0.05 * uni(rng);
    y[2] = 0.05 + 0.05 * uni(rng);
    // Three well-separated spatial directions, jittered.
    std::array<std::array<double, N - 1>, 3> dirs{};
    const std::array<std::array<double, 2>, 3> base2{
        {{1.0, 0.2}, {-0.6, 1.0}, {-0.3, -1.0}}};
    for (int j = 0; j < 3; ++j) {
      dirs[j][0] = base2[j][0] + 0.15 * uni(rng);
      dirs[j][1] = base2[j][1] + 0.15 * uni(rng);
      if constexpr (N == 4) dirs[j][2] = 0.4 * uni(rng);
    }
    const std::array<double, 4> sig{0.25 + 0.03 * uni(rng), 0.5, 0.5, 0.5};
    try {
      auto q = quadruple_from_meet<N>(spec, y, dirs, sig);
      const int id = static_cast<int>(quads.size());
      if (id < n_corrupt) {
        // Slide an emitter base sideways: the four legs no longer meet.
        q.xi[1].x[1] += 0.8;
        if (corrupted) corrupted->push_back(id);
      }
      quads.push_back(std::move(q));
    } catch (const std::invalid_argument&) {
      continue;  // degenerate draw, resample
    }
  }
  return quads;
}

template <int N>
bool run_relation_batch(RunContext& rc) {
  constexpr int D = N - 1;
  const json& params = rc.cfg.value("params", json::object());
  check_keys(params, "params",
             {"quads", "corrupt_fraction", "use_pipeline", "xtilde_dist",
              "min_sufficiency"});
  const int count = get_or(params, "quads", 10);
  const double corrupt_fraction = get_or(params, "corrupt_fraction", 0.3);
  const bool use_pipeline = get_or(params, "use_pipeline", false);
  const double xtilde_dist = get_or(params, "xtilde_dist", 0.35);
  const double min_suff = get_or(params, "min_sufficiency", 0.9);

  const auto spec = make_metric<N>(require(rc.cfg, "config", "metric"));
  CausalEngine<N> eng(spec);
  auto pc = make_pipeline_config<D>(rc.cfg);
  std::mt19937_64 rng(rc.seed);
  std::vector<int> corrupted;
  auto quads = sample_quads<N>(spec, count, corrupt_fraction, rng, &corrupted);

  // Observer placed to see the earliest observation of the nominal
  // x tilde (a point xtilde_dist along the nominal receiver flowout); the
  // per-quad jitter is small against the curve half-width.
  ObserverCurve<N> mu;
  double t1 = pc.t1;
  {
    Vec<N> y{};
    y[0] = 1.3; y[1] = -0.10; y[2] = 0.05;
    std::array<std::array<double, N - 1>, 3> dirs{};
    const std::array<std::array<double, 2>, 3> base2{
        {{1.0, 0.2}, {-0.6, 1.0}, {-0.3, -1.0}}};
    for (int j = 0; j < 3; ++j) {
      dirs[j][0] = base2[j][0];
      dirs[j][1] = base2[j][1];
    }
    const auto nominal =
        quadruple_from_meet<N>(spec, y, dirs, {0.25, 0.5, 0.5, 0.5});
    const auto bc = flow(spec, nominal.xi[0], 40.0, FlowDirection::forward);
    double s = 0.0;
    for (const auto& fs : bc.samples) {
      s = fs.s;
      if (norm(fs.x - nominal.xi[0].x) >= xtilde_dist) break;
    }
    const Vec<N> xt = bc.eval(s).x;
    Vec<N> base = xt;
    const double off = std::hypot(0.7, 0.35);
    base[0] += off;
    base[1] += 0.7;
    base[2] -= 0.35;
    mu = axis_observer<N>(base, 1.4);
    t1 = xt[0] + off + 1.6;
  }

  // Geometry oracles first (serial, fast), then the wave pipeline per quad
  // (parallel, slow).
  auto verdicts = build_relation<N>(eng, mu, quads);
  if (use_pipeline) {
    PipelineConfig<D> cfg = pc;
    cfg.t1 = t1;
    parallel_for(count, rc.jobs, [&](int i) {
      CausalEngine<N> worker(spec);
      try {
        const bool v = desirable_condition_any<D>(worker, mu, quads[i],
                                                  xtilde_dist, cfg);
        verdicts[i].pipeline = v ? Verdict::yes : Verdict::no;
      } catch (const std::exception& e) {
        verdicts[i].pipeline = Verdict::indeterminate;
        verdicts[i].note = e.what();
      }
    });
  }

  Csv csv(rc.dir / "verdicts.csv",
          {"id", "chron", "r1", "r2", "non_return", "pipeline",
           "span_residual", "meet_dist", "y_t", "y_x", "y_y", "note"});
  int necessity_violations = 0, suff_total = 0, suff_hit = 0;
  for (int i = 0; i < count; ++i) {
    const auto& v = verdicts[i];
    if (v.pipeline == Verdict::yes && v.r1 != Verdict::yes)
      ++necessity_violations;
    if (use_pipeline && v.r2 == Verdict::yes) {
      ++suff_total;
      suff_hit += v.pipeline == Verdict::yes;
    }
    csv.row({std::to_string(i), verdict_name(v.chron), verdict_name(v.r1),
             verdict_name(v.r2), verdict_name(v.non_return),
             verdict_name(v.pipeline), fmt(v.detail.span.residual),
             fmt(v.detail.meet.max_dist), fmt(v.detail.meet.y[0]),
             fmt(v.detail.meet.y[1]), fmt(v.detail.meet.y[2]), v.note});
  }

  // Oracle sanity: corrupted quads must be r1-no, clean ones r1-yes.
  int oracle_errors = 0;
  for (int i = 0; i < count; ++i) {
    const bool is_corrupt =
        std::find(corrupted.begin(), corrupted.end(), i) != corrupted.end();
    const Verdict want = is_corrupt ? Verdict::no : Verdict::yes;
    oracle_errors += verdicts[i].r1 != want;
  }

  rc.summary["quads"] = count;
  rc.summary["corrupted"] = static_cast<int>(corrupted.size());
  rc.summary["oracle_errors"] = oracle_errors;
  rc.summary["necessity_violations"] = necessity_violations;
  if (use_pipeline) {
    rc.summary["sufficiency_total"] = suff_total;
    rc.summary["sufficiency_hit"] = suff_hit;
  }
  bool pass = oracle_errors == 0 && necessity_violations == 0;
  if (use_pipeline && suff_total > 0)
    pass = pass && suff_hit >= min_suff * suff_total;
  std::printf(
      "relation-batch: %d quads, oracle errors %d, necessity violations %d"
      "%s  -> %s\n",
      count, oracle_errors, necessity_violations,
      use_pipeline
          ? (", sufficiency " + std::to_string(suff_hit) + "/" +
             std::to_string(suff_total))
                .c_str()
          : "",
      pass ? "pass" : "FAIL");
  return pass;
}

// ---------------------------------------------------------------------------
// span-demo-1p3
// ---------------------------------------------------------------------------

bool run_span_demo(RunContext& rc) {
  constexpr int N = 4;
  const json& params = rc.cfg.value("params", json::object());
  check_keys(params, "params", {"scales", "tol_residual", "slope_tol"});
  const double tol_res = get_or(params, "tol_residual", 1e-10);
  const double slope_tol = get_or(params, "slope_tol", 0.2);
  std::vector<double> scales = get_or(
      params, "scales", std::vector<double>{1e-3, 1e-4, 1e-5});

  const auto spec = make_metric<N>(require(rc.cfg, "config", "metric"));
  const Vec<N> y{1.0, 0.2, -0.1, 0.05};
  const std::array<std::array<double, 3>, 3> dirs{
      {{1.0, 0.2, -0.1}, {-0.6, 1.0, 0.3}, {-0.3, -1.0, 0.8}}};

  // Covectors at the meet point itself; eta0 is the null combination
  // eta1 + eta2 + c eta3 with c fixed by the cone constraint.
  std::array<Covector<N>, 4> etas;
  for (int j = 0; j < 3; ++j)
    etas[j + 1] = null_from_spatial<N>(spec, y, dirs[j]);
  {
    const auto ev = spec.at(y);
    auto B = [&](const Vec<N>& u, const Vec<N>& v) {
      double s = 0.0;
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) s += ev.ginv[i][j] * u[i] * v[j];
      return s;
    };
    const double c = -B(etas[1].xi, etas[2].xi) /
                     (B(etas[1].xi, etas[3].xi) + B(etas[2].xi, etas[3].xi));
    etas[0] = normalize_null<N>(
        spec, Covector<N>{y, etas[1].xi + etas[2].xi + c * etas[3].xi});
  }

  const auto in_span = span_check<N>(etas, 1e-8, 1e-6);

  // Out-of-span variant: a fourth, independent null direction.
  auto etas_out = etas;
  etas_out[0] = null_from_spatial<N>(spec, y, {0.5, -0.4, 1.0});
  const auto out_span = span_check<N>(etas_out, 1e-8, 1e-6);

  // Cone-constrained adjustment ladder: perturb xi0, repair xi1.
  const Mat<N> g = spec.at(y).g;
  std::mt19937_64 rng(rc.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Vec<N> w{};
  for (int i = 0; i < N; ++i) w[i] = uni(rng);

  Csv csv(rc.dir / "span_adjust.csv",
          {"scale", "null_residual", "span_residual", "delta_xi1"});
  double max_res = 0.0;
  std::vector<double> deltas;
  for (const double eps : scales) {
    Vec<N> xi0t = etas[0].xi;
    for (int i = 0; i < N; ++i) xi0t[i] += eps * w[i];
    const auto adj = lightcone_span_adjust<N>(g, xi0t, etas[1].xi,
                                              etas[2].xi, etas[3].xi);
    const double d = norm(adj.xi1_tilde - etas[1].xi);
    deltas.push_back(d);
    max_res = std::max({max_res, adj.null_residual, adj.span_residual});
    csv.row({fmt(eps), fmt(adj.null_residual), fmt(adj.span_residual),
             fmt(d)});
  }
  // log-log slope of |delta xi1| against the perturbation scale.
  double slope = 0.0;
  int n_slopes = 0;
  for (size_t i = 1; i < scales.size(); ++i) {
    slope += std::log(deltas[i - 1] / deltas[i]) /
             std::log(scales[i - 1] / scales[i]);
    ++n_slopes;
  }
  if (n_slopes) slope /= n_slopes;

  rc.summary["in_span_residual"] = in_span.residual;
  rc.summary["out_span_residual"] = out_span.residual;
  rc.summary["max_adjust_residual"] = max_res;
  rc.summary["slope"] = slope;
  const bool pass = in_span.in_span && !out_span.in_span &&
                    max_res <= tol_res && std::abs(slope - 1.0) <= slope_tol;
  std::printf(
      "span-demo-1p3: in-span %.2e  out-of-span %.2e  adjust %.2e  "
      "slope %.3f  -> %s\n",
      in_span.residual, out_span.residual, max_res, slope,
      pass ? "pass" : "FAIL");
  return pass;
}

// ---------------------------------------------------------------------------
// run / report drivers
// ---------------------------------------------------------------------------

int cmd_run(const std::string& config_path,
            const std::vector<std::string>& overrides, int jobs_flag,
            int64_t seed_flag) {
  json cfg;
  {
    std::ifstream in(config_path);
    if (!in) {
      std::fprintf(stderr, "error: cannot open config %s\n",
                   config_path.c_str());
      return 1;
    }
    try {
      cfg = json::parse(in);
    } catch (const json::exception& e) {
      std::fprintf(stderr, "schema error: %s\n", e.what());
      return 2;
    }
  }

  try {
    for (const auto& kv : overrides) apply_override(cfg, kv);
    check_keys(cfg, "config",
               {"name", "experiment", "dim", "metric", "observer", "grid",
                "pipeline", "params", "seed", "jobs", "output"});

    RunContext rc;
    rc.cfg = cfg;
    const std::string name = require(cfg, "config", "name").get<std::string>();
    const std::string kind =
        require(cfg, "config", "experiment").get<std::string>();
    const int dim = get_or(cfg, "dim", 2);
    if (dim != 2 && dim != 3) throw SchemaError("dim: must be 2 or 3");
    rc.seed = seed_flag >= 0 ? static_cast<uint64_t>(seed_flag)
                             : get_or(cfg, "seed", uint64_t{1});
    rc.jobs = jobs_flag > 0 ? jobs_flag : get_or(cfg, "jobs", 1);
    rc.dir = get_or(cfg, "output", std::string("runs/") + name);
    fs::create_directories(rc.dir);

    bool pass = false;
    if (kind == "geometry-selftest")
      pass = dim == 2 ? run_geometry_selftest<3>(rc)
                      : run_geometry_selftest<4>(rc);
    else if (kind == "packet-propagation")
      pass = run_packet_propagation(rc);
    else if (kind == "linearization-crosscheck")
      pass = run_linearization_crosscheck(rc);
    else if (kind == "boomerang")
      pass = run_boomerang(rc);
    else if (kind == "relation-batch")
      pass = dim == 2 ? run_relation_batch<3>(rc) : run_relation_batch<4>(rc);
    else if (kind == "span-demo-1p3")
      pass = run_span_demo(rc);
    else
      throw SchemaError("experiment: unknown kind \"" + kind + "\"");

    // Manifest: effective config, seed, derived cascade constants, summary.
    json manifest;
    manifest["config"] = cfg;
    manifest["seed"] = rc.seed;
    manifest["jobs"] = rc.jobs;
    manifest["experiment"] = kind;
    manifest["pass"] = pass;
    manifest["summary"] = rc.summary;
    manifest["cascade"] = {
        {"coupling_coefficient", -6.0},
        {"odd_partitions_3", odd_partitions(0b0000111).size()},
        {"odd_partitions_5", odd_partitions(0b0011111).size()},
        {"odd_partitions_7", odd_partitions(0b1111111).size()},
    };
    std::ofstream mf(rc.dir / "manifest.json");
    mf << manifest.dump(2) << "\n";

    if (!pass) {
      std::fprintf(stderr, "FAIL: in-config assertions did not pass\n");
      return 1;
    }
    std::printf("run directory: %s\n", rc.dir.string().c_str());
    return 0;
  } catch (const SchemaError& e) {
    std::fprintf(stderr, "schema error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

int cmd_report(const std::string& dir) {
  try {
    const fs::path d(dir);
    std::ifstream mf(d / "manifest.json");
    if (!mf) throw std::runtime_error("missing manifest.json in " + dir);
    const json manifest = json::parse(mf);

    std::ostringstream out;
    out << "experiment: " << manifest.value("experiment", std::string("?"))
        << "\n";
    out << "seed: " << manifest.value("seed", uint64_t{0}) << "\n";
    out << "pass: " << (manifest.value("pass", false) ? "yes" : "no") << "\n";
    const json summary = manifest.value("summary", json::object());
    for (const auto& [k, v] : summary.items())
      out << "  " << k << ": " << v.dump() << "\n";

    if (fs::exists(d / "verdicts.csv")) {
      std::ifstream vf(d / "verdicts.csv");
      std::string line;
      std::getline(vf, line);
      std::vector<std::string> header;
      for (size_t p = 0, q; p != std::string::npos; p = q) {
        q = line.find(',', p);
        header.push_back(line.substr(p, q - p));
        if (q != std::string::npos) ++q;
      }
      auto col = [&](const std::string& name) {
        for (size_t i = 0; i < header.size(); ++i)
          if (header[i] == name) return static_cast<int>(i);
        return -1;
      };
      const int c_r1 = col("r1"), c_r2 = col("r2"), c_pipe = col("pipeline");
      const int c_oracle = col("oracle"), c_verdict = col("verdict");
      int rows = 0, tp = 0, fp = 0, fn = 0;
      while (std::getline(vf, line)) {
        std::vector<std::string> cells;
        for (size_t p = 0, q; p != std::string::npos; p = q) {
          q = line.find(',', p);
          cells.push_back(line.substr(p, q - p));
          if (q != std::string::npos) ++q;
        }
        ++rows;
        // Pipeline-vs-oracle confusion counts; the oracle is r2 for
        // relation batches and the incidence column for boomerang runs.
        std::string oracle, pred;
        if (c_pipe >= 0 && c_r2 >= 0) {
          oracle = cells[c_r2];
          pred = cells[c_pipe];
        } else if (c_oracle >= 0 && c_verdict >= 0) {
          oracle = cells[c_oracle];
          pred = cells[c_verdict];
        } else {
          continue;
        }
        if (pred == "yes" && oracle == "yes") ++tp;
        if (pred == "yes" && oracle == "no") ++fp;
        if (pred == "no" && oracle == "yes") ++fn;
        (void)c_r1;
      }
      out << "verdicts: " << rows << " rows\n";
      if (tp + fp > 0)
        out << "precision: " << fmt(double(tp) / (tp + fp)) << "\n";
      if (tp + fn > 0)
        out << "recall: " << fmt(double(tp) / (tp + fn)) << "\n";
    }

    // List the plot-ready trace and score curves.
    std::vector<std::string> curves;
    for (const auto& e : fs::directory_iterator(d)) {
      const std::string f = e.path().filename().string();
      if (f.rfind("trace_", 0) == 0 || f.rfind("scores_", 0) == 0)
        curves.push_back(f);
    }
    std::sort(curves.begin(), curves.end());
    for (const auto& f : curves) out << "curve: " << f << "\n";

    std::ofstream rf(d / "report.txt");
    rf << out.str();
    std::fputs(out.str().c_str(), stdout);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wavecone experiment runner"};
  app.require_subcommand(1);

  std::string config_path, run_dir;
  std::vector<std::string> overrides;
  int jobs = 0;
  int64_t seed = -1;

  auto* run = app.add_subcommand("run", "execute an experiment config");
  run->add_option("config", config_path, "JSON experiment config")
      ->required();
  run->add_option("--override", overrides,
                  "dotted-path config override, key=value");
  run->add_option("--jobs", jobs, "parallel workers for batch experiments");
  run->add_option("--seed", seed, "override the config seed");

  auto* report = app.add_subcommand("report", "summarize a completed run");
  report->add_option("dir", run_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(config_path, overrides, jobs, seed);
  return cmd_report(run_dir);
}
