#pragma once

// Geometric three-to-one scattering relation: quadruples of future
// lightlike covectors (xi0 at the receiver x0, xi1..xi3 at the emitters),
// the meeting oracle R1, the strengthened oracle R2 (distinct
// bicharacteristics, cut bounds, span condition), the non-return test, and
// the batch relation builder.

#include <functional>
#include <optional>
#include <string>

#include "wavecone/geometry/earliest.hpp"
#include "wavecone/scattering/span.hpp"

namespace wavecone {

enum class Verdict { yes, no, indeterminate };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::yes: return "yes";
    case Verdict::no: return "no";
    default: return "indeterminate";
  }
}

struct ScatteringTol {
  double tau_meet = 1e-6;   // meeting tolerance (geometry-only contexts)
  double tau_span = 1e-8;   // relative span residual
  double rho_margin = 0.05; // stay this fraction inside the cut value
  double s_cap = 40.0;      // flow parameter cap
  double tau_distinct() const { return 10.0 * tau_meet; }
};

// xi[0]: future lightlike covector at the receiver point x0.
// xi[1..3]: future lightlike covectors at the emitter points.
template <int N>
struct Quadruple {
  std::array<Covector<N>, 4> xi;
};

template <int N>
struct MeetResult {
  Verdict verdict = Verdict::indeterminate;
  Vec<N> y{};                    // common point (barycenter of the four legs)
  std::array<double, 4> sigma{}; // sigma[0]: backward parameter from x0
  double max_dist = 0.0;         // worst leg-to-leg distance at the optimum
  bool converged = false;
};

namespace detail {

// Distance from a point to a bicharacteristic trajectory: coarse scan over
// the dense samples, then golden-section refinement on eval().
template <int N>
inline double min_distance_to_point(const Bicharacteristic<N>& bc,
                                    const Vec<N>& p, double* s_best = nullptr) {
  const auto& v = bc.samples;
  int best = 0;
  double dmin = norm(v[0].x - p);
  for (int i = 1; i < (int)v.size(); ++i) {
    const double d = norm(v[i].x - p);
    if (d < dmin) { dmin = d; best = i; }
  }
  double lo = v[std::max(0, best - 1)].s;
  double hi = v[std::min<int>((int)v.size() - 1, best + 1)].s;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = norm(bc.eval(c).x - p), fd = norm(bc.eval(d).x - p);
  for (int it = 0; it < 80 && b - a > 1e-13 * (1.0 + hi); ++it) {
    if (fc < fd) {
      b = d; d = c; fd = fc;
      c = b - gr * (b - a); fc = norm(bc.eval(c).x - p);
    } else {
      a = c; c = d; fc = fd;
      d = a + gr * (b - a); fd = norm(bc.eval(d).x - p);
    }
  }
  const double s = 0.5 * (a + b);
  const double f = norm(bc.eval(s).x - p);
  if (s_best) *s_best = f < dmin ? s : v[best].s;
  return std::min(f, dmin);
}

// Velocity dx/ds along the recorded parameter, by central difference of the
// dense output.
template <int N>
inline Vec<N> traj_velocity(const Bicharacteristic<N>& bc, double s) {
  const double ds = 1e-6 * std::max(1.0, bc.s_end);
  const double a = std::max(0.0, s - ds), b = std::min(bc.s_end, s + ds);
  return (1.0 / (b - a)) * (bc.eval(b).x - bc.eval(a).x);
}

}  // namespace detail

// Oracle (R1): do the backward trajectory of xi0 and the forward
// trajectories of xi1..xi3 all pass through one common point?  Multi-start
// coarse scan followed by damped Gauss-Newton on
//   F(sigma) = sum_j |gamma_0(-sigma_0) - gamma_j(sigma_j)|^2.
template <int N>
inline MeetResult<N> oracle_r1(const MetricSpec<N>& spec,
                               const Quadruple<N>& quad,
                               const ScatteringTol& tol = {}) {
  std::array<Bicharacteristic<N>, 4> bc{
      flow(spec, quad.xi[0], tol.s_cap, FlowDirection::backward),
      flow(spec, quad.xi[1], tol.s_cap, FlowDirection::forward),
      flow(spec, quad.xi[2], tol.s_cap, FlowDirection::forward),
      flow(spec, quad.xi[3], tol.s_cap, FlowDirection::forward)};

  MeetResult<N> out;
  for (const auto& b : bc)
    if (!(b.s_end > 0)) return out;  // degenerate flow: indeterminate

  auto value = [&](const std::array<double, 4>& sg, Vec<N>* yout) {
    const Vec<N> p0 = bc[0].eval(sg[0]).x;
    double f = 0.0;
    for (int j = 1; j < 4; ++j) {
      const Vec<N> d = p0 - bc[j].eval(sg[j]).x;
      f += dot(d, d);
    }
    if (yout) *yout = p0;
    return f;
  };

  // Coarse multi-start: scan sigma_0, match each emitter leg by nearest
  // dense sample.
  struct Start { std::array<double, 4> sg; double f; };
  std::vector<Start> starts;
  const int n0 = 48;
  for (int i = 1; i <= n0; ++i) {
    Start st;
    st.sg[0] = bc[0].s_end * i / n0;
    const Vec<N> p0 = bc[0].eval(st.sg[0]).x;
    for (int j = 1; j < 4; ++j)
      detail::min_distance_to_point<N>(bc[j], p0, &st.sg[j]);
    st.f = value(st.sg, nullptr);
    starts.push_back(st);
  }
  std::sort(starts.begin(), starts.end(),
            [](const Start& a, const Start& b) { return a.f < b.f; });
  if (starts.size() > 6) starts.resize(6);

  std::array<double, 4> best_sg{};
  double best_f = std::numeric_limits<double>::infinity();
  bool best_conv = false;

  for (const auto& st : starts) {
    std::array<double, 4> sg = st.sg;
    double f = st.f;
    bool conv = false;
    for (int it = 0; it < 80; ++it) {
      // Residual blocks r_j = p0 - p_j and their sigma-derivatives.
      const Vec<N> p0 = bc[0].eval(sg[0]).x;
      const Vec<N> v0 = detail::traj_velocity<N>(bc[0], sg[0]);
      Mat<4> jtj{};
      Vec<4> jtr{};
      for (int j = 1; j < 4; ++j) {
        const Vec<N> r = p0 - bc[j].eval(sg[j]).x;
        const Vec<N> vj = detail::traj_velocity<N>(bc[j], sg[j]);
        // Columns of J for this block: d r / d sigma_0 = v0,
        // d r / d sigma_j = -v_j, zero elsewhere.
        jtj[0][0] += dot(v0, v0);
        jtj[0][j] += -dot(v0, vj);
        jtj[j][0] += -dot(vj, v0);
        jtj[j][j] += dot(vj, vj);
        jtr[0] += dot(v0, r);
        jtr[j] += -dot(vj, r);
      }
      for (int k = 0; k < 4; ++k) jtj[k][k] += 1e-14 * (1.0 + jtj[k][k]);
      Vec<4> step = solve<4>(jtj, jtr);
      double lambda = 1.0;
      std::array<double, 4> trial = sg;
      double ft = f;
      for (int bt = 0; bt < 30; ++bt) {
        for (int k = 0; k < 4; ++k)
          trial[k] = std::clamp(sg[k] - lambda * step[k], 0.0, bc[k].s_end);
        ft = value(trial, nullptr);
        if (ft < f) break;
        lambda *= 0.5;
      }
      double moved = 0.0;
      for (int k = 0; k < 4; ++k) moved += std::abs(trial[k] - sg[k]);
      if (ft < f) { sg = trial; f = ft; }
      if (moved < 1e-14 || f < 1e-30) { conv = true; break; }
      if (ft >= f) { conv = true; break; }  // no descent direction left
    }
    if (f < best_f) { best_f = f; best_sg = sg; best_conv = conv; }
  }

  Vec<N> y0;
  value(best_sg, &y0);
  out.sigma = best_sg;
  out.converged = best_conv;
  // Barycenter of the four legs; worst distance from any leg to it.
  Vec<N> ybar = bc[0].eval(best_sg[0]).x;
  for (int j = 1; j < 4; ++j) ybar = ybar + bc[j].eval(best_sg[j]).x;
  ybar = 0.25 * ybar;
  out.y = ybar;
  double worst = 0.0;
  for (int k = 0; k < 4; ++k)
    worst = std::max(worst, norm(bc[k].eval(best_sg[k]).x - ybar));
  out.max_dist = worst;
  if (worst <= tol.tau_meet)
    out.verdict = Verdict::yes;
  else
    out.verdict = best_conv ? Verdict::no : Verdict::indeterminate;
  return out;
}

template <int N>
struct R2Result {
  Verdict verdict = Verdict::indeterminate;
  MeetResult<N> meet;
  SpanResult span{};
  std::array<double, 4> rho{};  // rho[0]: past cut of xi0
  bool distinct = false;
  bool within_cut = false;
  std::string note;
};

namespace detail {

// Do two forward bicharacteristics trace the same curve?  Decide at the
// base point of the first: either it is far from the second trajectory, or
// the normalized covectors disagree there (transversal crossing).
template <int N>
inline bool same_bicharacteristic(const MetricSpec<N>& spec,
                                  const Covector<N>& xi_i,
                                  const Bicharacteristic<N>& bc_j,
                                  double tau) {
  double s = 0.0;
  const double d = min_distance_to_point<N>(bc_j, xi_i.x, &s);
  if (d > tau) return false;
  const auto a = normalize_null(spec, xi_i);
  const auto b = normalize_null(spec, bc_j.eval(s));
  return norm(a.xi - b.xi) <= tau;
}

}  // namespace detail

// Oracle (R2): R1 plus (a) pairwise distinct emitter bicharacteristics,
// (b) all meeting parameters strictly inside the respective cut values
// (with a safety margin), (c) the four covectors at the meeting point
// satisfy the span condition eta0 in span(eta1, eta2, eta3).
template <int N>
inline R2Result<N> oracle_r2(CausalEngine<N>& eng, const Quadruple<N>& quad,
                             const ScatteringTol& tol = {}) {
  const auto& spec = eng.spec();
  R2Result<N> out;
  out.meet = oracle_r1(spec, quad, tol);
  if (out.meet.verdict != Verdict::yes) {
    out.verdict = out.meet.verdict;
    out.note = "meeting oracle not satisfied";
    return out;
  }

  // (a) distinctness of the emitter bicharacteristics.
  std::array<Bicharacteristic<N>, 4> fwd{
      flow(spec, quad.xi[0], tol.s_cap, FlowDirection::forward),
      flow(spec, quad.xi[1], tol.s_cap, FlowDirection::forward),
      flow(spec, quad.xi[2], tol.s_cap, FlowDirection::forward),
      flow(spec, quad.xi[3], tol.s_cap, FlowDirection::forward)};
  out.distinct = true;
  for (int i = 1; i < 4 && out.distinct; ++i)
    for (int j = i + 1; j < 4 && out.distinct; ++j)
      if (detail::same_bicharacteristic(spec, quad.xi[i], fwd[j],
                                        tol.tau_distinct()))
        out.distinct = false;
  if (!out.distinct) {
    out.verdict = Verdict::no;
    out.note = "emitter bicharacteristics coincide";
    return out;
  }

  // (b) cut bounds: sigma_0 below the past cut of xi0, sigma_j below the
  // cut of xi_j, all strictly positive.
  bool flagged = false;
  {
    Covector<N> past0{quad.xi[0].x, -1.0 * quad.xi[0].xi};
    const auto c0 = cut_function<N>(eng, past0, tol.s_cap);
    out.rho[0] = c0.rho;
    flagged = flagged || c0.flagged;
  }
  for (int j = 1; j < 4; ++j) {
    const auto cj = cut_function<N>(eng, quad.xi[j], tol.s_cap);
    out.rho[j] = cj.rho;
    flagged = flagged || cj.flagged;
  }
  out.within_cut = true;
  for (int k = 0; k < 4; ++k) {
    if (!(out.meet.sigma[k] > tol.tau_meet &&
          out.meet.sigma[k] < (1.0 - tol.rho_margin) * out.rho[k]))
      out.within_cut = false;
  }
  if (flagged) {
    out.verdict = Verdict::indeterminate;
    out.note = "cut value flagged";
    return out;
  }
  if (!out.within_cut) {
    out.verdict = Verdict::no;
    out.note = "meeting parameter outside the cut bound";
    return out;
  }

  // (c) span condition at the meeting point.
  auto bc0 = flow(spec, quad.xi[0], tol.s_cap, FlowDirection::backward);
  std::array<Covector<N>, 4> etas{
      bc0.eval(out.meet.sigma[0]), fwd[1].eval(out.meet.sigma[1]),
      fwd[2].eval(out.meet.sigma[2]), fwd[3].eval(out.meet.sigma[3])};
  out.span = span_check<N>(etas, tol.tau_span, 4.0 * tol.tau_meet);
  if (out.span.degenerate) {
    out.verdict = Verdict::indeterminate;
    out.note = "degenerate span basis";
    return out;
  }
  out.verdict = out.span.in_span ? Verdict::yes : Verdict::no;
  if (!out.span.in_span) out.note = "span condition fails";
  return out;
}

// Non-return condition for a quadruple relative to the observer curve mu:
// the earliest observation point of x0 must not lie on the forward flowout
// of xi0, and x0 must not lie on the forward flowouts of xi1..xi3.
template <int N>
inline Verdict non_return_check(CausalEngine<N>& eng,
                                const ObserverCurve<N>& curve,
                                const Quadruple<N>& quad,
                                const ScatteringTol& tol = {}) {
  const auto& spec = eng.spec();
  EarliestObs<N> eo;
  try {
    eo = earliest_observation<N>(eng, curve, quad.xi[0].x);
  } catch (const std::exception&) {
    return Verdict::indeterminate;
  }
  if (eo.beyond_cut) return Verdict::indeterminate;

  auto bc0 = flow(spec, quad.xi[0], tol.s_cap, FlowDirection::forward);
  if (detail::min_distance_to_point<N>(bc0, eo.xhat) <= tol.tau_meet)
    return Verdict::no;
  for (int j = 1; j < 4; ++j) {
    auto bcj = flow(spec, quad.xi[j], tol.s_cap, FlowDirection::forward);
    if (detail::min_distance_to_point<N>(bcj, quad.xi[0].x) <= tol.tau_meet)
      return Verdict::no;
  }
  return Verdict::yes;
}

template <int N>
struct QuadVerdict {
  Quadruple<N> quad;
  Verdict chron = Verdict::indeterminate;  // x0 in I+(x_j) for all j
  Verdict r1 = Verdict::indeterminate;
  Verdict r2 = Verdict::indeterminate;
  Verdict non_return = Verdict::indeterminate;
  Verdict pipeline = Verdict::indeterminate;  // wave-based verdict, if run
  R2Result<N> detail;
  std::string note;
};

// Evaluates each quadruple independently; failures in one quadruple are
// isolated as indeterminate entries with a note.  The optional pipeline
// callback supplies a wave-solver verdict recorded alongside the oracles.
template <int N>
inline std::vector<QuadVerdict<N>> build_relation(
    CausalEngine<N>& eng, const ObserverCurve<N>& curve,
    const std::vector<Quadruple<N>>& quads,
    const std::function<std::optional<bool>(const Quadruple<N>&)>& pipeline =
        {},
    const ScatteringTol& tol = {}) {
  std::vector<QuadVerdict<N>> out;
  out.reserve(quads.size());
  for (const auto& q : quads) {
    QuadVerdict<N> v;
    v.quad = q;
    try {
      bool chron = true;
      for (int j = 1; j < 4; ++j)
        chron = chron &&
                eng.classify(q.xi[j].x, q.xi[0].x) == CausalClass::chronological;
      v.chron = chron ? Verdict::yes : Verdict::no;
      v.non_return = non_return_check(eng, curve, q, tol);
      v.detail = oracle_r2(eng, q, tol);
      v.r2 = v.detail.verdict;
      v.r1 = v.detail.meet.verdict;
      if (pipeline) {
        const auto p = pipeline(q);
        v.pipeline = !p ? Verdict::indeterminate
                        : (*p ? Verdict::yes : Verdict::no);
      }
    } catch (const std::exception& e) {
      v.note = e.what();
    }
    out.push_back(std::move(v));
  }
  return out;
}

// Builds a quadruple meeting at y: emitters flow backward from y along the
// three given spatial directions, and the receiver leg flows forward along
// a future lightlike combination of the three (so the span condition holds
// by construction).
template <int N>
inline Quadruple<N> quadruple_from_meet(
    const MetricSpec<N>& spec, const Vec<N>& y,
    const std::array<std::array<double, N - 1>, 3>& spatial_dirs,
    const std::array<double, 4>& sigmas) {
  std::array<Covector<N>, 4> eta;
  for (int j = 0; j < 3; ++j)
    eta[j + 1] = null_from_spatial<N>(spec, y, spatial_dirs[j]);

  // eta0 = eta1 + eta2 + c eta3, with c fixed by the null constraint.
  const auto ev = spec.at(y);
  auto B = [&](const Vec<N>& u, const Vec<N>& v) {
    double s = 0.0;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) s += ev.ginv[i][j] * u[i] * v[j];
    return s;
  };
  const double b12 = B(eta[1].xi, eta[2].xi);
  const double b13 = B(eta[1].xi, eta[3].xi);
  const double b23 = B(eta[2].xi, eta[3].xi);
  if (std::abs(b13 + b23) < 1e-12)
    throw std::invalid_argument("quadruple_from_meet: degenerate directions");
  const double c = -b12 / (b13 + b23);
  Covector<N> eta0{y, eta[1].xi + eta[2].xi + c * eta[3].xi};
  if (time_orientation(spec, eta0) != TimeOrientation::future)
    throw std::invalid_argument(
        "quadruple_from_meet: combination is not future pointing");
  eta[0] = normalize_null(spec, eta0);

  Quadruple<N> out;
  {
    auto bc = flow(spec, eta[0], sigmas[0], FlowDirection::forward);
    if (bc.exited_chart)
      throw std::invalid_argument("quadruple_from_meet: receiver leg exits");
    out.xi[0] = bc.eval(sigmas[0]);
  }
  for (int j = 1; j < 4; ++j) {
    auto bc = flow(spec, eta[j], sigmas[j], FlowDirection::backward);
    if (bc.exited_chart)
      throw std::invalid_argument("quadruple_from_meet: emitter leg exits");
    out.xi[j] = bc.eval(sigmas[j]);
  }
  return out;
}

}  // namespace wavecone
