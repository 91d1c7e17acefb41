#pragma once

// Hamiltonian null flow: dx/ds = 2 g^{ij} xi_j, dxi_i/ds = -d_i g^{jk} xi_j xi_k.
// Adaptive RK4 with step doubling and a per-step projection of xi back to the
// cone (the residual budget goes to staying on the characteristic set, not to
// symplecticity).

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "wavecone/geometry/covector.hpp"

namespace wavecone {

template <int N>
struct FlowSample {
  double s;
  Vec<N> x;
  Vec<N> xi;
  Vec<N> dx;   // ds-derivatives, for dense output
  Vec<N> dxi;
};

template <int N>
struct Bicharacteristic {
  std::vector<FlowSample<N>> samples;
  double null_residual = 0.0;  // max |p| / |xi|^2 along the trajectory
  bool exited_chart = false;
  double s_end = 0.0;  // last parameter reached (s(eta) proxy when exited)

  const FlowSample<N>& front() const { return samples.front(); }
  const FlowSample<N>& back() const { return samples.back(); }

  // Dense output by cubic Hermite interpolation between stored samples.
  Covector<N> eval(double s) const {
    const auto& v = samples;
    if (v.size() == 1 || s <= v.front().s)
      return Covector<N>{v.front().x, v.front().xi};
    if (s >= v.back().s) return Covector<N>{v.back().x, v.back().xi};
    size_t lo = 0, hi = v.size() - 1;
    while (hi - lo > 1) {
      size_t mid = (lo + hi) / 2;
      if (v[mid].s <= s)
        lo = mid;
      else
        hi = mid;
    }
    const auto& a = v[lo];
    const auto& b = v[hi];
    const double dt = b.s - a.s;
    const double u = (s - a.s) / dt;
    const double h00 = (1 + 2 * u) * (1 - u) * (1 - u);
    const double h10 = u * (1 - u) * (1 - u);
    const double h01 = u * u * (3 - 2 * u);
    const double h11 = u * u * (u - 1);
    Covector<N> out;
    for (int i = 0; i < N; ++i) {
      out.x[i] = h00 * a.x[i] + h10 * dt * a.dx[i] + h01 * b.x[i] +
                 h11 * dt * b.dx[i];
      out.xi[i] = h00 * a.xi[i] + h10 * dt * a.dxi[i] + h01 * b.xi[i] +
                  h11 * dt * b.dxi[i];
    }
    return out;
  }
};

namespace detail {

template <int N>
struct HamState {
  Vec<N> x, xi;
};

template <int N>
inline HamState<N> ham_rhs(const MetricSpec<N>& spec, const HamState<N>& y) {
  const auto ev = spec.at_unchecked(y.x);
  const auto dg = spec.dginv(y.x);
  HamState<N> d;
  for (int i = 0; i < N; ++i) {
    double v = 0.0;
    for (int j = 0; j < N; ++j) v += ev.ginv[i][j] * y.xi[j];
    d.x[i] = 2.0 * v;
    d.xi[i] = -quad_form<N>(dg[i], y.xi);
  }
  return d;
}

template <int N>
inline HamState<N> rk4_step(const MetricSpec<N>& spec, const HamState<N>& y,
                            double h) {
  auto add = [](const HamState<N>& a, double c, const HamState<N>& b) {
    HamState<N> r;
    for (int i = 0; i < N; ++i) {
      r.x[i] = a.x[i] + c * b.x[i];
      r.xi[i] = a.xi[i] + c * b.xi[i];
    }
    return r;
  };
  const auto k1 = ham_rhs(spec, y);
  const auto k2 = ham_rhs(spec, add(y, 0.5 * h, k1));
  const auto k3 = ham_rhs(spec, add(y, 0.5 * h, k2));
  const auto k4 = ham_rhs(spec, add(y, h, k3));
  HamState<N> out;
  for (int i = 0; i < N; ++i) {
    out.x[i] = y.x[i] + h / 6.0 * (k1.x[i] + 2 * k2.x[i] + 2 * k3.x[i] + k4.x[i]);
    out.xi[i] =
        y.xi[i] + h / 6.0 * (k1.xi[i] + 2 * k2.xi[i] + 2 * k3.xi[i] + k4.xi[i]);
  }
  return out;
}

// Rescale the spatial part of xi so that p(x, xi) = 0 with the time
// component held fixed. Valid for the product metrics used here
// (block-diagonal ginv with g^{00} < 0).
template <int N>
inline void project_to_cone(const MetricSpec<N>& spec, HamState<N>& y) {
  const auto ev = spec.at_unchecked(y.x);
  double q = 0.0;
  for (int i = 1; i < N; ++i)
    for (int j = 1; j < N; ++j) q += y.xi[i] * ev.ginv[i][j] * y.xi[j];
  const double target = -ev.ginv[0][0] * y.xi[0] * y.xi[0];
  if (q <= 0.0 || target <= 0.0) return;
  const double scale = std::sqrt(target / q);
  for (int i = 1; i < N; ++i) y.xi[i] *= scale;
}

}  // namespace detail

enum class FlowDirection { forward, backward };

struct FlowOptions {
  double rel_tol = 1e-11;
  double h_init = 1e-2;
  double h_min = 1e-12;
  double h_max = 0.25;
  bool project = true;
};

// Integrates the bicharacteristic through xi for parameter length s_max.
// Terminates early (with exited_chart set) when the trajectory leaves the
// chart box; the exit parameter is bisected to ~1e-12.
template <int N>
inline Bicharacteristic<N> flow(const MetricSpec<N>& spec,
                                const Covector<N>& xi0, double s_max,
                                FlowDirection dir,
                                const FlowOptions& opt = {}) {
  if (!(s_max > 0)) throw std::invalid_argument("flow: s_max must be > 0");
  {
    const double p = hamiltonian_value(spec, xi0);
    const double scale = std::max(dot(xi0.xi, xi0.xi), 1e-300);
    if (std::abs(p) > 1e-6 * scale)
      throw std::invalid_argument("flow: input covector is not lightlike");
    if (std::abs(p) > GeoTol::null_membership * scale)
      throw std::invalid_argument(
          "flow: covector within the rejection band (tau_null, 1e-6]");
  }
  const double sign = (dir == FlowDirection::forward) ? 1.0 : -1.0;
  detail::HamState<N> y{xi0.x, xi0.xi};
  Bicharacteristic<N> out;
  auto record = [&](double s, const detail::HamState<N>& st) {
    const auto d = detail::ham_rhs(spec, st);
    FlowSample<N> smp;
    smp.s = s;
    smp.x = st.x;
    smp.xi = st.xi;
    for (int i = 0; i < N; ++i) {
      smp.dx[i] = sign * d.x[i];
      smp.dxi[i] = sign * d.xi[i];
    }
    out.samples.push_back(smp);
    const auto ev = spec.at_unchecked(st.x);
    const double p = std::abs(quad_form<N>(ev.ginv, st.xi));
    out.null_residual =
        std::max(out.null_residual, p / std::max(dot(st.xi, st.xi), 1e-300));
  };
  record(0.0, y);

  double s = 0.0;
  double h = std::min(opt.h_init, s_max);
  while (s < s_max) {
    h = std::min(h, s_max - s);
    // Step doubling error control.
    auto yfull = detail::rk4_step(spec, y, sign * h);
    auto yhalf = detail::rk4_step(spec, y, sign * h * 0.5);
    yhalf = detail::rk4_step(spec, yhalf, sign * h * 0.5);
    double err = 0.0, scale = 0.0;
    for (int i = 0; i < N; ++i) {
      err += (yfull.x[i] - yhalf.x[i]) * (yfull.x[i] - yhalf.x[i]) +
             (yfull.xi[i] - yhalf.xi[i]) * (yfull.xi[i] - yhalf.xi[i]);
      scale += yhalf.x[i] * yhalf.x[i] + yhalf.xi[i] * yhalf.xi[i];
    }
    err = std::sqrt(err);
    const double tol = opt.rel_tol * std::max(1.0, std::sqrt(scale));
    if (err > tol && h > opt.h_min) {
      h *= std::max(0.2, 0.9 * std::pow(tol / err, 0.2));
      if (h < opt.h_min)
        throw std::runtime_error("flow: step size underflow");
      continue;
    }
    if (!spec.in_chart(yhalf.x)) {
      // Bisect the exit parameter.
      double lo = 0.0, hi = h;
      for (int it = 0; it < 60 && (hi - lo) > 1e-13; ++it) {
        const double mid = 0.5 * (lo + hi);
        auto ymid = detail::rk4_step(spec, y, sign * mid);
        if (spec.in_chart(ymid.x))
          lo = mid;
        else
          hi = mid;
      }
      if (lo > 0) {
        y = detail::rk4_step(spec, y, sign * lo);
        if (opt.project) detail::project_to_cone(spec, y);
        s += lo;
        record(s, y);
      }
      out.exited_chart = true;
      out.s_end = s;
      return out;
    }
    y = yhalf;
    if (opt.project) detail::project_to_cone(spec, y);
    s += h;
    record(s, y);
    if (err < 0.25 * tol) h = std::min(opt.h_max, h * 1.7);
  }
  out.s_end = s;
  return out;
}

// Future/past flowout of a seed set: one bicharacteristic per seed. The
// causal order along each trajectory is fixed by the seed's time
// orientation together with the flow direction.
template <int N>
inline std::vector<Bicharacteristic<N>> flowout(
    const MetricSpec<N>& spec, const std::vector<Covector<N>>& seeds,
    double s_max, FlowDirection dir, const FlowOptions& opt = {}) {
  std::vector<Bicharacteristic<N>> out;
  out.reserve(seeds.size());
  for (const auto& seed : seeds) out.push_back(flow(spec, seed, s_max, dir, opt));
  return out;
}

}  // namespace wavecone
