#pragma once

// The seven source families: microlocal wave packets f_1..f_3, box-bumps
// f_0/f_4/f_5, and the smoothed timeline source f_6. Bump-type sources are
// carried as the analytic field the solver must reproduce (chi_a or u_6);
// their source term is the discrete wave operator applied to that field, so
// construct-then-solve round trips close to round-off.

#include <functional>

#include "wavecone/geometry/covector.hpp"
#include "wavecone/solver/grid.hpp"

namespace wavecone {

template <int D>
struct SourceTerm {
  enum class Kind { packet, box_bump, timeline };
  Kind kind;
  Vec<D + 1> center{};  // x_j / x_0 / x_tilde
  Vec<D + 1> xi{};      // packet direction covector
  double h = 0.0;       // microlocal cone width
  double a = 0.0;       // bump radius
  double freq = 0.0;    // carrier frequency
  int smooth_n = 2;     // <D>^{-N}
  double sigma = 0.0;   // packet envelope width
  double amp = 1.0;
  Vec<D + 1> box_lo{}, box_hi{};  // spacetime support bound

  // Closed-form source density (packets).
  std::function<double(const Vec<D + 1>&)> f;
  // Analytic field (box_bump: chi_a; timeline: u_6); the source is the
  // discrete box_g of this field.
  std::function<double(const Vec<D + 1>&)> phi;
  bool discrete_box = false;

  bool in_box(double t, const std::array<double, D>& x) const {
    if (t < box_lo[0] || t > box_hi[0]) return false;
    for (int i = 0; i < D; ++i)
      if (x[i] < box_lo[i + 1] || x[i] > box_hi[i + 1]) return false;
    return true;
  }
};

namespace detail {

template <int D>
inline void set_box(SourceTerm<D>& s, const Vec<D + 1>& c, double r) {
  for (int i = 0; i <= D; ++i) {
    s.box_lo[i] = c[i] - r;
    s.box_hi[i] = c[i] + r;
  }
}

}  // namespace detail

// Gabor packet realizing omega_j(x,D;h) <D>^{-N} delta_{x_j}: Gaussian
// spacetime envelope times a carrier oscillating along xi. The envelope
// width ties the angular spectral spread to the cone width h.
template <int D>
inline SourceTerm<D> make_packet(const MetricSpec<D + 1>& spec,
                                 const Covector<D + 1>& xi_in, double h,
                                 double freq, const Grid<D>& grid,
                                 int smooth_n = 2) {
  if (causal_type(spec, xi_in) != CausalType::lightlike)
    throw std::invalid_argument("make_packet: xi must be lightlike");
  const auto xi = normalize_null(spec, xi_in);
  // Resolvability: >= 8 samples per carrier wavelength in space and time.
  double ximax = 0.0;
  for (int i = 0; i <= D; ++i) ximax = std::max(ximax, std::abs(xi.xi[i]));
  const double wavelength = 2.0 * M_PI / (freq * ximax);
  if (wavelength < 8.0 * grid.h || wavelength < 8.0 * grid.dt)
    throw std::invalid_argument("make_packet: frequency unresolvable on grid");
  if (!(h > 0.0) || h >= 1.5)
    throw std::invalid_argument("make_packet: cone width out of range");

  SourceTerm<D> s;
  s.kind = SourceTerm<D>::Kind::packet;
  s.center = xi.x;
  s.xi = xi.xi;
  s.h = h;
  s.freq = freq;
  s.smooth_n = smooth_n;
  s.sigma = std::max(3.0 * grid.h, 2.5 / (h * freq));
  s.amp = std::pow(1.0 + freq * freq, -0.5 * smooth_n);
  detail::set_box<D>(s, xi.x, 5.0 * s.sigma);
  const auto c = xi.x;
  const auto dir = xi.xi;
  const double sig = s.sigma, f0 = freq, A = s.amp;
  s.f = [c, dir, sig, f0, A](const Vec<D + 1>& z) {
    double r2 = 0.0, phase = 0.0;
    for (int i = 0; i <= D; ++i) {
      const double d = z[i] - c[i];
      r2 += d * d;
      phase += dir[i] * d;
    }
    return A * std::exp(-0.5 * r2 / (sig * sig)) * std::cos(f0 * phase);
  };
  return s;
}

// chi_a: the standard bump equal to 1 at the center, supported in the
// geodesic ball of radius a (chart distance scaled by sqrt(beta) at the
// center, exact for the constant-coefficient presets).
template <int D>
inline SourceTerm<D> make_box_bump(const MetricSpec<D + 1>& spec,
                                   const Vec<D + 1>& center, double a,
                                   const Grid<D>& grid) {
  const double scale = std::sqrt(spec.at(center).g[1][1]);  // beta*kappa_11
  const double r_chart = a / scale;
  if (r_chart < 6.0 * grid.h)
    throw std::invalid_argument("make_box_bump: radius under-resolved");
  SourceTerm<D> s;
  s.kind = SourceTerm<D>::Kind::box_bump;
  s.center = center;
  s.a = a;
  s.discrete_box = true;
  detail::set_box<D>(s, center, r_chart);
  s.phi = [center, r_chart](const Vec<D + 1>& z) {
    double r2 = 0.0;
    for (int i = 0; i <= D; ++i) {
      const double d = z[i] - center[i];
      r2 += d * d;
    }
    const double q = r2 / (r_chart * r_chart);
    if (q >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - q));
  };
  return s;
}

// u_6 = chi_a <D>^{-N} delta_{T_{x'}}: the chi_a window times a narrow
// transverse profile around the timeline through x_tilde'. The profile
// oscillates radially (carrier at the resolvable maximum), so its spectrum
// sits on a spacelike ring |k'| ~ k0 far from the slow time variation --
// the finite-frequency proxy of a conormal wavefront along T.
template <int D>
inline SourceTerm<D> make_timeline_source(const MetricSpec<D + 1>& spec,
                                          const Vec<D + 1>& xtilde, double a,
                                          const Grid<D>& grid,
                                          int smooth_n = 2,
                                          double carrier = 0.0) {
  auto bump = make_box_bump<D>(spec, xtilde, a, grid);
  SourceTerm<D> s;
  s.kind = SourceTerm<D>::Kind::timeline;
  s.center = xtilde;
  s.a = a;
  s.smooth_n = smooth_n;
  s.sigma = 5.0 * grid.h;  // transverse envelope
  // Radial carrier: defaults to the resolvable maximum (8 cells per
  // wavelength). Interaction experiments pass the probe-packet frequency
  // instead, so that the mixed spatial spectrum reaches the characteristic
  // set |k| = omega and the product actually radiates.
  s.freq = carrier > 0.0 ? carrier : 2.0 * M_PI / (8.0 * grid.h);
  if (2.0 * M_PI / s.freq < 8.0 * grid.h)
    throw std::invalid_argument("make_timeline_source: carrier under-resolved");
  s.amp = std::pow(1.0 + s.freq * s.freq, -0.5 * smooth_n);
  s.discrete_box = true;
  s.box_lo = bump.box_lo;
  s.box_hi = bump.box_hi;
  const auto chi = bump.phi;
  const double sp = s.sigma, k0 = s.freq, A = s.amp;
  const auto c = xtilde;
  s.phi = [chi, sp, k0, A, c](const Vec<D + 1>& z) {
    const double w = chi(z);
    if (w == 0.0) return 0.0;
    double r2 = 0.0;
    for (int i = 1; i <= D; ++i) {
      const double d = z[i] - c[i];
      r2 += d * d;
    }
    return A * w * std::exp(-0.5 * r2 / (sp * sp)) *
           std::cos(k0 * std::sqrt(r2));
  };
  return s;
}

}  // namespace wavecone
