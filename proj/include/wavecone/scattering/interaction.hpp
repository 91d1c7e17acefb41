#pragma once

// The interaction curve K: the intersection of the three forward light
// cones of the emitter points, traced by Newton continuation on the three
// null-front margin functions m_j(z) = chrono_margin(x_j, z).  Each sample
// carries the three cone conormals (the arrival covectors) and the
// spacelike tangent spanning their common kernel.

#include "wavecone/geometry/causal.hpp"

namespace wavecone {

template <int N>
struct InteractionSample {
  Vec<N> z{};
  Vec<N> tangent{};                 // unit (chart) tangent, spacelike
  std::array<Vec<N>, 3> normals{};  // cone conormals at z (xi_0 = -1)
  double residual = 0.0;            // max |m_j| after projection
  double tangent_norm2 = 0.0;       // g(tangent, tangent) at z
};

template <int N>
struct InteractionCurve {
  std::vector<InteractionSample<N>> samples;
  bool truncated = false;  // continuation stopped before n_steps samples
};

namespace detail {

// Kernel of three covectors in four dimensions via the Levi-Civita cross
// product t^i = eps^{ijkl} a_j b_k c_l.
inline Vec<4> cross4(const Vec<4>& a, const Vec<4>& b, const Vec<4>& c) {
  Vec<4> t{};
  auto det3 = [&](int i, int j, int k) {
    return a[i] * (b[j] * c[k] - b[k] * c[j]) -
           a[j] * (b[i] * c[k] - b[k] * c[i]) +
           a[k] * (b[i] * c[j] - b[j] * c[i]);
  };
  t[0] = -det3(1, 2, 3);
  t[1] = det3(0, 2, 3);
  t[2] = -det3(0, 1, 3);
  t[3] = det3(0, 1, 2);
  return t;
}

}  // namespace detail

// Traces n_steps samples of K starting from a seed on (or near) all three
// cones.  Throws invalid_argument when the cone normals at the seed are
// rank deficient (tangent directions coincide: the symmetric configuration)
// or the tangent fails to be spacelike.  Later degeneracies truncate the
// curve instead, with the flag set.
template <int N>
inline InteractionCurve<N> interaction_curve(
    CausalEngine<N>& eng, const std::array<Vec<N>, 3>& sources,
    const Vec<N>& seed, int n_steps = 8, double step = 0.05,
    double tol = 1e-10) {
  static_assert(N == 4, "interaction_curve: 1+3 dimensions only");
  const auto& spec = eng.spec();

  auto margins = [&](const Vec<N>& z) {
    Vec<3> m{};
    for (int j = 0; j < 3; ++j) m[j] = eng.chrono_margin(sources[j], z);
    return m;
  };
  // m_j(z) = z_0 - T_j(z'): the time component of the gradient is exactly 1.
  auto gradient = [&](const Vec<N>& z, int j) {
    Vec<N> g{};
    g[0] = 1.0;
    const double h = 1e-6;
    for (int i = 1; i < N; ++i) {
      Vec<N> zp = z, zm = z;
      zp[i] += h;
      zm[i] -= h;
      g[i] = (eng.chrono_margin(sources[j], zp) -
              eng.chrono_margin(sources[j], zm)) /
             (2.0 * h);
    }
    return g;
  };

  // Project z back onto the triple intersection (minimum-norm Newton).
  auto project = [&](Vec<N>& z) {
    for (int it = 0; it < 20; ++it) {
      const Vec<3> m = margins(z);
      double worst = 0.0;
      for (int j = 0; j < 3; ++j) worst = std::max(worst, std::abs(m[j]));
      if (!std::isfinite(worst)) return false;
      if (worst <= tol) return true;
      std::array<Vec<N>, 3> J;
      for (int j = 0; j < 3; ++j) J[j] = gradient(z, j);
      Mat<3> jjt{};
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) jjt[a][b] = dot(J[a], J[b]);
      Vec<3> lam;
      try {
        lam = solve<3>(jjt, m);
      } catch (const std::runtime_error&) {
        return false;
      }
      for (int a = 0; a < 3; ++a) z = z - lam[a] * J[a];
      if (!spec.in_chart(z)) return false;
    }
    return false;
  };

  // One sample: position, conormals from the arrival covectors, tangent.
  auto make_sample = [&](const Vec<N>& z, InteractionSample<N>& out) {
    out.z = z;
    const Vec<3> m = margins(z);
    out.residual = std::max({std::abs(m[0]), std::abs(m[1]), std::abs(m[2])});
    for (int j = 0; j < 3; ++j) {
      std::array<double, N - 1> zs;
      for (int i = 0; i < N - 1; ++i) zs[i] = z[i + 1];
      const auto arr = eng.fan_from(sources[j]).first_arrival(zs);
      if (!arr) return false;
      out.normals[j] = normalize_null(spec, arr->at).xi;
    }
    Vec<N> t =
        detail::cross4(out.normals[0], out.normals[1], out.normals[2]);
    const double tn = norm(t);
    const double scale =
        norm(out.normals[0]) * norm(out.normals[1]) * norm(out.normals[2]);
    if (tn <= 1e-8 * scale) return false;  // rank-deficient normals
    t = (1.0 / tn) * t;
    out.tangent = t;
    out.tangent_norm2 = quad_form<N>(spec.at(z).g, t);
    return out.tangent_norm2 > 0.0;  // reject non-spacelike tangents
  };

  InteractionCurve<N> out;
  Vec<N> z = seed;
  if (!project(z))
    throw std::invalid_argument("interaction_curve: seed does not converge");
  InteractionSample<N> s0;
  if (!make_sample(z, s0))
    throw std::invalid_argument(
        "interaction_curve: degenerate or non-spacelike configuration at "
        "the seed");
  out.samples.push_back(s0);

  for (int k = 1; k < n_steps; ++k) {
    const auto& prev = out.samples.back();
    Vec<N> zn = prev.z + step * prev.tangent;
    if (!spec.in_chart(zn) || !project(zn)) {
      out.truncated = true;
      break;
    }
    InteractionSample<N> s;
    if (!make_sample(zn, s)) {
      out.truncated = true;
      break;
    }
    // Keep a consistent orientation along the curve.
    if (dot(s.tangent, prev.tangent) < 0.0) s.tangent = -1.0 * s.tangent;
    out.samples.push_back(s);
  }
  return out;
}

}  // namespace wavecone
