#pragma once

// Linear-algebra side of the scattering relation: the (R2)(c) span test and
// the cone-constrained span adjustment (given a perturbed xi0, move xi1
// along the light cone so the span condition is restored).

#include "wavecone/geometry/covector.hpp"

namespace wavecone {

struct SpanResult {
  bool in_span = false;
  Vec<3> coeffs{};     // eta0 = a eta1 + b eta2 + c eta3
  double residual = 0.0;  // relative to |eta0|
  double cond = 0.0;      // basis condition number (Gram)
  bool degenerate = false;
};

// eta0 in span(eta1, eta2, eta3)? Least squares over the covector
// components; all four must sit at (numerically) the same base point.
template <int N>
inline SpanResult span_check(const std::array<Covector<N>, 4>& etas,
                             double tau_span = 1e-8,
                             double tau_meet = 1e-6) {
  static_assert(N >= 3);
  for (int i = 1; i < 4; ++i)
    if (norm(etas[i].x - etas[0].x) > tau_meet)
      throw std::invalid_argument("span_check: base points differ");

  std::array<Vec<N>, 3> cols{etas[1].xi, etas[2].xi, etas[3].xi};
  SpanResult out;

  // Gram condition of the basis.
  Mat<3> gram{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) gram[i][j] = dot(cols[i], cols[j]);
  const auto eig = sym_eigenvalues<3>(gram);
  if (eig[0] <= 1e-12 * eig[2]) {
    out.degenerate = true;
    return out;
  }
  out.cond = std::sqrt(eig[2] / std::max(eig[0], 1e-300));

  const auto ls = least_squares<N, 3>(cols, etas[0].xi);
  out.coeffs = ls.coeffs;
  out.residual = ls.residual;  // already relative to |eta0|
  out.in_span = out.residual <= tau_span;
  return out;
}

template <int N>
struct SpanAdjust {
  Vec<N> xi1_tilde{};
  double theta = 0.0;  // cone-family parameter actually used
  int axis = 0;        // 2 or 3: which basis completion was viable
  double null_residual = 0.0;
  double span_residual = 0.0;
};

// Given xi0_tilde near a xi0 that lay in span(xi1, xi2, xi3), return a
// lightlike xi1_tilde near xi1 with xi0_tilde in span(xi1_tilde, xi2, xi3).
// Construction: project xi1 onto span(xi0_tilde, xi2, xi3), then restore
// nullness by a 1-d Newton slide along xi2 or xi3 (whichever axis the cone
// is transversal to).
template <int N>
inline SpanAdjust<N> lightcone_span_adjust(const Mat<N>& g,
                                           const Vec<N>& xi0_tilde,
                                           const Vec<N>& xi1,
                                           const Vec<N>& xi2,
                                           const Vec<N>& xi3) {
  const Mat<N> ginv = inverse<N>(g);
  const auto Q = [&](const Vec<N>& v) { return quad_form<N>(ginv, v); };
  const auto B = [&](const Vec<N>& u, const Vec<N>& v) {
    double s = 0.0;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) s += ginv[i][j] * u[i] * v[j];
    return s;
  };
  const double scale = dot(xi1, xi1);
  if (std::abs(Q(xi1)) > 1e-8 * scale ||
      std::abs(Q(xi2)) > 1e-8 * dot(xi2, xi2) ||
      std::abs(Q(xi3)) > 1e-8 * dot(xi3, xi3))
    throw std::invalid_argument("span_adjust: xi1..xi3 must be lightlike");

  // xi1 ~ a xi0_tilde + b xi2 + c xi3; a must be away from zero (the
  // premise xi0 not in span(xi2, xi3)).
  LstSqResult<N, 3> ls;
  try {
    ls = least_squares<N, 3>(std::array<Vec<N>, 3>{xi0_tilde, xi2, xi3}, xi1);
  } catch (const std::runtime_error&) {
    throw std::invalid_argument("span_adjust: degenerate projection basis");
  }
  const double a = ls.coeffs[0];
  if (std::abs(a) < 1e-10)
    throw std::invalid_argument("span_adjust: xi0 lies in span(xi2, xi3)");

  auto candidate = [&](double b, double c) {
    Vec<N> v{};
    for (int i = 0; i < N; ++i)
      v[i] = a * xi0_tilde[i] + b * xi2[i] + c * xi3[i];
    return v;
  };
  const Vec<N> v0 = candidate(ls.coeffs[1], ls.coeffs[2]);

  // Basis test: slide along the axis the cone is transversal to at v0.
  const double d2 = B(v0, xi2), d3 = B(v0, xi3);
  const bool use2 = std::abs(d2) >= std::abs(d3);
  if (std::max(std::abs(d2), std::abs(d3)) < 1e-12 * std::abs(Q(v0)) &&
      std::abs(Q(v0)) > 1e-12 * scale)
    throw std::runtime_error("span_adjust: both completion axes degenerate");

  double t = 0.0;
  double b = ls.coeffs[1], c = ls.coeffs[2];
  for (int it = 0; it < 60; ++it) {
    const Vec<N> v = candidate(use2 ? b + t : b, use2 ? c : c + t);
    const double q = Q(v);
    if (std::abs(q) <= 1e-14 * scale) break;
    const double dq = 2.0 * B(v, use2 ? xi2 : xi3);
    if (dq == 0.0) throw std::runtime_error("span_adjust: Newton stalled");
    t -= q / dq;
  }

  SpanAdjust<N> out;
  out.theta = t;
  out.axis = use2 ? 2 : 3;
  out.xi1_tilde = candidate(use2 ? b + t : b, use2 ? c : c + t);
  out.null_residual = std::abs(Q(out.xi1_tilde)) / scale;
  // Exact-by-construction span residual, reported via least squares.
  const auto back = least_squares<N, 3>(
      std::array<Vec<N>, 3>{out.xi1_tilde, xi2, xi3}, xi0_tilde);
  out.span_residual = back.residual;
  return out;
}

}  // namespace wavecone
