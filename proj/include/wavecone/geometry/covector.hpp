#pragma once

#include <stdexcept>

#include "wavecone/geometry/metric.hpp"

namespace wavecone {

enum class CausalType { timelike, lightlike, spacelike };
enum class TimeOrientation { future, past, none };

template <int N>
struct Covector {
  Vec<N> x{};   // base point
  Vec<N> xi{};  // cotangent components

  Point<N> base() const { return Point<N>{x}; }
};

// Principal symbol p(x, xi) = g^{ij} xi_i xi_j of the wave operator.
template <int N>
inline double hamiltonian_value(const MetricSpec<N>& spec,
                                const Covector<N>& cv) {
  const auto ev = spec.at(cv.x);
  return quad_form<N>(ev.ginv, cv.xi);
}

template <int N>
inline CausalType causal_type(const MetricSpec<N>& spec,
                              const Covector<N>& cv) {
  const double p = hamiltonian_value(spec, cv);
  const double scale = dot(cv.xi, cv.xi);
  if (std::abs(p) <= GeoTol::null_membership * std::max(scale, 1e-300))
    return CausalType::lightlike;
  return p < 0 ? CausalType::timelike : CausalType::spacelike;
}

// With dt future-directed, a causal covector is future pointing iff its
// associated vector g^{ij} xi_j has positive time component, i.e. xi_0 < 0
// for the product metrics handled here.
template <int N>
inline TimeOrientation time_orientation(const MetricSpec<N>& spec,
                                        const Covector<N>& cv) {
  if (causal_type(spec, cv) == CausalType::spacelike)
    return TimeOrientation::none;
  const auto ev = spec.at(cv.x);
  double vt = 0.0;
  for (int j = 0; j < N; ++j) vt += ev.ginv[0][j] * cv.xi[j];
  if (vt > 0) return TimeOrientation::future;
  if (vt < 0) return TimeOrientation::past;
  return TimeOrientation::none;
}

template <int N>
inline bool is_lightlike(const MetricSpec<N>& spec, const Covector<N>& cv) {
  return causal_type(spec, cv) == CausalType::lightlike;
}

// Projective representative of a lightlike covector: dt-component -1 for
// future pointing (+1 for past pointing), which on the cone is the same as
// unit kappa-norm of the spatial part.
template <int N>
inline Covector<N> normalize_null(const MetricSpec<N>& spec,
                                  Covector<N> cv) {
  if (std::abs(cv.xi[0]) < 1e-300)
    throw std::invalid_argument("normalize_null: vanishing dt-component");
  const double s = 1.0 / std::abs(cv.xi[0]);
  for (int i = 0; i < N; ++i) cv.xi[i] *= s;
  (void)spec;
  return cv;
}

// Future null covector from a spatial direction (need not be unit): returns
// the representative with xi_0 = -1 and spatial part on the cone.
template <int N>
inline Covector<N> null_from_spatial(const MetricSpec<N>& spec,
                                     const Vec<N>& x,
                                     const std::array<double, N - 1>& dir) {
  const auto ev = spec.at(x);
  // Solve g^{kl} xi_k xi_l = -g^{00} for the scaling of the spatial part.
  Mat<N - 1> kstar;  // contravariant spatial block
  for (int i = 0; i < N - 1; ++i)
    for (int j = 0; j < N - 1; ++j) kstar[i][j] = ev.ginv[i + 1][j + 1];
  double q = 0.0;
  for (int i = 0; i < N - 1; ++i)
    for (int j = 0; j < N - 1; ++j) q += dir[i] * kstar[i][j] * dir[j];
  if (q <= 0.0)
    throw std::invalid_argument("null_from_spatial: degenerate direction");
  const double scale = std::sqrt(-ev.ginv[0][0] / q);
  Covector<N> cv;
  cv.x = x;
  cv.xi[0] = -1.0;
  for (int i = 0; i < N - 1; ++i) cv.xi[i + 1] = scale * dir[i];
  return cv;
}

}  // namespace wavecone
