#pragma once

// Earliest observation point on an observer curve and the associated
// covector decomposition xi^mu = c xi + xi'.

#include "wavecone/geometry/causal.hpp"
#include "wavecone/geometry/observer.hpp"

namespace wavecone {

template <int N>
struct EarliestObs {
  Vec<N> xhat;        // mu(r_hat)
  double r_hat;       // curve parameter
  Covector<N> xi_mu;  // future null covector at x whose geodesic hits xhat
  double s_arrival;   // flow parameter of the hit
  bool beyond_cut = false;  // arrival lies past the cut value: flagged
};

// xhat(x): first point of mu that is causally after x, located by bisecting
// the arrival-time margin along the curve; xi_mu is the launching direction
// of the null geodesic realizing the boundary crossing.
template <int N>
inline EarliestObs<N> earliest_observation(CausalEngine<N>& eng,
                                           const ObserverCurve<N>& curve,
                                           const Vec<N>& x) {
  const auto& spec = eng.spec();
  // Reject points on the curve itself.
  for (int i = 0; i <= 64; ++i) {
    const double r = -1.0 + 2.0 * i / 64.0;
    if (norm(curve.pos(r) - x) < 1e-9)
      throw std::invalid_argument("earliest_observation: x lies on the curve");
  }
  auto margin = [&](double r) { return eng.chrono_margin(x, curve.pos(r)); };

  // Precondition: x in J^-(mu(1)) \ J^-(mu(-1)).
  if (margin(-1.0) > -GeoTol::chrono_margin)
    throw std::invalid_argument(
        "earliest_observation: x already in the past of mu(-1)");
  if (!(margin(1.0) > GeoTol::chrono_margin))
    throw std::invalid_argument(
        "earliest_observation: mu never enters the future of x");

  // The margin is monotone along a future timelike curve; bracket the zero
  // crossing on a coarse grid, then bisect.
  double lo = -1.0, hi = 1.0;
  for (int i = 1; i <= 32; ++i) {
    const double r = -1.0 + 2.0 * i / 32.0;
    if (margin(r) > 0.0) {
      hi = r;
      lo = r - 2.0 / 32.0;
      break;
    }
  }
  for (int it = 0; it < 52; ++it) {
    const double mid = 0.5 * (lo + hi);
    (margin(mid) > 0.0 ? hi : lo) = mid;
  }
  const double r_hat = hi;  // first parameter with positive margin

  EarliestObs<N> out;
  out.r_hat = r_hat;
  out.xhat = curve.pos(r_hat);

  std::array<double, N - 1> qs;
  for (int i = 0; i < N - 1; ++i) qs[i] = out.xhat[i + 1];
  const auto arr = eng.fan_from(x).first_arrival(qs);
  if (!arr)
    throw std::runtime_error("earliest_observation: arrival refinement lost");
  out.xi_mu = normalize_null(spec, arr->launch);
  out.s_arrival = arr->s / std::abs(arr->launch.xi[0]);  // after rescaling

  // Flag intersections past the cut value of xi_mu.
  const auto cut = cut_function<N>(eng, out.xi_mu);
  if (cut.cut_found && out.s_arrival > cut.rho + 1e-4) out.beyond_cut = true;
  return out;
}

// Lemma decomposition xi^mu = c xi + xi' with xi' conormal to the timeline
// T_{x'} (zero dt component in the product chart). Exact 1x1 solve:
// c = xi^mu_t / xi_t.
template <int N>
inline std::pair<double, Covector<N>> decompose_nu(const MetricSpec<N>& spec,
                                                   const Covector<N>& xi,
                                                   const Covector<N>& xi_mu) {
  if (causal_type(spec, xi) != CausalType::lightlike ||
      time_orientation(spec, xi) != TimeOrientation::future)
    throw std::invalid_argument("decompose_nu: xi must be future lightlike");
  if (norm(xi.x - xi_mu.x) > 1e-9)
    throw std::invalid_argument("decompose_nu: base points differ");
  const double c = xi_mu.xi[0] / xi.xi[0];
  Covector<N> prime{xi.x, xi_mu.xi - c * xi.xi};
  if (norm(prime.xi) <= 1e-12 * norm(xi_mu.xi)) prime.xi = Vec<N>{};
  return {c, prime};
}

}  // namespace wavecone
