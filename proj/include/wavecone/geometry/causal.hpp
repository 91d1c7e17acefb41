#pragma once

// Time separation tau, the causal relation and the cut function rho.
// Chronology is decided by comparing coordinate time against first null
// arrival (the boundary of the causal future is ruled by null geodesics);
// the value of tau is then maximized over broken causal paths.

#include <memory>
#include <random>

#include "wavecone/geometry/arrival.hpp"

namespace wavecone {

enum class CausalClass { chronological, causal_only, none };

template <int N>
struct TauResult {
  double tau = 0.0;
  bool converged = true;  // false: flagged estimate
  double error_bound = 0.0;
};

namespace detail {

// Proper time of the piecewise-straight chart path through pts, by 4-point
// Gauss-Legendre per leg. Legs that fail to be future causal contribute a
// negative penalty proportional to the violation.
template <int N>
inline double broken_path_proper_time(const MetricSpec<N>& spec,
                                      const std::vector<Vec<N>>& pts,
                                      double* violation = nullptr) {
  static const double gl_x[4] = {0.069431844202973712, 0.33000947820757187,
                                 0.66999052179242813, 0.93056815579702629};
  static const double gl_w[4] = {0.17392742256872693, 0.32607257743127307,
                                 0.32607257743127307, 0.17392742256872693};
  double total = 0.0, viol = 0.0;
  for (size_t leg = 0; leg + 1 < pts.size(); ++leg) {
    const Vec<N> dz = pts[leg + 1] - pts[leg];
    if (dz[0] <= 0.0) {
      viol += 1.0 - dz[0];
      continue;
    }
    for (int qn = 0; qn < 4; ++qn) {
      const Vec<N> z = pts[leg] + gl_x[qn] * dz;
      if (!spec.in_chart(z)) {
        viol += 1.0;
        continue;
      }
      const auto ev = spec.at(z);
      const double q = quad_form<N>(ev.g, dz);
      if (q < 0.0)
        total += gl_w[qn] * std::sqrt(-q);
      else
        viol += gl_w[qn] * q;
    }
  }
  if (violation) *violation = viol;
  return total - 1e3 * viol;
}

// Coordinate-wise gradient ascent on the interior points.
template <int N>
inline double maximize_proper_time(const MetricSpec<N>& spec,
                                   std::vector<Vec<N>>& pts, int iters) {
  double best = broken_path_proper_time<N>(spec, pts);
  double step = 0.05 * norm(pts.back() - pts.front());
  for (int it = 0; it < iters; ++it) {
    bool improved = false;
    for (size_t i = 1; i + 1 < pts.size(); ++i) {
      for (int c = 0; c < N; ++c) {
        for (double sgn : {1.0, -1.0}) {
          const double old = pts[i][c];
          pts[i][c] = old + sgn * step;
          const double v = broken_path_proper_time<N>(spec, pts);
          if (v > best + 1e-15) {
            best = v;
            improved = true;
            break;
          }
          pts[i][c] = old;
        }
      }
    }
    if (!improved) {
      step *= 0.5;
      if (step < 1e-9) break;
    }
  }
  return best;
}

}  // namespace detail

// Shared fan cache so repeated tau / rho queries from the same base point
// reuse the ray bundle.
template <int N>
class CausalEngine {
 public:
  explicit CausalEngine(const MetricSpec<N>& spec) : spec_(&spec) {}

  const NullFan<N>& fan_from(const Vec<N>& p) {
    for (auto& e : cache_)
      if (norm(e.first - p) < 1e-14) return *e.second;
    cache_.emplace_back(
        p, std::make_unique<NullFan<N>>(*spec_, p, FlowDirection::forward));
    if (cache_.size() > 16) cache_.erase(cache_.begin());
    return *cache_.back().second;
  }

  // Coordinate-time margin of q past the null front from p:
  //   > 0 chronological, ~ 0 on the cone, < 0 not causal.
  // Unreachable spatial positions (front exits the chart first) give -inf.
  double chrono_margin(const Vec<N>& p, const Vec<N>& q) {
    if (norm(q - p) == 0.0) return 0.0;
    std::array<double, N - 1> qs;
    double spatial2 = 0.0;
    for (int i = 0; i < N - 1; ++i) {
      qs[i] = q[i + 1];
      const double d = q[i + 1] - p[i + 1];
      spatial2 += d * d;
    }
    // Cone vertex: same spatial position, margin is the time offset.
    if (spatial2 < 1e-24) return q[0] - p[0];
    if (q[0] <= p[0]) return -std::numeric_limits<double>::infinity();

    // Periodic coordinates: q' and its chart images are the same point, so
    // the front arrival is the earliest over all images.
    std::vector<std::array<double, N - 1>> images{qs};
    for (int i = 0; i < N - 1; ++i) {
      const double P = spec_->period[i + 1];
      if (P <= 0.0) continue;
      const size_t n = images.size();
      for (size_t k = 0; k < n; ++k) {
        for (double off : {-P, P}) {
          auto img = images[k];
          img[i] += off;
          Vec<N> probe = q;
          probe[i + 1] = img[i];
          if (spec_->in_chart(probe)) images.push_back(img);
        }
      }
    }
    const auto& fan = fan_from(p);
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& img : images)
      if (const auto arr = fan.first_arrival(img))
        best = std::max(best, q[0] - arr->t);
    return best;
  }

  CausalClass classify(const Vec<N>& p, const Vec<N>& q) {
    const double m = chrono_margin(p, q);
    if (m > GeoTol::chrono_margin) return CausalClass::chronological;
    if (m >= -GeoTol::chrono_margin) return CausalClass::causal_only;
    return CausalClass::none;
  }

  // tau(p, q): 0 unless q is chronologically after p; otherwise the proper
  // time maximized over broken causal paths (K legs, multi-start).
  TauResult<N> time_separation(const Vec<N>& p, const Vec<N>& q,
                               int legs = 8, unsigned seed = 12345) {
    TauResult<N> out;
    const double m = chrono_margin(p, q);
    if (!(m > GeoTol::chrono_margin)) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double best = 0.0;
    const double span = norm(q - p);
    for (int trial = 0; trial < 3; ++trial) {
      std::vector<Vec<N>> pts(legs + 1);
      for (int i = 0; i <= legs; ++i) {
        const double u = static_cast<double>(i) / legs;
        pts[i] = p + u * (q - p);
        if (trial > 0 && i > 0 && i < legs)
          for (int c = 1; c < N; ++c)
            pts[i][c] += 0.05 * span * gauss(rng);
      }
      best = std::max(best, detail::maximize_proper_time<N>(*spec_, pts, 400));
    }
    if (best < 0.0) {
      // Chronological by the margin test but the path search failed:
      // flagged estimate from the margin itself.
      out.tau = std::sqrt(2.0 * m * std::max(q[0] - p[0], m));
      out.converged = false;
      out.error_bound = out.tau;
      return out;
    }
    out.tau = best;
    return out;
  }

  const MetricSpec<N>& spec() const { return *spec_; }

 private:
  const MetricSpec<N>* spec_;
  std::vector<std::pair<Vec<N>, std::unique_ptr<NullFan<N>>>> cache_;
};

template <int N>
struct CutResult {
  double rho;
  bool cut_found;      // false: chart exit, rho = s(eta)
  bool flagged = false;
};

// rho(eta) = sup { s : tau(x, gamma_eta(s)) = 0 }, by bracket-and-bisect on
// the chronology predicate. Past pointing covectors are handled with the
// opposite time orientation.
template <int N>
inline CutResult<N> cut_function(CausalEngine<N>& eng, const Covector<N>& eta,
                                 double s_cap = 40.0) {
  const auto& spec = eng.spec();
  const auto orient = time_orientation(spec, eta);
  if (orient == TimeOrientation::none)
    throw std::invalid_argument("cut_function: covector not causal");
  Covector<N> e = eta;
  const bool past = (orient == TimeOrientation::past);

  auto bc = flow(spec, e, s_cap, FlowDirection::forward);
  // For a past pointing covector the forward Hamiltonian flow runs into the
  // past; chronology is then tested with arguments swapped.
  auto chron = [&](double s) {
    const auto g = bc.eval(s);
    const double m = past ? eng.chrono_margin(g.x, e.x)
                          : eng.chrono_margin(e.x, g.x);
    return m > GeoTol::chrono_margin;
  };

  const double s_end = bc.s_end;
  // Bracket by doubling, always finishing at the chart exit parameter.
  double lo = 0.0, hi = 0.0;
  bool found = false;
  double s = std::min(0.05 * s_end, 0.05);
  while (true) {
    const double probe = std::min(s, s_end);
    if (chron(probe)) {
      hi = probe;
      found = true;
      break;
    }
    lo = probe;
    if (probe >= s_end) break;
    s *= 2.0;
  }
  if (!found) return {s_end, false};
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (chron(mid))
      hi = mid;
    else
      lo = mid;
  }
  return {0.5 * (lo + hi), true};
}

}  // namespace wavecone
