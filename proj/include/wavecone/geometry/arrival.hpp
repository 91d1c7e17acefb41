#pragma once

// Null-front arrival times. The earliest time at which the forward light
// cone of a point p crosses a spatial chart position q' equals the arrival
// of some (unbroken) null geodesic from p, so first arrivals are computed by
// a direction fan plus Newton refinement of the shooting system
//   gamma_{xi(theta)}(s).spatial = q'.

#include <limits>
#include <optional>
#include <vector>

#include "wavecone/geometry/flow.hpp"

namespace wavecone {

template <int N>
struct Arrival {
  double t;            // coordinate arrival time
  double s;            // flow parameter at arrival
  Covector<N> launch;  // normalized launch covector at p
  Covector<N> at;      // flow covector at the arrival point
  double residual;     // spatial mismatch after refinement
};

namespace detail {

// Spatial unit-ish direction from angle parameters. d-1 parameters for
// spatial dimension d.
template <int N>
inline std::array<double, N - 1> dir_from_angles(
    const std::array<double, N - 2>& a) {
  std::array<double, N - 1> d{};
  if constexpr (N == 3) {
    d[0] = std::cos(a[0]);
    d[1] = std::sin(a[0]);
  } else {
    d[0] = std::sin(a[0]) * std::cos(a[1]);
    d[1] = std::sin(a[0]) * std::sin(a[1]);
    d[2] = std::cos(a[0]);
  }
  return d;
}

template <int N>
inline std::vector<std::array<double, N - 2>> fan_angles(int count) {
  std::vector<std::array<double, N - 2>> out;
  if constexpr (N == 3) {
    out.reserve(count);
    for (int i = 0; i < count; ++i)
      out.push_back({2.0 * M_PI * i / count});
  } else {
    // Fibonacci sphere.
    out.reserve(count);
    const double ga = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / count;
      const double polar = std::acos(std::clamp(z, -1.0, 1.0));
      const double az = ga * i;
      out.push_back({polar, az});
    }
  }
  return out;
}

}  // namespace detail

template <int N>
class NullFan {
 public:
  NullFan(const MetricSpec<N>& spec, const Vec<N>& origin,
          FlowDirection dir = FlowDirection::forward, double s_max = 40.0,
          int count = (N == 3 ? 192 : 600))
      : spec_(&spec), origin_(origin), dir_(dir), s_max_(s_max) {
    angles_ = detail::fan_angles<N>(count);
    rays_.reserve(angles_.size());
    for (const auto& a : angles_) {
      const auto cv =
          null_from_spatial<N>(spec, origin, detail::dir_from_angles<N>(a));
      rays_.push_back(flow(spec, cv, s_max_, dir_));
    }
  }

  const Vec<N>& origin() const { return origin_; }

  // Earliest (in coordinate time for forward fans; latest for backward)
  // crossing of the spatial position q'. Returns nullopt when no ray passes
  // within `capture` chart distance of q'.
  std::optional<Arrival<N>> first_arrival(
      const std::array<double, N - 1>& q, double capture = 0.35) const {
    // Collect candidate (angle, s) seeds at local minima of the spatial
    // distance along each ray.
    struct Seed {
      std::array<double, N - 2> a;
      double s;
      double d2;
    };
    std::vector<Seed> seeds;
    for (size_t r = 0; r < rays_.size(); ++r) {
      const auto& smp = rays_[r].samples;
      double prev2 = std::numeric_limits<double>::max(), prev1 = prev2;
      for (size_t i = 0; i < smp.size(); ++i) {
        const double d2 = spatial_dist2(smp[i].x, q);
        if (i >= 2 && prev1 <= prev2 && prev1 <= d2 &&
            prev1 < capture * capture)
          seeds.push_back({angles_[r], smp[i - 1].s, prev1});
        prev2 = prev1;
        prev1 = d2;
      }
      if (smp.size() >= 2 && prev1 <= prev2 && prev1 < capture * capture)
        seeds.push_back({angles_[r], smp.back().s, prev1});
    }
    std::sort(seeds.begin(), seeds.end(),
              [](const Seed& a, const Seed& b) { return a.d2 < b.d2; });
    if (seeds.size() > 24) seeds.resize(24);

    // Always add a seed aimed straight at the target; local-min scanning
    // misses crossings closer than the first few flow samples.
    {
      std::array<double, N - 1> d;
      double dn2 = 0.0;
      for (int i = 0; i < N - 1; ++i) {
        d[i] = q[i] - origin_[i + 1];
        dn2 += d[i] * d[i];
      }
      const double dn = std::sqrt(dn2);
      if (dn > 1e-14) {
        std::array<double, N - 2> a{};
        if constexpr (N == 3) {
          a[0] = std::atan2(d[1], d[0]);
        } else {
          a[0] = std::acos(std::clamp(d[2] / dn, -1.0, 1.0));
          a[1] = std::atan2(d[1], d[0]);
        }
        seeds.push_back({a, 0.5 * dn, dn2});
      }
    }

    std::optional<Arrival<N>> best;
    for (const auto& sd : seeds) {
      auto ref = refine(sd.a, sd.s, q);
      if (!ref) continue;
      const bool better =
          !best ||
          (dir_ == FlowDirection::forward ? ref->t < best->t - 1e-12
                                          : ref->t > best->t + 1e-12);
      if (better) best = ref;
    }
    return best;
  }

  // Newton solve of gamma_{xi(a)}(s).spatial = q with finite-difference
  // Jacobian. Unknowns: N-2 angles and s.
  std::optional<Arrival<N>> refine(std::array<double, N - 2> a, double s,
                                   const std::array<double, N - 1>& q) const {
    constexpr int M = N - 1;
    auto eval = [&](const std::array<double, N - 2>& ang,
                    double sp) -> std::optional<std::pair<Vec<M>, Covector<N>>> {
      Covector<N> cv;
      try {
        cv = null_from_spatial<N>(*spec_, origin_,
                                  detail::dir_from_angles<N>(ang));
      } catch (const std::exception&) {
        return std::nullopt;
      }
      auto bc = flow(*spec_, cv, std::max(sp, 1e-9), dir_);
      if (bc.s_end < sp - 1e-9) return std::nullopt;  // exited before s
      const auto here = bc.eval(sp);
      Vec<M> res;
      for (int i = 0; i < M; ++i) res[i] = here.x[i + 1] - q[i];
      return std::make_pair(res, here);
    };
    for (int it = 0; it < 40; ++it) {
      auto e0 = eval(a, s);
      if (!e0) return std::nullopt;
      double rn = norm(e0->first);
      if (rn < 1e-10) {
        auto cv =
            null_from_spatial<N>(*spec_, origin_, detail::dir_from_angles<N>(a));
        Arrival<N> out;
        out.t = e0->second.x[0];
        out.s = s;
        out.launch = cv;
        out.at = e0->second;
        out.residual = rn;
        return out;
      }
      Mat<M> J{};
      const double h = 1e-7;
      for (int c = 0; c < N - 2; ++c) {
        auto ap = a;
        ap[c] += h;
        auto ep = eval(ap, s);
        if (!ep) return std::nullopt;
        for (int rr = 0; rr < M; ++rr)
          J[rr][c] = (ep->first[rr] - e0->first[rr]) / h;
      }
      {
        auto ep = eval(a, s + h);
        if (!ep) return std::nullopt;
        for (int rr = 0; rr < M; ++rr)
          J[rr][M - 1] = (ep->first[rr] - e0->first[rr]) / h;
      }
      Vec<M> step;
      try {
        step = solve<M>(J, e0->first);
      } catch (const std::exception&) {
        return std::nullopt;
      }
      double damp = 1.0;
      const double max_step = 0.5;
      const double sn = norm(step);
      if (sn > max_step) damp = max_step / sn;
      for (int c = 0; c < N - 2; ++c) a[c] -= damp * step[c];
      s -= damp * step[M - 1];
      if (s < 1e-9) s = 1e-9;
    }
    return std::nullopt;
  }

  const std::vector<Bicharacteristic<N>>& rays() const { return rays_; }

 private:
  static double spatial_dist2(const Vec<N>& x,
                              const std::array<double, N - 1>& q) {
    double s = 0.0;
    for (int i = 0; i < N - 1; ++i) {
      const double d = x[i + 1] - q[i];
      s += d * d;
    }
    return s;
  }

  const MetricSpec<N>* spec_;
  Vec<N> origin_;
  FlowDirection dir_;
  double s_max_;
  std::vector<std::array<double, N - 2>> angles_;
  std::vector<Bicharacteristic<N>> rays_;
};

}  // namespace wavecone
