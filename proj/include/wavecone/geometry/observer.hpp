#pragma once

#include <functional>

#include "wavecone/geometry/covector.hpp"

namespace wavecone {

// Future pointing timelike curve mu : [-1, 1] -> M.
template <int N>
struct ObserverCurve {
  std::function<Vec<N>(double)> pos;
  std::function<Vec<N>(double)> vel;

  Vec<N> operator()(double s) const { return pos(s); }

  bool timelike_on_samples(const MetricSpec<N>& spec, int n = 65) const {
    for (int i = 0; i < n; ++i) {
      const double s = -1.0 + 2.0 * i / (n - 1);
      const auto ev = spec.at(pos(s));
      const Vec<N> v = vel(s);
      if (!(quad_form<N>(ev.g, v) < 0.0)) return false;
      if (!(v[0] > 0.0)) return false;  // future pointing
    }
    return true;
  }
};

// Straight timelike line t -> (t0 + s*T, x0'), the standard test observer.
template <int N>
inline ObserverCurve<N> axis_observer(Vec<N> base, double T) {
  ObserverCurve<N> c;
  c.pos = [base, T](double s) {
    Vec<N> x = base;
    x[0] = base[0] + s * T;
    return x;
  };
  c.vel = [T](double) {
    Vec<N> v{};
    v[0] = T;
    return v;
  };
  return c;
}

}  // namespace wavecone
