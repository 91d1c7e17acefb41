#pragma once

// Lorentzian metrics of the product form g = beta(t,x') (-dt^2 + kappa(t,x'))
// on a single chart box in R x R^d, d = 2 or 3. Coordinate 0 is time.

#include <functional>
#include <stdexcept>
#include <string>

#include "wavecone/core/linalg.hpp"

namespace wavecone {

// Tolerance ladder shared by the geometry engine. The three values are kept
// two orders apart so a failure at one level cannot masquerade as a pass at
// the next.
struct GeoTol {
  static constexpr double null_membership = 1e-10;  // |p| on the cone
  static constexpr double flow_drift = 1e-8;        // null residual along flow
  static constexpr double chrono_margin = 1e-6;     // tau > 0 predicate
};

template <int N>
struct Point {
  Vec<N> x{};  // x[0] = t, x[1..] = spatial chart coordinates

  double t() const { return x[0]; }
};

template <int N>
struct ChartBox {
  Vec<N> lo{};
  Vec<N> hi{};

  bool contains(const Vec<N>& x) const {
    for (int i = 0; i < N; ++i)
      if (!(x[i] >= lo[i] && x[i] <= hi[i])) return false;
    return true;
  }
};

template <int N>
struct MetricEval {
  Mat<N> g;        // covariant components
  Mat<N> ginv;     // contravariant components
  double sqrt_det; // sqrt(-det g)
};

// Spatial metric family kappa(t, x') as a (N-1)x(N-1) matrix.
template <int N>
using SpatialMetricFn =
    std::function<Mat<N - 1>(const Vec<N>&)>;

template <int N>
class MetricSpec {
 public:
  static constexpr int dim = N;
  static constexpr int sdim = N - 1;

  std::string name = "custom";
  std::function<double(const Vec<N>&)> beta;
  SpatialMetricFn<N> kappa;
  // Optional analytic derivatives; when absent a 4th-order central
  // difference with step fd_step is used.
  std::function<Vec<N>(const Vec<N>&)> grad_beta;
  std::function<std::array<Mat<N - 1>, N>(const Vec<N>&)> grad_kappa;
  ChartBox<N> chart;
  double fd_step = 1e-3;
  // Periodic identifications of chart coordinates (0 = none). Causal
  // queries consider the image points x_i + k * period[i].
  Vec<N> period{};
  // True when beta/kappa do not depend on t: lets the solver freeze its
  // coefficient arrays.
  bool static_metric = false;

  bool in_chart(const Vec<N>& x) const { return chart.contains(x); }

  void require_in_chart(const Vec<N>& x) const {
    if (!in_chart(x))
      throw std::domain_error("MetricSpec[" + name + "]: point outside chart");
  }

  MetricEval<N> at(const Vec<N>& x) const {
    require_in_chart(x);
    const double b = beta(x);
    if (!(b > 0.0))
      throw std::domain_error("MetricSpec[" + name + "]: beta <= 0");
    const Mat<N - 1> k = kappa(x);
    MetricEval<N> ev;
    ev.g = zero_mat<N>();
    ev.g[0][0] = -b;
    for (int i = 0; i < N - 1; ++i)
      for (int j = 0; j < N - 1; ++j) ev.g[i + 1][j + 1] = b * k[i][j];
    const Mat<N - 1> kinv = inverse<N - 1>(k);
    ev.ginv = zero_mat<N>();
    ev.ginv[0][0] = -1.0 / b;
    for (int i = 0; i < N - 1; ++i)
      for (int j = 0; j < N - 1; ++j) ev.ginv[i + 1][j + 1] = kinv[i][j] / b;
    const double detk = determinant<N - 1>(k);
    ev.sqrt_det = std::sqrt(std::pow(b, N) * detk);
    return ev;
  }

  // Gradient of the contravariant metric, d[i] = d g^{jk} / d x^i.
  // Analytic when grad_beta/grad_kappa are provided, otherwise a 4th-order
  // central difference of at().ginv (clamped to stay inside the chart).
  std::array<Mat<N>, N> dginv(const Vec<N>& x) const {
    if (grad_beta && grad_kappa) {
      const double b = beta(x);
      const Vec<N> db = grad_beta(x);
      const Mat<N - 1> k = kappa(x);
      const Mat<N - 1> kinv = inverse<N - 1>(k);
      const auto dk = grad_kappa(x);
      std::array<Mat<N>, N> out;
      for (int i = 0; i < N; ++i) {
        out[i] = zero_mat<N>();
        out[i][0][0] = db[i] / (b * b);
        // d(kinv)/dx^i = -kinv dk kinv
        Mat<N - 1> dkinv = matmul<N - 1>(kinv, matmul<N - 1>(dk[i], kinv));
        for (int a = 0; a < N - 1; ++a)
          for (int c = 0; c < N - 1; ++c)
            out[i][a + 1][c + 1] =
                -dkinv[a][c] / b - kinv[a][c] * db[i] / (b * b);
      }
      return out;
    }
    std::array<Mat<N>, N> out;
    const double h = fd_step;
    for (int i = 0; i < N; ++i) {
      Vec<N> xp = x, xm = x, xp2 = x, xm2 = x;
      xp[i] += h;
      xm[i] -= h;
      xp2[i] += 2 * h;
      xm2[i] -= 2 * h;
      const Mat<N> gp = at_unchecked(xp).ginv;
      const Mat<N> gm = at_unchecked(xm).ginv;
      const Mat<N> gp2 = at_unchecked(xp2).ginv;
      const Mat<N> gm2 = at_unchecked(xm2).ginv;
      for (int a = 0; a < N; ++a)
        for (int c = 0; c < N; ++c)
          out[i][a][c] =
              (8.0 * (gp[a][c] - gm[a][c]) - (gp2[a][c] - gm2[a][c])) /
              (12.0 * h);
    }
    return out;
  }

  // No chart check: used by finite differences and by integrator stages
  // that may momentarily poke past the boundary before exit detection.
  MetricEval<N> at_unchecked(const Vec<N>& x) const {
    const double b = beta(x);
    const Mat<N - 1> k = kappa(x);
    MetricEval<N> ev;
    ev.g = zero_mat<N>();
    ev.g[0][0] = -b;
    for (int i = 0; i < N - 1; ++i)
      for (int j = 0; j < N - 1; ++j) ev.g[i + 1][j + 1] = b * k[i][j];
    const Mat<N - 1> kinv = inverse<N - 1>(k);
    ev.ginv = zero_mat<N>();
    ev.ginv[0][0] = -1.0 / b;
    for (int i = 0; i < N - 1; ++i)
      for (int j = 0; j < N - 1; ++j) ev.ginv[i + 1][j + 1] = kinv[i][j] / b;
    ev.sqrt_det = std::sqrt(std::pow(b, N) * determinant<N - 1>(k));
    return ev;
  }
};

// --- presets ---------------------------------------------------------------

template <int N>
inline ChartBox<N> cube_chart(double half_extent, double t_lo, double t_hi) {
  ChartBox<N> box;
  box.lo[0] = t_lo;
  box.hi[0] = t_hi;
  for (int i = 1; i < N; ++i) {
    box.lo[i] = -half_extent;
    box.hi[i] = half_extent;
  }
  return box;
}

template <int N>
inline MetricSpec<N> minkowski(double half_extent = 10.0,
                               double t_lo = -10.0, double t_hi = 30.0) {
  MetricSpec<N> m;
  m.name = "minkowski";
  m.beta = [](const Vec<N>&) { return 1.0; };
  m.kappa = [](const Vec<N>&) { return identity<N - 1>(); };
  m.grad_beta = [](const Vec<N>&) { return zero_vec<N>(); };
  m.grad_kappa = [](const Vec<N>&) {
    return std::array<Mat<N - 1>, N>{};
  };
  m.chart = cube_chart<N>(half_extent, t_lo, t_hi);
  m.static_metric = true;
  return m;
}

template <int N>
inline MetricSpec<N> conformal_minkowski(double lambda,
                                         double half_extent = 10.0,
                                         double t_lo = -10.0,
                                         double t_hi = 30.0) {
  MetricSpec<N> m = minkowski<N>(half_extent, t_lo, t_hi);
  m.name = "conformal-minkowski";
  m.beta = [lambda](const Vec<N>&) { return lambda; };
  return m;
}

// Ultrastatic product R x S^2 in the polar chart (theta, phi), beta = 1.
// Only defined for spatial dimension 2. The phi range extends past +-pi so
// that the antipode of an equatorial start point is interior to the chart.
inline MetricSpec<3> ultrastatic_sphere(double t_lo = -10.0,
                                        double t_hi = 30.0) {
  MetricSpec<3> m;
  m.name = "ultrastatic-sphere";
  m.beta = [](const Vec<3>&) { return 1.0; };
  m.kappa = [](const Vec<3>& x) {
    Mat<2> k{};
    k[0][0] = 1.0;
    const double st = std::sin(x[1]);
    k[1][1] = st * st;
    return k;
  };
  m.grad_beta = [](const Vec<3>&) { return zero_vec<3>(); };
  m.grad_kappa = [](const Vec<3>& x) {
    std::array<Mat<2>, 3> dk{};
    dk[1][1][1] = 2.0 * std::sin(x[1]) * std::cos(x[1]);
    return dk;
  };
  m.chart.lo = {t_lo, 0.05 * M_PI, -4.0};
  m.chart.hi = {t_hi, 0.95 * M_PI, 4.0};
  m.period[2] = 2.0 * M_PI;
  m.static_metric = true;
  return m;
}

// Minkowski with a localized smooth conformal bump in beta.
// Minkowski with a localized smooth conformal bump in beta. When
// `time_independent` is set the bump depends on the spatial coordinates
// only (center[0] ignored), which lets the solver freeze coefficients.
template <int N>
inline MetricSpec<N> bump_perturbed(double amplitude, Vec<N> center,
                                    double width,
                                    bool time_independent = false,
                                    double half_extent = 10.0,
                                    double t_lo = -10.0, double t_hi = 30.0) {
  MetricSpec<N> m = minkowski<N>(half_extent, t_lo, t_hi);
  m.name = "bump-perturbed";
  const int i0 = time_independent ? 1 : 0;
  m.beta = [amplitude, center, width, i0](const Vec<N>& x) {
    double r2 = 0.0;
    for (int i = i0; i < N; ++i) {
      const double d = x[i] - center[i];
      r2 += d * d;
    }
    return 1.0 + amplitude * std::exp(-r2 / (width * width));
  };
  m.grad_beta = [amplitude, center, width, i0](const Vec<N>& x) {
    double r2 = 0.0;
    for (int i = i0; i < N; ++i) {
      const double d = x[i] - center[i];
      r2 += d * d;
    }
    const double e = amplitude * std::exp(-r2 / (width * width));
    Vec<N> g{};
    for (int i = i0; i < N; ++i)
      g[i] = e * (-2.0 * (x[i] - center[i]) / (width * width));
    return g;
  };
  m.grad_kappa = [](const Vec<N>&) { return std::array<Mat<N - 1>, N>{}; };
  m.static_metric = time_independent;
  return m;
}

}  // namespace wavecone
