#pragma once

// Discrete Fourier diagnostics: fraction of spectral energy inside a
// directional cone (packet quality) or in spacelike directions (timeline
// wavefront proxy). Fields are sampled on a uniform spacetime box; the
// profiles of interest decay inside it, so periodic leakage is negligible.

#include <complex>
#include <fftw3.h>
#include <functional>

#include "wavecone/geometry/covector.hpp"

namespace wavecone {

// Total rank-R DFT power split by a bin classifier over physical
// wavevectors k_i = 2 pi f_i / (n_i * step_i). The zero bin is handed to
// the classifier like any other (its direction-dependent classifiers
// return false).
template <int R, typename FieldFn, typename Classify>
inline double spectral_fraction(const FieldFn& field, const Vec<R>& lo,
                                const Vec<R>& hi, const std::array<int, R>& n,
                                const Classify& in_class) {
  size_t total = 1;
  for (int i = 0; i < R; ++i) total *= static_cast<size_t>(n[i]);
  std::vector<std::complex<double>> buf(total);
  Vec<R> step;
  for (int i = 0; i < R; ++i) step[i] = (hi[i] - lo[i]) / n[i];

  std::array<int, R> c{};
  for (size_t k = 0; k < total; ++k) {
    Vec<R> z;
    for (int i = 0; i < R; ++i) z[i] = lo[i] + step[i] * c[i];
    buf[k] = field(z);
    for (int i = R - 1; i >= 0; --i) {
      if (++c[i] < n[i]) break;
      c[i] = 0;
    }
  }

  std::array<int, R> dims;
  for (int i = 0; i < R; ++i) dims[i] = n[i];
  fftw_plan plan = fftw_plan_dft(
      R, dims.data(), reinterpret_cast<fftw_complex*>(buf.data()),
      reinterpret_cast<fftw_complex*>(buf.data()), FFTW_FORWARD,
      FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);

  double in = 0.0, all = 0.0;
  c.fill(0);
  for (size_t k = 0; k < total; ++k) {
    Vec<R> kvec;
    for (int i = 0; i < R; ++i) {
      const int f = c[i] <= n[i] / 2 ? c[i] : c[i] - n[i];
      kvec[i] = 2.0 * M_PI * f / (n[i] * step[i]);
    }
    const double p = std::norm(buf[k]);
    all += p;
    if (in_class(kvec)) in += p;
    for (int i = R - 1; i >= 0; --i) {
      if (++c[i] < n[i]) break;
      c[i] = 0;
    }
  }
  return all > 0.0 ? in / all : 0.0;
}

// Fraction of energy with wavevector direction within chart distance h of
// the +-xi axis (the finite-frequency cone B_h(xi) u B_h(-xi)).
template <int R, typename FieldFn>
inline double cone_energy_fraction(const FieldFn& field, const Vec<R>& lo,
                                   const Vec<R>& hi,
                                   const std::array<int, R>& n,
                                   const Vec<R>& xi, double h) {
  Vec<R> e = xi;
  const double nx = norm(e);
  for (int i = 0; i < R; ++i) e[i] /= nx;
  return spectral_fraction<R>(field, lo, hi, n, [e, h](const Vec<R>& k) {
    const double nk = norm(k);
    if (nk == 0.0) return false;
    double dp = 0.0, dm = 0.0;
    for (int i = 0; i < R; ++i) {
      dp += (k[i] / nk - e[i]) * (k[i] / nk - e[i]);
      dm += (k[i] / nk + e[i]) * (k[i] / nk + e[i]);
    }
    return std::min(std::sqrt(dp), std::sqrt(dm)) < h;
  });
}

// Fraction of energy in spacelike covector directions with respect to the
// metric at a representative point.
template <int R, typename FieldFn>
inline double spacelike_energy_fraction(const FieldFn& field, const Vec<R>& lo,
                                        const Vec<R>& hi,
                                        const std::array<int, R>& n,
                                        const MetricSpec<R>& spec,
                                        const Vec<R>& at) {
  const auto ev = spec.at(at);
  return spectral_fraction<R>(field, lo, hi, n, [ev](const Vec<R>& k) {
    if (norm(k) == 0.0) return false;
    return quad_form<R>(ev.ginv, k) > 0.0;
  });
}

}  // namespace wavecone
