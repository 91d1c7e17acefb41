#pragma once

// Finite-frequency singularity detection on observer traces: band-pass
// energy exceedance over a robust (median) floor, with sub-sample peak
// localization. "Singular support" at finite frequency means: band energy
// above theta_det times the median, persisting under refinement (the
// persistence cross-check is the caller's, via repeated runs).

#include <algorithm>
#include <complex>
#include <fftw3.h>

#include <mutex>

#include "wavecone/solver/run.hpp"

namespace wavecone {

struct TracePeak {
  double s = 0.0;      // sub-sample location on the curve parameter
  double score = 0.0;  // peak energy over median floor
  int index = 0;
};

struct SingularityReport {
  std::vector<TracePeak> peaks;
  double median_energy = 0.0;
  double threshold = 0.0;
  double band_lo = 0.0, band_hi = 0.0;
  bool consistent = false;  // set by refinement comparisons
  std::vector<double> energy;  // E(s) per sample
  std::vector<double> s;       // curve parameter per sample
};

namespace detail {

inline std::vector<double> band_pass(const std::vector<double>& v, double ds,
                                     double w_lo, double w_hi) {
  const int n = static_cast<int>(v.size());
  std::vector<std::complex<double>> buf(n);
  // Tukey taper (10% each side) to suppress periodic wrap-around ringing.
  const int taper = std::max(2, n / 10);
  for (int i = 0; i < n; ++i) {
    double w = 1.0;
    if (i < taper) w = 0.5 * (1.0 - std::cos(M_PI * i / taper));
    if (i >= n - taper)
      w = 0.5 * (1.0 - std::cos(M_PI * (n - 1 - i) / taper));
    buf[i] = v[i] * w;
  }
  // FFTW plan creation/destruction is not thread safe (execution is);
  // batch drivers run detections concurrently.
  static std::mutex plan_mutex;
  fftw_plan fwd;
  {
    std::lock_guard<std::mutex> lk(plan_mutex);
    fwd = fftw_plan_dft_1d(n, reinterpret_cast<fftw_complex*>(buf.data()),
                           reinterpret_cast<fftw_complex*>(buf.data()),
                           FFTW_FORWARD, FFTW_ESTIMATE);
  }
  fftw_execute(fwd);
  {
    std::lock_guard<std::mutex> lk(plan_mutex);
    fftw_destroy_plan(fwd);
  }
  for (int k = 0; k < n; ++k) {
    const int f = k <= n / 2 ? k : k - n;
    const double w = 2.0 * M_PI * std::abs(f) / (n * ds);
    if (w < w_lo || w > w_hi) buf[k] = 0.0;
  }
  fftw_plan bwd;
  {
    std::lock_guard<std::mutex> lk(plan_mutex);
    bwd = fftw_plan_dft_1d(n, reinterpret_cast<fftw_complex*>(buf.data()),
                           reinterpret_cast<fftw_complex*>(buf.data()),
                           FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  fftw_execute(bwd);
  {
    std::lock_guard<std::mutex> lk(plan_mutex);
    fftw_destroy_plan(bwd);
  }
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = buf[i].real() / n;
  return out;
}

}  // namespace detail

inline SingularityReport detect_trace_singularities(const TraceSeries& tr,
                                                    double band_lo,
                                                    double band_hi,
                                                    double theta_det = 6.0,
                                                    double floor_rel = 1e-7) {
  const int n = static_cast<int>(tr.values.size());
  if (n < 32 || tr.ds <= 0.0)
    throw std::invalid_argument("detect: trace too short or unsampled");
  const double w_sample = 2.0 * M_PI / tr.ds;
  if (w_sample < 4.0 * band_hi)
    throw std::invalid_argument("detect: band exceeds trace resolution");
  if (!(band_lo > 0.0) || band_hi <= band_lo)
    throw std::invalid_argument("detect: empty frequency band");

  SingularityReport rep;
  rep.band_lo = band_lo;
  rep.band_hi = band_hi;
  const auto b = detail::band_pass(tr.values, tr.ds, band_lo, band_hi);

  // Windowed energy; window = one mid-band period.
  const double w_mid = 0.5 * (band_lo + band_hi);
  const int win =
      std::max(4, static_cast<int>(std::lround(2.0 * M_PI / (w_mid * tr.ds))));
  rep.s = tr.s;
  rep.energy.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const int a = std::max(0, i - win), z = std::min(n - 1, i + win);
    double e = 0.0;
    for (int j = a; j <= z; ++j) e += b[j] * b[j];
    rep.energy[i] = e / (z - a + 1);
  }

  std::vector<double> sorted = rep.energy;
  std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
  rep.median_energy = sorted[n / 2];
  // Absolute floor against pure spectral leakage: in-band peaks must carry
  // a nontrivial share of the raw trace energy.
  double raw_mean = 0.0;
  for (double v : tr.values) raw_mean += v * v;
  raw_mean /= n;
  rep.threshold =
      std::max(theta_det * rep.median_energy, floor_rel * raw_mean);

  // Local maxima over one window on each side (edges excluded: tapered
  // region), quadratic sub-sample fit.
  const int edge = std::max(win, n / 10);
  for (int i = edge; i < n - edge; ++i) {
    if (!(rep.energy[i] > rep.threshold)) continue;
    bool is_max = true;
    for (int j = std::max(0, i - win); j <= std::min(n - 1, i + win); ++j) {
      if (j < i && rep.energy[j] >= rep.energy[i]) is_max = false;
      if (j > i && rep.energy[j] > rep.energy[i]) is_max = false;
    }
    if (!is_max) continue;
    TracePeak p;
    p.index = i;
    p.score = rep.energy[i] / std::max(rep.median_energy, 1e-300);
    double shift = 0.0;
    const double em = rep.energy[i - 1], e0 = rep.energy[i],
                 ep = rep.energy[i + 1];
    const double denom = em - 2.0 * e0 + ep;
    if (denom < 0.0) shift = 0.5 * (em - ep) / denom;
    p.s = tr.s.empty() ? (i + shift) * tr.ds : tr.s[i] + shift * tr.ds;
    rep.peaks.push_back(p);
  }
  return rep;
}

// Refinement persistence: every peak of `coarse` is confirmed if `fine`
// (same experiment, doubled carrier frequency or halved source radius) has
// a peak within tol_s. Returns the confirmed subset.
inline std::vector<TracePeak> persistent_peaks(const SingularityReport& coarse,
                                               const SingularityReport& fine,
                                               double tol_s) {
  std::vector<TracePeak> out;
  for (const auto& p : coarse.peaks)
    for (const auto& q : fine.peaks)
      if (std::abs(p.s - q.s) <= tol_s) {
        out.push_back(p);
        break;
      }
  return out;
}

}  // namespace wavecone
