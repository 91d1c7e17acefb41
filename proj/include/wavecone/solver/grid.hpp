#pragma once

// Uniform spatial grid for the 1+D wave solver (D = 2 or 3), plus the
// flat-binary snapshot format.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <vector>

#include "wavecone/geometry/metric.hpp"

namespace wavecone {

template <int D>
struct Grid {
  std::array<int, D> n{};      // samples per axis
  double h = 0.05;             // uniform spacing
  std::array<double, D> lo{};  // chart coordinate of sample (0,...,0)
  double t0 = 0.0;
  double dt = 0.02;
  int nt = 0;
  int sponge = 16;  // absorbing-layer width in cells

  size_t size() const {
    size_t s = 1;
    for (int i = 0; i < D; ++i) s *= static_cast<size_t>(n[i]);
    return s;
  }

  // Row-major, last axis fastest.
  size_t idx(const std::array<int, D>& c) const {
    size_t k = 0;
    for (int i = 0; i < D; ++i) k = k * n[i] + c[i];
    return k;
  }

  std::array<int, D> coords(size_t k) const {
    std::array<int, D> c{};
    for (int i = D - 1; i >= 0; --i) {
      c[i] = static_cast<int>(k % n[i]);
      k /= n[i];
    }
    return c;
  }

  std::array<double, D> pos(const std::array<int, D>& c) const {
    std::array<double, D> p;
    for (int i = 0; i < D; ++i) p[i] = lo[i] + h * c[i];
    return p;
  }

  double time_at(int step) const { return t0 + dt * step; }

  // Nearest (floored) cell of a chart position.
  std::array<int, D> cell_of(const std::array<double, D>& x) const {
    std::array<int, D> c;
    for (int i = 0; i < D; ++i)
      c[i] = static_cast<int>(std::floor((x[i] - lo[i]) / h));
    return c;
  }

  bool interior(const std::array<int, D>& c, int margin = 1) const {
    for (int i = 0; i < D; ++i)
      if (c[i] < margin || c[i] >= n[i] - margin) return false;
    return true;
  }
};

using Field = std::vector<double>;

// Square symmetric grid centred at the origin; dt from the CFL bound
// against the max characteristic coordinate speed of the metric.
template <int D>
inline Grid<D> make_grid(const MetricSpec<D + 1>& spec, double extent, int n,
                         double t0, double t1, double cfl = 0.4,
                         int sponge = 16) {
  Grid<D> g;
  g.n.fill(n);
  g.h = 2.0 * extent / (n - 1);
  g.lo.fill(-extent);
  g.t0 = t0;
  g.sponge = sponge;
  // Characteristic speed: on the cone omega^2 = kappa^{ij} k_i k_j (beta
  // cancels), so the max coordinate speed is sqrt(max eig kappa^{-1}).
  double vmax = 0.0;
  for (int trial = 0; trial < 64; ++trial) {
    Vec<D + 1> x{};
    x[0] = t0 + (t1 - t0) * (trial % 8) / 7.0;
    for (int i = 0; i < D; ++i)
      x[i + 1] = -extent + 2.0 * extent * ((trial / 8 + i * 3) % 8) / 7.0;
    if (!spec.in_chart(x)) continue;
    const auto ev = spec.at(x);
    Mat<D> kinvb;
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j)
        kinvb[i][j] = -ev.ginv[i + 1][j + 1] / ev.ginv[0][0];
    const auto eig = sym_eigenvalues<D>(kinvb);
    vmax = std::max(vmax, std::sqrt(eig[D - 1]));
  }
  if (vmax <= 0.0) throw std::runtime_error("make_grid: grid outside chart");
  g.dt = cfl * g.h / vmax;
  g.nt = static_cast<int>(std::ceil((t1 - t0) / g.dt)) + 1;
  return g;
}

// --- snapshot IO -------------------------------------------------------------
// 64-byte header: magic "WECH", u32 version, u32 rank, u32 dims[4] (unused
// trailing dims zero), f64 h, f64 t, padding to 64. Payload: float64 LE.

namespace snapshot {

inline constexpr uint32_t version = 1;

template <int D>
inline void write(const std::string& path, const Grid<D>& grid,
                  const Field& field, double t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("snapshot: cannot open " + path);
  char header[64] = {};
  std::memcpy(header, "WECH", 4);
  uint32_t v = version, rank = D;
  std::memcpy(header + 4, &v, 4);
  std::memcpy(header + 8, &rank, 4);
  uint32_t dims[4] = {};
  for (int i = 0; i < D; ++i) dims[i] = static_cast<uint32_t>(grid.n[i]);
  std::memcpy(header + 12, dims, 16);
  std::memcpy(header + 28, &grid.h, 8);
  std::memcpy(header + 36, &t, 8);
  out.write(header, 64);
  out.write(reinterpret_cast<const char*>(field.data()),
            static_cast<std::streamsize>(field.size() * sizeof(double)));
}

template <int D>
inline Field read(const std::string& path, std::array<int, D>* dims_out,
                  double* t_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("snapshot: cannot open " + path);
  char header[64];
  in.read(header, 64);
  if (std::memcmp(header, "WECH", 4) != 0)
    throw std::runtime_error("snapshot: bad magic in " + path);
  uint32_t v, rank;
  std::memcpy(&v, header + 4, 4);
  std::memcpy(&rank, header + 8, 4);
  if (v != version || rank != static_cast<uint32_t>(D))
    throw std::runtime_error("snapshot: version/rank mismatch in " + path);
  uint32_t dims[4];
  std::memcpy(dims, header + 12, 16);
  size_t total = 1;
  for (int i = 0; i < D; ++i) {
    (*dims_out)[i] = static_cast<int>(dims[i]);
    total *= dims[i];
  }
  if (t_out) std::memcpy(t_out, header + 36, 8);
  Field f(total);
  in.read(reinterpret_cast<char*>(f.data()),
          static_cast<std::streamsize>(total * sizeof(double)));
  if (!in) throw std::runtime_error("snapshot: truncated payload in " + path);
  return f;
}

}  // namespace snapshot

}  // namespace wavecone
