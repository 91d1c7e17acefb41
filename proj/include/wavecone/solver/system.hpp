#pragma once

// Divergence-form discretization of box_g on a product metric and the
// leapfrog update shared by every solve. Spatial metric must be diagonal on
// the grid (true for all presets used in wave runs).

#include "wavecone/solver/grid.hpp"

namespace wavecone {

template <int D>
class WaveSystem {
 public:
  WaveSystem(const MetricSpec<D + 1>& spec, const Grid<D>& grid,
             bool absorbing = true)
      : spec_(&spec), grid_(grid), absorbing_(absorbing) {
    const size_t sz = grid_.size();
    w_.resize(sz);
    a_minus_.resize(sz);
    a_plus_.resize(sz);
    for (int d = 0; d < D; ++d) m_[d].resize(sz);
    sigma_.assign(sz, 0.0);
    if (absorbing_) build_sponge();
    check_diagonal();
    static_ = spec.static_metric;
    sample_m(grid_.t0);
    sample_a(grid_.t0 - 0.5 * grid_.dt, a_minus_);
    sample_a(grid_.t0 + 0.5 * grid_.dt, a_plus_);
    if (static_) a_minus_ = a_plus_;
    prepared_t_ = grid_.t0;
  }

  // Refresh the time-dependent coefficient fields for the step at t^n = t.
  // Idempotent; shared by every field advanced within the step.
  void prepare_step(double t) {
    if (static_ || t == prepared_t_) return;
    sample_a(t - 0.5 * grid_.dt, a_minus_);
    sample_a(t + 0.5 * grid_.dt, a_plus_);
    sample_m(t);
    prepared_t_ = t;
  }

  const Grid<D>& grid() const { return grid_; }
  const MetricSpec<D + 1>& spec() const { return *spec_; }
  const Field& weight() const { return w_; }

  // One leapfrog step: given u^{n-1}, u^n and the source side S = w * box u
  // (i.e. w * (rhs - u^3)) sampled at t^n, writes u^{n+1}. `t` is t^n.
  void advance(const Field& prev, const Field& curr, const Field& S,
               Field& next, double t) {
    prepare_step(t);
    const double dt2 = grid_.dt * grid_.dt;
    const double inv_h2 = 1.0 / (grid_.h * grid_.h);
    const size_t sz = grid_.size();
    if (next.size() != sz) next.assign(sz, 0.0);

    std::array<size_t, D> stride;
    {
      size_t s = 1;
      for (int i = D - 1; i >= 0; --i) {
        stride[i] = s;
        s *= grid_.n[i];
      }
    }
    auto kernel = [&](size_t k) {
      double L = 0.0;
      for (int d = 0; d < D; ++d) {
        const size_t sp = k + stride[d], sm = k - stride[d];
        const double mp = 0.5 * (m_[d][k] + m_[d][sp]);
        const double mm = 0.5 * (m_[d][k] + m_[d][sm]);
        L += mp * (curr[sp] - curr[k]) - mm * (curr[k] - curr[sm]);
      }
      L *= inv_h2;
      const double ap = a_plus_[k], am = a_minus_[k];
      const double c = 0.5 * a_plus_[k] * sigma_[k] * grid_.dt;
      next[k] = (ap * curr[k] + am * (curr[k] - prev[k]) + c * prev[k] +
                 dt2 * (L - S[k])) /
                (ap + c);
    };
    // Dirichlet zero on the outermost layer.
    if constexpr (D == 2) {
      for (int i = 1; i < grid_.n[0] - 1; ++i) {
        const size_t row = static_cast<size_t>(i) * stride[0];
        for (int j = 1; j < grid_.n[1] - 1; ++j) kernel(row + j);
      }
    } else {
      for (int i = 1; i < grid_.n[0] - 1; ++i)
        for (int j = 1; j < grid_.n[1] - 1; ++j) {
          const size_t base = static_cast<size_t>(i) * stride[0] +
                              static_cast<size_t>(j) * stride[1];
          for (int kk = 1; kk < grid_.n[2] - 1; ++kk) kernel(base + kk);
        }
    }
  }

  // Discrete box_g at time t from three time levels (centred).
  Field box_apply(const Field& prev, const Field& curr, const Field& next,
                  double t) {
    prepare_step(t);
    const double inv_dt2 = 1.0 / (grid_.dt * grid_.dt);
    const double inv_h2 = 1.0 / (grid_.h * grid_.h);
    Field out(grid_.size(), 0.0);
    std::array<size_t, D> stride;
    {
      size_t s = 1;
      for (int i = D - 1; i >= 0; --i) {
        stride[i] = s;
        s *= grid_.n[i];
      }
    }
    const size_t sz = grid_.size();
    for (size_t k = 0; k < sz; ++k) {
      const auto c = grid_.coords(k);
      if (!grid_.interior(c)) continue;
      double L = 0.0;
      for (int d = 0; d < D; ++d) {
        const size_t sp = k + stride[d], sm = k - stride[d];
        const double mp = 0.5 * (m_[d][k] + m_[d][sp]);
        const double mm = 0.5 * (m_[d][k] + m_[d][sm]);
        L += mp * (curr[sp] - curr[k]) - mm * (curr[k] - curr[sm]);
      }
      L *= inv_h2;
      const double tt = -(a_plus_[k] * (next[k] - curr[k]) -
                          a_minus_[k] * (curr[k] - prev[k])) *
                        inv_dt2;
      out[k] = (tt + L) / w_[k];
    }
    return out;
  }

  // Exactly conserved leapfrog energy (static coefficients, no damping):
  // E = 1/2 sum a ((u^{n+1}-u^n)/dt)^2 + 1/2 sum_faces m (Du^{n+1})(Du^n).
  double energy(const Field& curr, const Field& next) const {
    const double inv_dt = 1.0 / grid_.dt;
    const double inv_h = 1.0 / grid_.h;
    std::array<size_t, D> stride;
    {
      size_t s = 1;
      for (int i = D - 1; i >= 0; --i) {
        stride[i] = s;
        s *= grid_.n[i];
      }
    }
    double e = 0.0;
    const size_t sz = grid_.size();
    for (size_t k = 0; k < sz; ++k) {
      const auto c = grid_.coords(k);
      const double du = (next[k] - curr[k]) * inv_dt;
      e += 0.5 * a_plus_[k] * du * du;
      // Faces up to and including the Dirichlet layer: the boundary face
      // gradient carries energy during reflections.
      for (int d = 0; d < D; ++d) {
        if (c[d] + 1 >= grid_.n[d]) continue;
        const size_t sp = k + stride[d];
        const double mf = 0.5 * (m_[d][k] + m_[d][sp]);
        e += 0.5 * mf * (next[sp] - next[k]) * (curr[sp] - curr[k]) * inv_h *
             inv_h;
      }
    }
    return e * std::pow(grid_.h, D);
  }

  // w * box_g(phi) at cell c, using exactly the stepper's coefficients, so
  // a linear solve driven by this source reproduces phi to round-off.
  template <typename Phi>
  double weighted_box_of(const Phi& phi, const std::array<int, D>& c,
                         size_t k, double t) const {
    const double dt = grid_.dt, h = grid_.h;
    const auto z = spacetime(c, t);
    const double p0 = phi(z);
    Vec<D + 1> zt = z;
    zt[0] = t + dt;
    const double pp = phi(zt);
    zt[0] = t - dt;
    const double pm = phi(zt);
    const double tt =
        -(a_plus_[k] * (pp - p0) - a_minus_[k] * (p0 - pm)) / (dt * dt);
    double L = 0.0;
    size_t stride = 1;
    std::array<size_t, D> str;
    for (int i = D - 1; i >= 0; --i) {
      str[i] = stride;
      stride *= grid_.n[i];
    }
    for (int d = 0; d < D; ++d) {
      Vec<D + 1> zp = z, zm = z;
      zp[d + 1] += h;
      zm[d + 1] -= h;
      const double mp = 0.5 * (m_[d][k] + m_[d][k + str[d]]);
      const double mm = 0.5 * (m_[d][k] + m_[d][k - str[d]]);
      L += mp * (phi(zp) - p0) - mm * (p0 - phi(zm));
    }
    return tt + L / (h * h);
  }

  Vec<D + 1> spacetime(const std::array<int, D>& c, double t) const {
    Vec<D + 1> x;
    x[0] = t;
    const auto p = grid_.pos(c);
    for (int i = 0; i < D; ++i) x[i + 1] = p[i];
    return x;
  }

 private:
  void check_diagonal() {
    for (int trial = 0; trial < 8; ++trial) {
      std::array<int, D> c;
      for (int i = 0; i < D; ++i)
        c[i] = (grid_.n[i] - 1) * ((trial + i) % 4) / 3;
      const auto ev = spec_->at_unchecked(spacetime(c, grid_.t0));
      for (int i = 1; i <= D; ++i)
        for (int j = 1; j <= D; ++j)
          if (i != j && std::abs(ev.g[i][j]) > 1e-12)
            throw std::invalid_argument(
                "WaveSystem: spatial metric must be diagonal on the grid");
    }
  }

  void sample_a(double t_half, Field& a_out) {
    const size_t sz = grid_.size();
    for (size_t k = 0; k < sz; ++k) {
      const auto ev = spec_->at_unchecked(spacetime(grid_.coords(k), t_half));
      a_out[k] = -ev.sqrt_det * ev.ginv[0][0];
    }
  }

  void sample_m(double t) {
    const size_t sz = grid_.size();
    for (size_t k = 0; k < sz; ++k) {
      const auto ev = spec_->at_unchecked(spacetime(grid_.coords(k), t));
      w_[k] = ev.sqrt_det;
      for (int d = 0; d < D; ++d)
        m_[d][k] = ev.sqrt_det * ev.ginv[d + 1][d + 1];
    }
  }

  void build_sponge() {
    const int sw = grid_.sponge;
    const double smax = 10.0 / (sw * grid_.h);
    const size_t sz = grid_.size();
    for (size_t k = 0; k < sz; ++k) {
      const auto c = grid_.coords(k);
      double q = 0.0;
      for (int d = 0; d < D; ++d) {
        const int depth =
            std::max(sw - c[d], sw - (grid_.n[d] - 1 - c[d]));
        if (depth > 0) q = std::max(q, static_cast<double>(depth) / sw);
      }
      sigma_[k] = smax * q * q;
    }
  }

  const MetricSpec<D + 1>* spec_;
  Grid<D> grid_;
  bool absorbing_;
  bool static_ = false;
  double prepared_t_ = 0.0;
  Field w_, a_minus_, a_plus_;
  std::array<Field, D> m_;
  Field sigma_;
};

}  // namespace wavecone
