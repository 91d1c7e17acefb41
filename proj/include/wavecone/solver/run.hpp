#pragma once

// Co-evolution engine: advances any number of coupled wave fields through a
// single time loop. Nonlinear solves, linear solves with prescribed
// right-hand sides, the linearization cascade, and epsilon-stencil corner
// solves are all field specs for the same loop, which lets cross-checks
// accumulate per step without storing field histories.

#include <map>
#include <string>

#include "wavecone/geometry/observer.hpp"
#include "wavecone/solver/system.hpp"
#include "wavecone/sources/sources.hpp"

namespace wavecone {

struct TraceSeries {
  std::vector<double> s;       // curve parameter samples
  std::vector<double> values;  // mu* u
  double ds = 0.0;
};

template <int D>
struct FieldSpec {
  std::string name;
  bool cubic = false;  // evolve box u + u^3 = f instead of box u = f
  // Driving sources, each scaled; bump-type sources contribute their
  // discrete-box field.
  std::vector<std::pair<double, SourceTerm<D>>> sources;
  // rhs += coef * u_a * u_b * u_c over other fields (cascade terms).
  struct Triple {
    double coef;
    int a, b, c;
  };
  std::vector<Triple> couplings;
};

// Linear combination of evolved fields, evaluated on the fly.
struct DerivedSpec {
  std::string name;
  std::vector<std::pair<double, int>> terms;
};

template <int D>
struct RunReport {
  std::map<std::string, TraceSeries> traces;
  // name pair -> (sum |u-v|^2, sum |v|^2) accumulated over steps
  std::map<std::string, std::pair<double, double>> comparisons;
  std::vector<double> energy;  // optional per-step energy of field 0
  double max_abs = 0.0;
  bool blew_up = false;
  std::map<std::string, Field> final_fields;

  double rel_l2(const std::string& key) const {
    const auto& [num, den] = comparisons.at(key);
    return std::sqrt(num / std::max(den, 1e-300));
  }

  // Accumulated L2 of the rhs entry (use with a self-comparison).
  double l2(const std::string& key) const {
    return std::sqrt(comparisons.at(key).second);
  }
};

template <int D>
class Orchestra {
 public:
  explicit Orchestra(WaveSystem<D>& sys) : sys_(&sys) {}

  int add_field(FieldSpec<D> fs) {
    fields_.push_back(std::move(fs));
    return static_cast<int>(fields_.size()) - 1;
  }

  int add_derived(DerivedSpec ds) {
    derived_.push_back(std::move(ds));
    return -static_cast<int>(derived_.size());  // negative ids
  }

  // Trace every listed entry along the curve; s(t) must be the inverse of
  // the curve's time component.
  void set_trace(const ObserverCurve<D + 1>& curve,
                 std::function<double(double)> s_of_t,
                 std::vector<int> entries) {
    curve_ = curve;
    s_of_t_ = std::move(s_of_t);
    traced_ = std::move(entries);
  }

  void add_comparison(const std::string& key, int lhs, int rhs) {
    compare_.push_back({key, lhs, rhs});
  }

  void keep_final(int entry) { keep_.push_back(entry); }
  void track_energy(bool on) { track_energy_ = on; }
  void set_blowup_guard(double limit) { blowup_ = limit; }

  RunReport<D> run(int nt = -1) {
    const auto& g = sys_->grid();
    if (nt < 0) nt = g.nt;
    const size_t sz = g.size();
    const int nf = static_cast<int>(fields_.size());
    std::vector<Field> prev(nf, Field(sz, 0.0)), curr(nf, Field(sz, 0.0)),
        next(nf, Field(sz, 0.0));
    Field S(sz, 0.0);
    Field scratch(sz, 0.0);
    RunReport<D> rep;

    for (int n = 0; n < nt; ++n) {
      const double t = g.time_at(n);
      // Record traces/comparisons at level n before stepping.
      observe(rep, curr, t);
      if (rep.blew_up) break;
      sys_->prepare_step(t);
      for (int f = 0; f < nf; ++f) {
        assemble_source(f, curr, t, S);
        sys_->advance(prev[f], curr[f], S, next[f], t);
      }
      if (track_energy_ && nf > 0)
        rep.energy.push_back(sys_->energy(curr[0], next[0]));
      for (int f = 0; f < nf; ++f) {
        std::swap(prev[f], curr[f]);
        std::swap(curr[f], next[f]);
      }
    }
    for (int e : keep_)
      rep.final_fields[entry_name(e)] = materialize(e, curr, scratch);
    finalize_traces(rep);
    return rep;
  }

  const std::string& field_name(int f) const {
    return f >= 0 ? fields_[f].name : derived_[-f - 1].name;
  }

 private:
  std::string entry_name(int e) const {
    return e >= 0 ? fields_[e].name : derived_[-e - 1].name;
  }

  Field materialize(int e, const std::vector<Field>& curr, Field& scratch) {
    if (e >= 0) return curr[e];
    const auto& d = derived_[-e - 1];
    scratch.assign(curr[0].size(), 0.0);
    for (const auto& [c, f] : d.terms)
      for (size_t k = 0; k < scratch.size(); ++k) scratch[k] += c * curr[f][k];
    return scratch;
  }

  double entry_value(int e, const std::vector<Field>& curr, size_t k) const {
    if (e >= 0) return curr[e][k];
    const auto& d = derived_[-e - 1];
    double v = 0.0;
    for (const auto& [c, f] : d.terms) v += c * curr[f][k];
    return v;
  }

  void assemble_source(int f, const std::vector<Field>& curr, double t,
                       Field& S) {
    const auto& g = sys_->grid();
    const auto& w = sys_->weight();
    const size_t sz = g.size();
    std::fill(S.begin(), S.end(), 0.0);
    const auto& fs = fields_[f];
    // Point sources over their support boxes only.
    for (const auto& [scale, src] : fs.sources) {
      if (t + g.dt < src.box_lo[0] || t - g.dt > src.box_hi[0]) continue;
      std::array<int, D> lo, hi;
      for (int i = 0; i < D; ++i) {
        lo[i] = std::max(1, static_cast<int>(
                                std::floor((src.box_lo[i + 1] - g.lo[i]) / g.h)));
        hi[i] = std::min(g.n[i] - 2,
                         static_cast<int>(std::ceil(
                             (src.box_hi[i + 1] - g.lo[i]) / g.h)));
      }
      iterate_box(lo, hi, [&](const std::array<int, D>& c) {
        const size_t k = g.idx(c);
        if (src.discrete_box) {
          S[k] += scale * sys_->weighted_box_of(src.phi, c, k, t);
        } else {
          S[k] += scale * w[k] * src.f(sys_->spacetime(c, t));
        }
      });
    }
    // The stepper consumes S = w * box u = w * (rhs - u^3); coupling terms
    // enter the rhs as +coef * u_a u_b u_c.
    if (fs.cubic) {
      const auto& u = curr[f];
      for (size_t k = 0; k < sz; ++k) S[k] -= w[k] * u[k] * u[k] * u[k];
    }
    for (const auto& tr : fs.couplings) {
      const auto &ua = curr[tr.a], &ub = curr[tr.b], &uc = curr[tr.c];
      for (size_t k = 0; k < sz; ++k)
        S[k] += tr.coef * w[k] * ua[k] * ub[k] * uc[k];
    }
  }

  template <typename F>
  void iterate_box(const std::array<int, D>& lo, const std::array<int, D>& hi,
                   const F& fn) {
    std::array<int, D> c = lo;
    while (true) {
      fn(c);
      int d = D - 1;
      while (d >= 0) {
        if (++c[d] <= hi[d]) break;
        c[d] = lo[d];
        --d;
      }
      if (d < 0) break;
    }
  }

  void observe(RunReport<D>& rep, const std::vector<Field>& curr, double t) {
    const auto& g = sys_->grid();
    // Blow-up guard on evolved fields (cheap subsample).
    for (const auto& u : curr)
      for (size_t k = 0; k < u.size(); k += 97) {
        const double a = std::abs(u[k]);
        if (a > rep.max_abs) rep.max_abs = a;
      }
    if (rep.max_abs > blowup_ || !std::isfinite(rep.max_abs)) {
      rep.blew_up = true;
      return;
    }
    if (s_of_t_) {
      const double s = s_of_t_(t);
      if (s >= -1.0 && s <= 1.0) {
        const auto p = curve_.pos(s);
        std::array<double, D> x;
        for (int i = 0; i < D; ++i) x[i] = p[i + 1];
        for (int e : traced_) {
          const double v = interpolate(e, curr, x);
          auto& ts = trace_buf_[entry_name(e)];
          ts.s.push_back(s);
          ts.values.push_back(v);
        }
      }
    }
    for (auto& cmp : compare_) {
      double num = 0.0, den = 0.0;
      const size_t sz = curr[0].size();
      for (size_t k = 0; k < sz; ++k) {
        const double a = entry_value(cmp.lhs, curr, k);
        const double b = entry_value(cmp.rhs, curr, k);
        num += (a - b) * (a - b);
        den += b * b;
      }
      auto& acc = rep.comparisons[cmp.key];
      acc.first += num;
      acc.second += den;
    }
  }

  // Catmull-Rom interpolation of an entry at chart position x.
  double interpolate(int e, const std::vector<Field>& curr,
                     const std::array<double, D>& x) const {
    const auto& g = sys_->grid();
    std::array<int, D> base;
    std::array<std::array<double, 4>, D> wgt;
    for (int i = 0; i < D; ++i) {
      const double u = (x[i] - g.lo[i]) / g.h;
      int cell = static_cast<int>(std::floor(u));
      cell = std::clamp(cell, 1, g.n[i] - 3);
      const double f = u - cell;
      base[i] = cell - 1;
      wgt[i][0] = 0.5 * (-f + 2 * f * f - f * f * f);
      wgt[i][1] = 0.5 * (2 - 5 * f * f + 3 * f * f * f);
      wgt[i][2] = 0.5 * (f + 4 * f * f - 3 * f * f * f);
      wgt[i][3] = 0.5 * (-f * f + f * f * f);
    }
    double v = 0.0;
    std::array<int, D> off{};
    while (true) {
      double wprod = 1.0;
      std::array<int, D> c;
      for (int i = 0; i < D; ++i) {
        wprod *= wgt[i][off[i]];
        c[i] = base[i] + off[i];
      }
      v += wprod * entry_value(e, curr, g.idx(c));
      int d = D - 1;
      while (d >= 0) {
        if (++off[d] < 4) break;
        off[d] = 0;
        --d;
      }
      if (d < 0) break;
    }
    return v;
  }

  void finalize_traces(RunReport<D>& rep) {
    for (auto& [name, ts] : trace_buf_) {
      if (ts.s.size() > 1) ts.ds = ts.s[1] - ts.s[0];
      rep.traces[name] = std::move(ts);
    }
    trace_buf_.clear();
  }

  struct Compare {
    std::string key;
    int lhs, rhs;
  };

  WaveSystem<D>* sys_;
  std::vector<FieldSpec<D>> fields_;
  std::vector<DerivedSpec> derived_;
  std::vector<Compare> compare_;
  std::vector<int> traced_, keep_;
  ObserverCurve<D + 1> curve_;
  std::function<double(double)> s_of_t_;
  bool track_energy_ = false;
  double blowup_ = 1e6;
  std::map<std::string, TraceSeries> trace_buf_;
};

}  // namespace wavecone
