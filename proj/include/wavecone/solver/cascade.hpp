#pragma once

// Index-set algebra of the multi-fold linearization. For a source
// f = sum_j eps_j f_j the mixed derivative u_J = d^J u|_{eps=0} satisfies
//   box_g u_J = - sum u_A u_B u_C
// over ordered triples (A,B,C) of disjoint nonempty sets with union J (the
// expansion of d^J(u^3); parts are distinct sets, so every unordered
// partition carries coefficient 6). Even-order fields vanish identically
// and are never evolved.

#include <set>

#include "wavecone/solver/run.hpp"

namespace wavecone {

using IndexSet = uint16_t;  // bitmask over source indices 0..6

inline int popcount(IndexSet m) { return __builtin_popcount(m); }

inline std::string index_set_name(IndexSet m) {
  std::string s = "u_";
  for (int j = 0; j < 7; ++j)
    if (m & (1u << j)) s += static_cast<char>('0' + j);
  return s;
}

// Unordered partitions of `m` into three nonempty disjoint parts, each of
// odd cardinality (even parts are structurally zero).
inline std::vector<std::array<IndexSet, 3>> odd_partitions(IndexSet m) {
  std::vector<std::array<IndexSet, 3>> out;
  // Enumerate submasks a of m, then submasks b of m\a; order a<b<c.
  for (IndexSet a = (m - 1) & m; a > 0; a = (a - 1) & m) {
    if (popcount(a) % 2 == 0) continue;
    const IndexSet rest = m ^ a;
    for (IndexSet b = (rest - 1) & rest; b > 0; b = (b - 1) & rest) {
      if (popcount(b) % 2 == 0) continue;
      const IndexSet c = rest ^ b;
      if (c == 0 || popcount(c) % 2 == 0) continue;
      if (!(a < b && b < c)) continue;
      out.push_back({a, b, c});
    }
  }
  return out;
}

template <int D>
struct CascadeBuild {
  std::map<IndexSet, int> ids;  // evolved field id per index set
  int id(IndexSet m) const { return ids.at(m); }
};

// Adds the full lower-order closure of J to the orchestra. `pruned` sets
// are known-zero (e.g. disjoint-support triples) and are dropped both as
// fields and inside coupling products.
template <int D>
inline CascadeBuild<D> cascade_add(Orchestra<D>& orch,
                                   const std::map<int, SourceTerm<D>>& sources,
                                   IndexSet J,
                                   const std::set<IndexSet>& pruned = {}) {
  if (popcount(J) % 2 == 0)
    throw std::invalid_argument("cascade_add: even-order field is zero");
  CascadeBuild<D> out;
  // All odd nonempty submasks of J, ascending cardinality then value.
  std::vector<IndexSet> subs;
  for (IndexSet s = J; s > 0; s = (s - 1) & J)
    if (popcount(s) % 2 == 1 && !pruned.count(s)) subs.push_back(s);
  std::sort(subs.begin(), subs.end(), [](IndexSet a, IndexSet b) {
    return popcount(a) != popcount(b) ? popcount(a) < popcount(b) : a < b;
  });
  for (IndexSet m : subs) {
    FieldSpec<D> fs;
    fs.name = index_set_name(m);
    if (popcount(m) == 1) {
      const int j = __builtin_ctz(m);
      auto it = sources.find(j);
      if (it == sources.end())
        throw std::invalid_argument("cascade_add: missing source " +
                                    std::to_string(j));
      fs.sources.push_back({1.0, it->second});
    } else {
      for (const auto& [a, b, c] : odd_partitions(m)) {
        if (pruned.count(a) || pruned.count(b) || pruned.count(c)) continue;
        fs.couplings.push_back({-6.0, out.ids.at(a), out.ids.at(b),
                                out.ids.at(c)});
      }
    }
    out.ids[m] = orch.add_field(std::move(fs));
  }
  return out;
}

// Extra field evolving only the selected partitions of J (the u_sing /
// v_sing sub-sums); the complementary regular part is the derived
// difference.
template <int D>
inline int cascade_add_subsum(Orchestra<D>& orch, const CascadeBuild<D>& cb,
                              IndexSet J, const std::string& name,
                              const std::vector<std::array<IndexSet, 3>>& parts) {
  FieldSpec<D> fs;
  fs.name = name;
  for (const auto& [a, b, c] : parts)
    fs.couplings.push_back({-6.0, cb.id(a), cb.id(b), cb.id(c)});
  return orch.add_field(std::move(fs));
}

// Central-difference mixed-derivative stencil: 2^{|J|} nonlinear corner
// solves combined as sum_s (prod_j s_j) u_s / prod_j (2 eps_j).
template <int D>
struct StencilBuild {
  std::vector<int> corners;
  int combo = 0;  // derived entry id
};

template <int D>
inline StencilBuild<D> stencil_add(Orchestra<D>& orch,
                                   const std::map<int, SourceTerm<D>>& sources,
                                   IndexSet J,
                                   const std::map<int, double>& eps) {
  std::vector<int> idx;
  for (int j = 0; j < 7; ++j)
    if (J & (1u << j)) idx.push_back(j);
  const int m = static_cast<int>(idx.size());
  StencilBuild<D> out;
  DerivedSpec combo;
  combo.name = index_set_name(J) + "_stencil";
  double denom = 1.0;
  for (int j : idx) denom *= 2.0 * eps.at(j);
  for (int pat = 0; pat < (1 << m); ++pat) {
    FieldSpec<D> fs;
    fs.cubic = true;
    fs.name = combo.name + "_c" + std::to_string(pat);
    double parity = 1.0;
    for (int b = 0; b < m; ++b) {
      const double sgn = (pat & (1 << b)) ? 1.0 : -1.0;
      parity *= sgn;
      fs.sources.push_back({sgn * eps.at(idx[b]), sources.at(idx[b])});
    }
    const int id = orch.add_field(std::move(fs));
    out.corners.push_back(id);
    combo.terms.push_back({parity / denom, id});
  }
  out.combo = orch.add_derived(std::move(combo));
  return out;
}

}  // namespace wavecone
