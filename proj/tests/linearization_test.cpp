#include <catch2/catch_amalgamated.hpp>

#include "wavecone/solver/cascade.hpp"

using namespace wavecone;

namespace {

// Three packets aimed so their waves cross near the origin.
std::map<int, SourceTerm<2>> crossing_packets(const MetricSpec<3>& spec,
                                              const Grid<2>& g) {
  auto mk = [&](double x, double y, double dx, double dy) {
    Covector<3> xi;
    xi.x = {1.25, x, y};
    xi.xi = null_from_spatial<3>(spec, xi.x, {dx, dy}).xi;
    return make_packet<2>(spec, xi, 1.0, 10.0, g);
  };
  return {{1, mk(-0.4, 0.0, 1.0, 0.0)},
          {2, mk(0.4, 0.1, -1.0, 0.0)},
          {3, mk(0.0, -0.4, 0.0, 1.0)}};
}

}  // namespace

TEST_CASE("cascade triple field matches the epsilon stencil") {
  const auto spec = minkowski<3>();
  const auto g = make_grid<2>(spec, 2.0, 129, 0.0, 2.2);
  WaveSystem<2> sys(spec, g);
  const auto sources = crossing_packets(spec, g);

  Orchestra<2> orch(sys);
  const IndexSet J = 0b1110;  // {1,2,3}
  const auto cb = cascade_add<2>(orch, sources, J);
  const auto st = stencil_add<2>(orch, sources, J,
                                 {{1, 1.0}, {2, 1.0}, {3, 1.0}});
  // Structurally zero mixed derivative u_{12} via its own stencil.
  const auto st12 =
      stencil_add<2>(orch, sources, 0b0110, {{1, 1.0}, {2, 1.0}});

  orch.add_comparison("cross", st.combo, cb.id(J));
  orch.add_comparison("n123", cb.id(J), cb.id(J));
  orch.add_comparison("n12", st12.combo, st12.combo);
  const auto rep = orch.run();
  REQUIRE_FALSE(rep.blew_up);

  const double rel = rep.rel_l2("cross");
  INFO("stencil vs cascade rel L2 = " << rel);
  REQUIRE(rep.l2("n123") > 0.0);
  REQUIRE(rel <= 0.05);

  const double z12 = rep.l2("n12") / rep.l2("n123");
  INFO("|u_12| / |u_123| = " << z12);
  REQUIRE(z12 <= 1e-3);
}

TEST_CASE("triple field of causally disjoint sources vanishes identically") {
  const auto spec = minkowski<3>();
  const auto g = make_grid<2>(spec, 2.0, 129, 0.0, 2.2);
  WaveSystem<2> sys(spec, g);

  // Bumps switching on late and far apart: their numerical domains of
  // influence never overlap pairwise within the run.
  std::map<int, SourceTerm<2>> sources{
      {0, make_box_bump<2>(spec, Vec<3>{1.9, -1.4, -1.4}, 0.25, g)},
      {4, make_box_bump<2>(spec, Vec<3>{1.9, 1.4, -1.4}, 0.25, g)},
      {5, make_box_bump<2>(spec, Vec<3>{1.9, 0.0, 1.4}, 0.25, g)}};

  Orchestra<2> orch(sys);
  const IndexSet J = 0b110001;  // {0,4,5}
  const auto cb = cascade_add<2>(orch, sources, J);
  orch.add_comparison("n045", cb.id(J), cb.id(J));
  orch.add_comparison("n0", cb.id(0b1), cb.id(0b1));
  const auto rep = orch.run();
  REQUIRE_FALSE(rep.blew_up);
  REQUIRE(rep.l2("n0") > 0.0);  // the singles are alive
  REQUIRE(rep.l2("n045") == 0.0);
}

TEST_CASE("nonlinear solve approaches the linear one at small amplitude") {
  const auto spec = minkowski<3>();
  const auto g = make_grid<2>(spec, 2.0, 97, 0.0, 1.8);
  WaveSystem<2> sys(spec, g);
  Covector<3> xi;
  xi.x = {1.0, 0.0, 0.0};
  xi.xi = {-1.0, 1.0, 0.0};
  const auto p = make_packet<2>(spec, xi, 1.0, 10.0, g);

  auto deviation = [&](double lam) {
    Orchestra<2> orch(sys);
    FieldSpec<2> lin;
    lin.name = "lin";
    lin.sources.push_back({lam, p});
    FieldSpec<2> non;
    non.name = "non";
    non.cubic = true;
    non.sources.push_back({lam, p});
    const int il = orch.add_field(std::move(lin));
    const int in = orch.add_field(std::move(non));
    orch.add_comparison("dev", in, il);
    const auto rep = orch.run();
    REQUIRE_FALSE(rep.blew_up);
    return rep.rel_l2("dev");
  };

  // The relative cubic correction scales like lambda^2.
  const double d1 = deviation(1.0);
  const double d2 = deviation(0.5);
  INFO("dev(1) = " << d1 << " dev(0.5) = " << d2);
  REQUIRE(d1 < 1e-2);
  const double order = std::log2(d1 / d2);
  REQUIRE(order >= 1.8);
  REQUIRE(order <= 2.2);
}
