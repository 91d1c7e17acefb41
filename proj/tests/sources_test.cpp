#include <catch2/catch_amalgamated.hpp>

#include "wavecone/detector/spectral.hpp"
#include "wavecone/solver/run.hpp"

using namespace wavecone;

TEST_CASE("packet construction guards") {
  const auto spec = minkowski<3>();
  const auto g = make_grid<2>(spec, 2.0, 129, 0.0, 1.0);
  Covector<3> xi;
  xi.x = {0.5, 0.0, 0.0};
  xi.xi = {-1.0, 1.0, 0.0};

  SECTION("non-null direction rejected") {
    Covector<3> bad = xi;
    bad.xi = {-1.0, 0.3, 0.0};
    REQUIRE_THROWS_AS(make_packet<2>(spec, bad, 0.5, 10.0, g),
                      std::invalid_argument);
  }
  SECTION("unresolvable frequency rejected") {
    REQUIRE_THROWS_AS(make_packet<2>(spec, xi, 0.5, 400.0, g),
                      std::invalid_argument);
  }
  SECTION("cone width range enforced") {
    REQUIRE_THROWS_AS(make_packet<2>(spec, xi, 0.0, 10.0, g),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(make_packet<2>(spec, xi, 2.0, 10.0, g),
                      std::invalid_argument);
  }
  SECTION("amplitude carries the smoothing weight") {
    const auto p = make_packet<2>(spec, xi, 0.5, 10.0, g);
    REQUIRE(p.amp == Catch::Approx(std::pow(1.0 + 100.0, -1.0)));
    REQUIRE(p.f(xi.x) == Catch::Approx(p.amp));
  }
}

TEST_CASE("packet spectrum concentrated in the directional cone") {
  const auto spec = minkowski<3>();
  const auto g = make_grid<2>(spec, 2.0, 129, 0.0, 1.0);
  Covector<3> xi;
  xi.x = {0.0, 0.0, 0.0};
  xi.xi = {-1.0, 0.6, 0.8};
  const double h = 0.5;
  const auto p = make_packet<2>(spec, xi, h, 10.0, g);

  Vec<3> lo, hi;
  for (int i = 0; i < 3; ++i) {
    lo[i] = xi.x[i] - 5.0 * p.sigma;
    hi[i] = xi.x[i] + 5.0 * p.sigma;
  }
  const double frac =
      cone_energy_fraction<3>(p.f, lo, hi, {64, 64, 64}, p.xi, h);
  INFO("cone fraction = " << frac);
  REQUIRE(frac >= 0.99);

  SECTION("tighter cone still captures most energy at higher frequency") {
    const auto p2 = make_packet<2>(spec, xi, 0.25, 20.0, g);
    Vec<3> lo2, hi2;
    for (int i = 0; i < 3; ++i) {
      lo2[i] = xi.x[i] - 5.0 * p2.sigma;
      hi2[i] = xi.x[i] + 5.0 * p2.sigma;
    }
    const double f2 =
        cone_energy_fraction<3>(p2.f, lo2, hi2, {64, 64, 64}, p2.xi, 0.25);
    INFO("cone fraction = " << f2);
    REQUIRE(f2 >= 0.99);
  }
}

TEST_CASE("timeline source spectrum is predominantly spacelike") {
  const auto spec = minkowski<3>();
  const auto g = make_grid<2>(spec, 2.0, 129, 0.0, 1.5);
  const Vec<3> xtilde{0.6, 0.1, -0.2};
  const auto src = make_timeline_source<2>(spec, xtilde, 0.5, g);

  const double frac = spacelike_energy_fraction<3>(
      src.phi, src.box_lo, src.box_hi, {64, 64, 64}, spec, xtilde);
  INFO("spacelike fraction = " << frac);
  REQUIRE(frac >= 0.95);
}

TEST_CASE("box bump guards") {
  const auto spec = minkowski<3>();
  const auto g = make_grid<2>(spec, 2.0, 65, 0.0, 1.0);
  REQUIRE_THROWS_AS(
      make_box_bump<2>(spec, Vec<3>{0.5, 0.0, 0.0}, 2.0 * g.h, g),
      std::invalid_argument);
}

TEST_CASE("packet energy centroid travels along the forward null flow") {
  const auto spec = minkowski<3>();
  const auto g = make_grid<2>(spec, 2.5, 161, 0.0, 1.6);
  WaveSystem<2> sys(spec, g, /*absorbing=*/false);
  Covector<3> xi;
  xi.x = {0.35, -1.0, -0.5};
  xi.xi = {-1.0, 0.8, 0.6};
  const auto p = make_packet<2>(spec, xi, 1.0, 14.0, g);

  Orchestra<2> orch(sys);
  FieldSpec<2> fs;
  fs.name = "u";
  fs.sources.push_back({1.0, p});
  orch.add_field(std::move(fs));
  orch.keep_final(0);

  auto centroid = [&](const Field& u) {
    double w = 0.0;
    std::array<double, 2> c{0.0, 0.0};
    for (size_t k = 0; k < u.size(); ++k) {
      const double e = u[k] * u[k];
      const auto pos = g.pos(g.coords(k));
      w += e;
      for (int i = 0; i < 2; ++i) c[i] += e * pos[i];
    }
    for (int i = 0; i < 2; ++i) c[i] /= w;
    return c;
  };

  // Two snapshots after the source has switched off; the centroid must
  // advance with unit coordinate speed along the spatial direction of xi
  // (the projected forward null flow), within 2 cells.
  const int n1 = static_cast<int>(std::lround(1.1 / g.dt));
  const int n2 = static_cast<int>(std::lround(1.5 / g.dt));
  auto rep1 = orch.run(n1);
  Orchestra<2> orch2(sys);
  FieldSpec<2> fs2;
  fs2.name = "u";
  fs2.sources.push_back({1.0, p});
  orch2.add_field(std::move(fs2));
  orch2.keep_final(0);
  auto rep2 = orch2.run(n2);

  const auto c1 = centroid(rep1.final_fields.at("u"));
  const auto c2 = centroid(rep2.final_fields.at("u"));
  const double dt = n2 * g.dt - n1 * g.dt;
  const std::array<double, 2> expect{c1[0] + dt * 0.8, c1[1] + dt * 0.6};
  const double err = std::hypot(c2[0] - expect[0], c2[1] - expect[1]);
  INFO("centroid drift error = " << err << " (2 cells = " << 2 * g.h << ")");
  REQUIRE(err <= 2.0 * g.h);
}
