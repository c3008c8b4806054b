// Phase space over a Lagrangian: the two current routes, charges over
// slices, the presymplectic pairing, charge brackets with their corner
// cocycles, anomaly accounting over windows, and the closed transformation
// laws under field-dependent frames. Oracles: hand-reduced constant
// configurations for charges and the pairing, linearity and antisymmetry at
// roundoff, and independent routes frozen against each other.

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "covphase/cps.hpp"

using namespace covphase;
namespace mod = covphase::models;

namespace {

const double kPi = std::acos(-1.0);

Lagrangian bf_lag() { return mod::bf_with_clocks(32, 32); }

// Same dynamics with a boundary density attached, so the corner choice has
// something to act on.
Lagrangian bf_ell_lag() {
  Lagrangian base = mod::bf_with_clocks(32, 32);
  return Lagrangian(base.schema(), base.source(), {"B*A_x", "B*A_y - 0.1*A_x"});
}

Lagrangian ps_lag(double lambda = 0.25) { return mod::parametrized_scalar(64, lambda); }

// Tangent direction that genuinely depends on the configuration through a
// smooth scalar functional, safe for two derivative levels.
FieldVectorField field_dep_tangent(const SchemaPtr& schema, Rng rng) {
  Fields dir = random_fields(schema, rng.split("dir"), 0.4, 2);
  return FieldVectorField::make([dir](const auto& phi) {
    using std::sin;
    auto s = quadrature(phi.comp[0].comp[0]);
    return (0.7 + 0.3 * sin(s)) * lift_to<decltype(s)>(dir);
  });
}

FieldDepVectorM field_dep_gen(const SchemaPtr& schema, Rng rng) {
  VectorFieldM shape = random_vf(schema->grid, rng.split("shape"), 0.4, 2);
  double c = rng.uniform(0.5, 1.5);
  return FieldDepVectorM::make([shape, c](const auto& phi) {
    using std::sin;
    auto q = quadrature(phi.comp[0].comp[0] * phi.comp[0].comp[0]);
    return (c + sin(q)) * lift_to<decltype(q)>(shape);
  });
}

// Constant-flux solution: B and A constant, clocks exactly aligned with the
// coordinates. Every equation coefficient vanishes identically.
Fields constant_flux(const SchemaPtr& schema, double b0, double c1, double c2) {
  Fields phi(schema);
  for (auto& v : phi["B"].comp[0].v) v = b0;
  for (auto& v : phi["A"].comp[0].v) v = c1;
  for (auto& v : phi["A"].comp[1].v) v = c2;
  return phi;
}

FieldVectorField constant_tangent(const Fields& dir) {
  return FieldVectorField::make([dir](const auto& phi) {
    using T = typename std::decay_t<decltype(phi)>::Scalar;
    return lift_to<T>(dir);
  });
}

}  // namespace

// ===========================================================================
// currents
// ===========================================================================

TEST_CASE("the two current routes agree pointwise") {
  auto bf = bf_lag();
  auto ps = ps_lag();
  Rng rng(301);
  for (int t = 0; t < 5; ++t) {
    Rng sub = rng.split("trial" + std::to_string(t));
    Fields phi = random_fields(bf.schema(), sub.split("phi"), 0.4, 2);
    auto X = random_vf(bf.schema()->grid, sub.split("x"), 0.5, 2);
    REQUIRE(current_split_residual(bf, phi, X) <= 1e-8);

    Fields q = random_fields(ps.schema(), sub.split("q"), 0.4, 2);
    q["eps"].comp[0] = q["eps"].comp[0] + sample(ps.schema()->grid, [](double) { return 1.5; });
    auto Y = random_vf(ps.schema()->grid, sub.split("y"), 0.5, 2);
    REQUIRE(current_split_residual(ps, q, Y) <= 1e-8);
  }
}

TEST_CASE("the corner choice cancels between the routes") {
  auto bf = bf_ell_lag();
  Rng rng(317);
  Fields phi = random_fields(bf.schema(), rng.split("phi"), 0.4, 2);
  auto X = random_vf(bf.schema()->grid, rng.split("x"), 0.5, 2);
  auto r1 = noether_current(bf, phi, X, GammaChoice::boundary);
  auto r2 = noether_current_exact_form(bf, phi, X, GammaChoice::boundary);
  double gap = 0;
  for (size_t c = 0; c < r1.comp.size(); ++c)
    gap = std::max(gap, (r1.comp[c] - r2.comp[c]).max_abs());
  REQUIRE(gap <= 1e-8);
  // and the choice does move the current itself
  auto plain = noether_current(bf, phi, X, GammaChoice::zero);
  double shift = 0;
  for (size_t c = 0; c < r1.comp.size(); ++c)
    shift = std::max(shift, (r1.comp[c] - plain.comp[c]).max_abs());
  REQUIRE(shift > 1e-4);
  REQUIRE_THROWS_AS(noether_current(bf_lag(), phi, X, GammaChoice::boundary), config_error);
}

TEST_CASE("zero generator carries zero current") {
  auto bf = bf_lag();
  Rng rng(323);
  Fields phi = random_fields(bf.schema(), rng.split("phi"), 0.4, 2);
  VectorFieldM zero(bf.schema()->grid);
  auto j = noether_current(bf, phi, zero);
  for (auto& c : j.comp) REQUIRE(c.max_abs() == 0.0);
}

TEST_CASE("current conservation holds off shell and closes on shell") {
  auto bf = bf_lag();
  auto ps = ps_lag();
  Rng rng(331);
  for (int t = 0; t < 5; ++t) {
    Rng sub = rng.split("trial" + std::to_string(t));
    Fields phi = random_fields(bf.schema(), sub.split("phi"), 0.4, 2);
    auto X = random_vf(bf.schema()->grid, sub.split("x"), 0.5, 2);
    REQUIRE(current_conservation_residual(bf, phi, X) <= 1e-8);

    Fields q = random_fields(ps.schema(), sub.split("q"), 0.4, 2);
    q["eps"].comp[0] = q["eps"].comp[0] + sample(ps.schema()->grid, [](double) { return 1.5; });
    auto Y = random_vf(ps.schema()->grid, sub.split("y"), 0.5, 2);
    REQUIRE(current_conservation_residual(ps, q, Y) <= 1e-8);
  }
  // on solutions the current is closed outright, corner choice or not
  auto bfe = bf_ell_lag();
  for (int t = 0; t < 3; ++t) {
    Rng sub = rng.split("shell" + std::to_string(t));
    Fields sol = mod::bf_onshell(bf.schema(), sub.split("sol"));
    auto X = random_vf(bf.schema()->grid, sub.split("x"), 0.5, 2);
    auto dj = exterior_d(noether_current(bf, sol, X));
    REQUIRE(dj.comp[0].max_abs() <= 1e-8);
    auto dje = exterior_d(noether_current(bfe, sol, X, GammaChoice::boundary));
    REQUIRE(dje.comp[0].max_abs() <= 1e-8);
  }
  auto ps0 = ps_lag(0.0);
  Fields sol = mod::pscalar_onshell(ps0.schema(), rng.split("ps"));
  auto Y = random_vf(ps0.schema()->grid, rng.split("py"), 0.5, 2);
  REQUIRE(exterior_d(noether_current(ps0, sol, Y)).comp[0].max_abs() <= 1e-8);
}

// ===========================================================================
// charges
// ===========================================================================

TEST_CASE("charge of a constant flux through a segment") {
  auto bf = bf_lag();
  double b0 = 1.3, c1 = 0.7, c2 = -0.4;
  Fields phi = constant_flux(bf.schema(), b0, c1, c2);
  REQUIRE(bf.eq_norm(phi) <= 1e-13);

  // X = g(x) d_x with g = 0.2 cos x; only the corner contributes, and the
  // corner value is B (i_X A) evaluated at the two ends.
  const PeriodicGrid& g = bf.schema()->grid;
  VectorFieldM X(g);
  X.comp[0] = sample(g, [](double x, double) { return 0.2 * std::cos(x); });
  Slice seg = Slice::at_segment(1.1, 0.0, kPi);
  ChargeReport r = charge_report(bf, phi, X, seg);
  double expect = b0 * c1 * (0.2 * std::cos(kPi) - 0.2);
  REQUIRE(std::abs(r.bulk) <= 1e-13);
  REQUIRE(std::abs(r.corner - expect) <= 1e-12);
  REQUIRE(std::abs(r.total - (r.bulk + r.corner)) == 0.0);
  REQUIRE(std::abs(noether_charge(bf, phi, X, seg) - expect) <= 1e-12);

  // a plain translation sees equal corner values and no charge
  VectorFieldM tr(g);
  tr.comp[0] = sample(g, [](double, double) { return 1.0; });
  REQUIRE(std::abs(noether_charge(bf, phi, tr, seg)) <= 1e-13);

  // closed slices have no corners at all
  Slice circ = Slice::at_circle(1.1);
  ChargeReport rc = charge_report(bf, phi, X, circ);
  REQUIRE(rc.corner == 0.0);
  REQUIRE(std::abs(rc.total) <= 1e-13);
}

TEST_CASE("charges are linear in the generator") {
  auto bf = bf_ell_lag();
  Rng rng(347);
  Fields phi = random_fields(bf.schema(), rng.split("phi"), 0.4, 2);
  auto X = random_vf(bf.schema()->grid, rng.split("x"), 0.5, 2);
  auto Y = random_vf(bf.schema()->grid, rng.split("y"), 0.5, 2);
  Slice seg = Slice::at_segment(2.0, 0.5, 4.0);
  for (GammaChoice gc : {GammaChoice::zero, GammaChoice::boundary}) {
    double a = -1.7, b = 0.6;
    double lhs = noether_charge(bf, phi, a * X + b * Y, seg, gc);
    double rhs = a * noether_charge(bf, phi, X, seg, gc) + b * noether_charge(bf, phi, Y, seg, gc);
    REQUIRE(std::abs(lhs - rhs) <= 1e-12);
  }

  auto ps = ps_lag();
  Fields q = random_fields(ps.schema(), rng.split("q"), 0.4, 2);
  q["eps"].comp[0] = q["eps"].comp[0] + sample(ps.schema()->grid, [](double) { return 1.5; });
  auto U = random_vf(ps.schema()->grid, rng.split("u"), 0.5, 2);
  auto V = random_vf(ps.schema()->grid, rng.split("v"), 0.5, 2);
  Slice pt = Slice::at_point(0.8);
  double lhs = noether_charge(ps, q, 2.0 * U - 0.3 * V, pt);
  double rhs = 2.0 * noether_charge(ps, q, U, pt) - 0.3 * noether_charge(ps, q, V, pt);
  REQUIRE(std::abs(lhs - rhs) <= 1e-12);
  REQUIRE(charge_report(ps, q, U, pt).corner == 0.0);
}

// ===========================================================================
// presymplectic pairing
// ===========================================================================

TEST_CASE("slice potential evaluates the kinetic pairing") {
  auto bf = bf_lag();
  Rng rng(353);
  Fields phi = random_fields(bf.schema(), rng.split("phi"), 0.4, 2);
  Fields dir = random_fields(bf.schema(), rng.split("dir"), 0.4, 2);
  Slice circ = Slice::at_circle(0.7);
  auto pot = presymplectic_potential(bf, circ);
  auto probe = constant_tangent(dir);
  REQUIRE(std::abs(pot(phi, {&probe}) - integrate_slice(bf.theta(phi, dir), circ)) <= 1e-14);
}

TEST_CASE("presymplectic form is antisymmetric and matches the constant pairing") {
  auto bf = bf_lag();
  Rng rng(359);
  Fields phi = random_fields(bf.schema(), rng.split("phi"), 0.4, 2);
  Slice circ = Slice::at_circle(0.7);
  auto big = presymplectic_form(bf, circ);

  auto A = field_dep_tangent(bf.schema(), rng.split("a"));
  auto B = field_dep_tangent(bf.schema(), rng.split("b"));
  double ab = big(phi, {&A, &B});
  double ba = big(phi, {&B, &A});
  REQUIRE(std::abs(ab + ba) <= 1e-12);
  REQUIRE(std::abs(big(phi, {&A, &A})) <= 1e-13);

  // constant tangents with silent clocks reduce the pairing to the B/A_x
  // exchange along the slice
  Fields d1(bf.schema()), d2(bf.schema());
  for (auto& v : d1["B"].comp[0].v) v = 0.9;
  for (auto& v : d1["A"].comp[0].v) v = -0.2;
  for (auto& v : d1["A"].comp[1].v) v = 0.4;
  for (auto& v : d2["B"].comp[0].v) v = -0.5;
  for (auto& v : d2["A"].comp[0].v) v = 0.8;
  for (auto& v : d2["A"].comp[1].v) v = 0.1;
  auto t1 = constant_tangent(d1);
  auto t2 = constant_tangent(d2);
  double expect = 2 * kPi * (0.9 * 0.8 - (-0.5) * (-0.2));
  REQUIRE(std::abs(big(phi, {&t1, &t2}) - expect) <= 1e-8);
}

TEST_CASE("boundary shift moves the potential but not the form") {
  auto bf = bf_ell_lag();
  Rng rng(367);
  Fields phi = random_fields(bf.schema(), rng.split("phi"), 0.4, 2);
  Slice seg = Slice::at_segment(2.0, 0.5, 4.0);
  auto base = presymplectic_potential(bf, seg);
  auto shifted = shifted_presymplectic_potential(bf, seg);
  auto probe = field_dep_tangent(bf.schema(), rng.split("p"));
  REQUIRE(std::abs(shifted(phi, {&probe}) - base(phi, {&probe})) > 1e-4);

  auto big = field_d(base);
  auto big_shifted = field_d(shifted);
  for (int t = 0; t < 3; ++t) {
    Rng sub = rng.split("pair" + std::to_string(t));
    auto A = field_dep_tangent(bf.schema(), sub.split("a"));
    auto B = field_dep_tangent(bf.schema(), sub.split("b"));
    REQUIRE(std::abs(big_shifted(phi, {&A, &B}) - big(phi, {&A, &B})) <= 1e-8);
  }
  REQUIRE_THROWS_AS(shifted_presymplectic_potential(bf_lag(), seg), config_error);
}

// ===========================================================================
// moment map
// ===========================================================================

TEST_CASE("charge differential balances the vertical pairing") {
  auto bf = bf_lag();
  auto bfe = bf_ell_lag();
  Rng rng(373);
  for (int t = 0; t < 4; ++t) {
    Rng sub = rng.split("trial" + std::to_string(t));
    Fields phi = random_fields(bf.schema(), sub.split("phi"), 0.4, 2);
    auto X = random_vf(bf.schema()->grid, sub.split("x"), 0.5, 2);
    auto probe = field_dep_tangent(bf.schema(), sub.split("p"));
    Slice seg = Slice::at_segment(1.3, 0.4, 3.9);
    REQUIRE(moment_map_residual(bf, phi, X, probe, seg) <= 1e-6);
    REQUIRE(moment_map_residual(bfe, phi, X, probe, seg, GammaChoice::boundary) <= 1e-6);
    Slice circ = Slice::at_circle(1.3);
    REQUIRE(moment_map_residual(bf, phi, X, probe, circ) <= 1e-6);
  }
  auto ps = ps_lag();
  for (int t = 0; t < 3; ++t) {
    Rng sub = rng.split("line" + std::to_string(t));
    Fields q = random_fields(ps.schema(), sub.split("q"), 0.4, 2);
    q["eps"].comp[0] = q["eps"].comp[0] + sample(ps.schema()->grid, [](double) { return 1.5; });
    auto Y = random_vf(ps.schema()->grid, sub.split("y"), 0.5, 2);
    auto probe = field_dep_tangent(ps.schema(), sub.split("p"));
    REQUIRE(moment_map_residual(ps, q, Y, probe, Slice::at_point(0.8)) <= 1e-6);
  }
}

TEST_CASE("on solutions a boundary-fixing generator is Hamiltonian") {
  auto bf = bf_lag();
  Rng rng(379);
  Slice seg = Slice::at_segment(1.3, 0.0, kPi);
  const PeriodicGrid& g = bf.schema()->grid;
  auto window = sample(g, [](double x, double) {
    double s = std::sin(x);
    return s * s;  // vanishes at both segment ends
  });
  for (int t = 0; t < 3; ++t) {
    Rng sub = rng.split("trial" + std::to_string(t));
    Fields sol = mod::bf_onshell(bf.schema(), sub.split("sol"));
    VectorFieldM raw = random_vf(g, sub.split("x"), 0.5, 2);
    VectorFieldM X(g, {window * raw.comp[0], window * raw.comp[1]});
    auto probe = field_dep_tangent(bf.schema(), sub.split("p"));
    REQUIRE(std::abs(hamiltonian_defect(bf, sol, X, probe, seg)) <= 1e-6);
  }
  // the zero generator is silent through every term
  Fields sol = mod::bf_onshell(bf.schema(), rng.split("z"));
  auto probe = field_dep_tangent(bf.schema(), rng.split("zp"));
  REQUIRE(hamiltonian_defect(bf, sol, VectorFieldM(g), probe, seg) == 0.0);
}

// ===========================================================================
// charge bracket and corner cocycle
// ===========================================================================

TEST_CASE("bracket balance off shell") {
  auto bf = bf_lag();
  Rng rng(383);
  Slice seg = Slice::at_segment(2.2, 0.3, 4.1);
  for (int t = 0; t < 10; ++t) {
    Rng sub = rng.split("pair" + std::to_string(t));
    Fields phi = random_fields(bf.schema(), sub.split("phi"), 0.4, 2);
    auto X = random_vf(bf.schema()->grid, sub.split("x"), 0.5, 2);
    auto Y = random_vf(bf.schema()->grid, sub.split("y"), 0.5, 2);
    REQUIRE(bracket_relation_residual(bf, phi, X, Y, seg) <= 1e-6);
  }
  // corner choice folded in
  auto bfe = bf_ell_lag();
  Fields phi = random_fields(bfe.schema(), rng.split("phi"), 0.4, 2);
  auto X = random_vf(bfe.schema()->grid, rng.split("x"), 0.5, 2);
  auto Y = random_vf(bfe.schema()->grid, rng.split("y"), 0.5, 2);
  REQUIRE(bracket_relation_residual(bfe, phi, X, Y, seg, GammaChoice::boundary) <= 1e-6);
  REQUIRE(std::abs(charge_bracket(bf, phi, X, X, seg)) <= 1e-12);

  auto ps = ps_lag();
  Slice pt = Slice::at_point(0.8);
  for (int t = 0; t < 5; ++t) {
    Rng sub = rng.split("line" + std::to_string(t));
    Fields q = random_fields(ps.schema(), sub.split("q"), 0.4, 2);
    q["eps"].comp[0] = q["eps"].comp[0] + sample(ps.schema()->grid, [](double) { return 1.5; });
    auto U = random_vf(ps.schema()->grid, sub.split("u"), 0.5, 2);
    auto V = random_vf(ps.schema()->grid, sub.split("v"), 0.5, 2);
    REQUIRE(bracket_relation_residual(ps, q, U, V, pt) <= 1e-6);
    REQUIRE(corner_cocycle(ps, q, U, V, pt) == 0.0);
  }
}

TEST_CASE("on solutions the bracket closes on the charge and the cocycle") {
  auto bf = bf_lag();
  Rng rng(389);
  Slice seg = Slice::at_segment(2.2, 0.3, 4.1);
  for (int t = 0; t < 3; ++t) {
    Rng sub = rng.split("trial" + std::to_string(t));
    Fields sol = mod::bf_onshell(bf.schema(), sub.split("sol"));
    auto X = random_vf(bf.schema()->grid, sub.split("x"), 0.5, 2);
    auto Y = random_vf(bf.schema()->grid, sub.split("y"), 0.5, 2);
    double lhs = charge_bracket(bf, sol, X, Y, seg);
    double rhs = noether_charge(bf, sol, lie_bracket_diff(X, Y), seg) +
                 corner_cocycle(bf, sol, X, Y, seg);
    REQUIRE(std::abs(lhs - rhs) <= 1e-6);
  }
  // commuting translations: the bracket is pure cocycle
  const PeriodicGrid& g = bf.schema()->grid;
  VectorFieldM dx_gen(g), dy_gen(g);
  dx_gen.comp[0] = sample(g, [](double, double) { return 1.0; });
  dy_gen.comp[1] = sample(g, [](double, double) { return 1.0; });
  Fields sol = mod::bf_onshell(bf.schema(), rng.split("c"));
  double lhs = charge_bracket(bf, sol, dx_gen, dy_gen, seg);
  REQUIRE(std::abs(noether_charge(bf, sol, lie_bracket_diff(dx_gen, dy_gen), seg)) <= 1e-12);
  REQUIRE(std::abs(lhs - corner_cocycle(bf, sol, dx_gen, dy_gen, seg)) <= 1e-6);
}

TEST_CASE("cyclic cocycle sum vanishes under corner-silent generators") {
  auto bf = bf_lag();
  Rng rng(397);
  Slice seg = Slice::at_segment(1.3, 0.0, kPi);
  const PeriodicGrid& g = bf.schema()->grid;
  auto window = sample(g, [](double x, double) {
    double s = std::sin(x);
    return s * s;
  });
  Fields sol = mod::bf_onshell(bf.schema(), rng.split("sol"));
  std::vector<VectorFieldM> gens;
  for (int i = 0; i < 3; ++i) {
    VectorFieldM raw = random_vf(g, rng.split("g" + std::to_string(i)), 0.5, 2);
    gens.emplace_back(g, std::vector<GridFunction>{window * raw.comp[0], window * raw.comp[1]});
  }
  REQUIRE(std::abs(cocycle_cyclic_sum(bf, sol, gens[0], gens[1], gens[2], seg)) <= 1e-5);

  // degenerate triples cancel by antisymmetry and linearity alone
  auto X = random_vf(g, rng.split("x"), 0.5, 2);
  auto Y = random_vf(g, rng.split("y"), 0.5, 2);
  Fields phi = random_fields(bf.schema(), rng.split("phi"), 0.4, 2);
  REQUIRE(std::abs(cocycle_cyclic_sum(bf, phi, X, Y, X, seg)) <= 1e-6);
}

TEST_CASE("generic cyclic sum matches the boundary flux obstruction") {
  auto bf = bf_lag();
  auto bfe = bf_ell_lag();
  Rng rng(401);
  Slice seg = Slice::at_segment(2.2, 0.3, 4.1);
  for (int t = 0; t < 3; ++t) {
    Rng sub = rng.split("trial" + std::to_string(t));
    Fields sol = mod::bf_onshell(bf.schema(), sub.split("sol"));
    auto X = random_vf(bf.schema()->grid, sub.split("x"), 0.5, 2);
    auto Y = random_vf(bf.schema()->grid, sub.split("y"), 0.5, 2);
    auto Z = random_vf(bf.schema()->grid, sub.split("z"), 0.5, 2);
    double cyc = cocycle_cyclic_sum(bf, sol, X, Y, Z, seg);
    double flux = cocycle_flux_obstruction(bf, sol, X, Y, Z, seg);
    REQUIRE(std::abs(cyc - flux) <= 1e-5);
    if (t == 0) {
      double cyce = cocycle_cyclic_sum(bfe, sol, X, Y, Z, seg, GammaChoice::boundary);
      double fluxe = cocycle_flux_obstruction(bfe, sol, X, Y, Z, seg, GammaChoice::boundary);
      REQUIRE(std::abs(cyce - fluxe) <= 1e-5);
    }
  }
}

TEST_CASE("field-dependent generators close on the extended bracket") {
  auto bf = bf_lag();
  Rng rng(409);
  Slice seg = Slice::at_segment(2.2, 0.3, 4.1);
  for (int t = 0; t < 5; ++t) {
    Rng sub = rng.split("pair" + std::to_string(t));
    Fields phi = random_fields(bf.schema(), sub.split("phi"), 0.4, 2);
    auto X = field_dep_gen(bf.schema(), sub.split("x"));
    auto Y = field_dep_gen(bf.schema(), sub.split("y"));
    REQUIRE(extended_bracket_relation_residual(bf, phi, X, Y, seg) <= 1e-6);
  }
  // constant generators reduce every extended quantity to the pointwise one
  Fields phi = random_fields(bf.schema(), rng.split("phi"), 0.4, 2);
  auto Xc = random_vf(bf.schema()->grid, rng.split("x"), 0.5, 2);
  auto Yc = random_vf(bf.schema()->grid, rng.split("y"), 0.5, 2);
  auto X = FieldDepVectorM::constant(Xc);
  auto Y = FieldDepVectorM::constant(Yc);
  REQUIRE(std::abs(extended_cocycle(bf, phi, X, Y, seg) - corner_cocycle(bf, phi, Xc, Yc, seg)) <=
          1e-12);
  REQUIRE(std::abs(charge_bracket(bf, phi, X, Y, seg) - charge_bracket(bf, phi, Xc, Yc, seg)) <=
          1e-12);
}

// ===========================================================================
// anomaly accounting
// ===========================================================================

TEST_CASE("window anomaly vanishes for the identity and obeys the chain law") {
  auto bf = bf_lag();
  const PeriodicGrid& g = bf.schema()->grid;
  Rng rng(419);
  Fields phi = random_fields(bf.schema(), rng.split("phi"), 0.4, 2);
  Region band = Region::make_band(0.5, 3.5);
  REQUIRE(std::abs(anomaly_cocycle(bf, phi, Diffeo::identity(g), band)) <= 1e-12);

  for (int t = 0; t < 5; ++t) {
    Rng sub = rng.split("trial" + std::to_string(t));
    Fields q = random_fields(bf.schema(), sub.split("q"), 0.4, 2);
    Diffeo psi = flow(random_vf(g, sub.split("v1"), 0.15, 2), 1.0);
    Diffeo eta = flow(random_vf(g, sub.split("v2"), 0.15, 2), 1.0);
    REQUIRE(anomaly_law_residual(bf, q, psi, eta, band) <= 1e-8);
  }

  auto ps = ps_lag();
  const PeriodicGrid& gl = ps.schema()->grid;
  Fields q = random_fields(ps.schema(), rng.split("q"), 0.4, 2);
  q["eps"].comp[0] = q["eps"].comp[0] + sample(gl, [](double) { return 1.5; });
  Diffeo psi = flow(random_vf(gl, rng.split("w1"), 0.15, 2), 1.0);
  Diffeo eta = flow(random_vf(gl, rng.split("w2"), 0.15, 2), 1.0);
  REQUIRE(anomaly_law_residual(ps, q, psi, eta, Region::make_interval(0.5, 4.5)) <= 1e-8);
}

TEST_CASE("comoving windows erase the anomaly exactly when the density is covariant") {
  auto bf = bf_lag();
  const PeriodicGrid& g = bf.schema()->grid;
  Rng rng(421);
  Fields phi = random_fields(bf.schema(), rng.split("phi"), 0.4, 2);
  Diffeo psi = flow(random_vf(g, rng.split("v"), 0.15, 2), 1.0);
  Region band = Region::make_band(0.5, 3.5);
  REQUIRE(std::abs(anomaly_cocycle(bf, phi, psi, band, AnomalyConvention::comoving)) <= 1e-8);
  REQUIRE(std::abs(anomaly_cocycle(bf, phi, psi, band)) > 1e-4);  // fixed window does not

  auto ps = ps_lag();
  const PeriodicGrid& gl = ps.schema()->grid;
  Fields q = random_fields(ps.schema(), rng.split("q"), 0.4, 2);
  q["eps"].comp[0] = q["eps"].comp[0] + sample(gl, [](double) { return 1.5; });
  Diffeo eta = flow(random_vf(gl, rng.split("w"), 0.15, 2), 1.0);
  Region iv = Region::make_interval(0.5, 4.5);
  REQUIRE(std::abs(anomaly_cocycle(ps, q, eta, iv, AnomalyConvention::comoving)) <= 1e-8);

  // the density without the measure factor is not covariant, and the comoving
  // anomaly sees exactly that defect
  auto ctrl = mod::kinetic_control(64);
  Fields c(ctrl.schema());
  c["phi"].comp[0] = sample(gl, [](double x) { return std::sin(x) + 0.3 * std::cos(2 * x); });
  REQUIRE(std::abs(anomaly_cocycle(ctrl, c, eta, iv, AnomalyConvention::comoving)) > 1e-4);
}

// ===========================================================================
// field-dependent frames
// ===========================================================================

TEST_CASE("density transforms by pure pullback") {
  auto bf = bf_lag();
  auto ps = ps_lag();
  Rng rng(431);
  for (int t = 0; t < 10; ++t) {
    Rng sub = rng.split("trial" + std::to_string(t));
    Fields phi = random_fields(bf.schema(), sub.split("phi"), 0.4, 2);
    auto Psi = random_field_diffeo(bf.schema(), sub.split("psi"));
    REQUIRE(vt_density_residual(bf, Psi, phi) <= 1e-6);
  }
  for (int t = 0; t < 5; ++t) {
    Rng sub = rng.split("line" + std::to_string(t));
    Fields q = random_fields(ps.schema(), sub.split("q"), 0.4, 2);
    q["eps"].comp[0] = q["eps"].comp[0] + sample(ps.schema()->grid, [](double) { return 1.5; });
    auto Psi = random_field_diffeo(ps.schema(), sub.split("psi"));
    REQUIRE(vt_density_residual(ps, Psi, q) <= 1e-6);
  }
  // a frame that ignores the fields is plain covariance
  Fields phi = random_fields(bf.schema(), rng.split("phi"), 0.4, 2);
  Diffeo fixed = flow(random_vf(bf.schema()->grid, rng.split("v"), 0.12, 2), 1.0);
  REQUIRE(vt_density_residual(bf, FieldDepDiffeo::constant(fixed), phi) <= 1e-9);
}

TEST_CASE("field equations transform with one frame-derivative term") {
  auto bf = bf_lag();
  auto ps = ps_lag();
  Rng rng(433);
  for (int t = 0; t < 5; ++t) {
    Rng sub = rng.split("trial" + std::to_string(t));
    Fields phi = random_fields(bf.schema(), sub.split("phi"), 0.4, 2);
    Fields xi = random_fields(bf.schema(), sub.split("xi"), 0.4, 2);
    auto Psi = random_field_diffeo(bf.schema(), sub.split("psi"));
    REQUIRE(vt_field_eq_residual(bf, Psi, phi, xi) <= 1e-6);

    Fields q = random_fields(ps.schema(), sub.split("q"), 0.4, 2);
    q["eps"].comp[0] = q["eps"].comp[0] + sample(ps.schema()->grid, [](double) { return 1.5; });
    Fields eta = random_fields(ps.schema(), sub.split("eta"), 0.4, 2);
    auto Psil = random_field_diffeo(ps.schema(), sub.split("psil"));
    REQUIRE(vt_field_eq_residual(ps, Psil, q, eta) <= 1e-6);
  }
  // transforming a solution lands on a solution
  for (int t = 0; t < 3; ++t) {
    Rng sub = rng.split("shell" + std::to_string(t));
    Fields sol = mod::bf_onshell(bf.schema(), sub.split("sol"));
    auto Psi = random_field_diffeo(bf.schema(), sub.split("psi"));
    REQUIRE(bf.eq_norm(vertical_transform(Psi, sol)) <= 1e-7);
  }
}

TEST_CASE("kinetic pairing transforms with corner and constraint terms") {
  auto bf = bf_lag();
  auto ps = ps_lag();
  Rng rng(439);
  for (int t = 0; t < 10; ++t) {
    Rng sub = rng.split("trial" + std::to_string(t));
    Fields phi = random_fields(bf.schema(), sub.split("phi"), 0.4, 2);
    Fields xi = random_fields(bf.schema(), sub.split("xi"), 0.4, 2);
    auto Psi = random_field_diffeo(bf.schema(), sub.split("psi"));
    REQUIRE(vt_theta_residual(bf, Psi, phi, xi) <= 1e-6);
  }
  for (int t = 0; t < 5; ++t) {
    Rng sub = rng.split("line" + std::to_string(t));
    Fields q = random_fields(ps.schema(), sub.split("q"), 0.4, 2);
    q["eps"].comp[0] = q["eps"].comp[0] + sample(ps.schema()->grid, [](double) { return 1.5; });
    Fields eta = random_fields(ps.schema(), sub.split("eta"), 0.4, 2);
    auto Psi = random_field_diffeo(ps.schema(), sub.split("psi"));
    REQUIRE(vt_theta_residual(ps, Psi, q, eta) <= 1e-6);
  }
}

TEST_CASE("slice pairing transforms through the preimage slice") {
  auto bf = bf_lag();
  Rng rng(443);
  for (int t = 0; t < 3; ++t) {
    Rng sub = rng.split("trial" + std::to_string(t));
    Fields phi = random_fields(bf.schema(), sub.split("phi"), 0.4, 2);
    Fields xi = random_fields(bf.schema(), sub.split("xi"), 0.4, 2);
    auto Psi = random_field_diffeo(bf.schema(), sub.split("psi"));
    REQUIRE(vt_theta_slice_residual(bf, Psi, phi, xi, Slice::at_circle(1.9)) <= 1e-6);
    REQUIRE(vt_theta_slice_residual(bf, Psi, phi, xi, Slice::at_segment(1.9, 0.2, 3.7)) <= 1e-6);
  }
  auto ps = ps_lag();
  Fields q = random_fields(ps.schema(), rng.split("q"), 0.4, 2);
  q["eps"].comp[0] = q["eps"].comp[0] + sample(ps.schema()->grid, [](double) { return 1.5; });
  Fields eta = random_fields(ps.schema(), rng.split("eta"), 0.4, 2);
  auto Psi = random_field_diffeo(ps.schema(), rng.split("psi"));
  REQUIRE(vt_theta_slice_residual(ps, Psi, q, eta, Slice::at_point(0.8)) <= 1e-6);
}

TEST_CASE("slice two-form decomposition under a frame") {
  auto bf = bf_lag();
  Rng rng(449);
  Slice seg = Slice::at_segment(1.9, 0.2, 3.7);
  Slice circ = Slice::at_circle(1.9);
  for (int t = 0; t < 3; ++t) {
    Rng sub = rng.split("trial" + std::to_string(t));
    Fields phi = random_fields(bf.schema(), sub.split("phi"), 0.4, 2);
    Fields xi1 = random_fields(bf.schema(), sub.split("x1"), 0.4, 2);
    Fields xi2 = random_fields(bf.schema(), sub.split("x2"), 0.4, 2);
    auto Psi = random_field_diffeo(bf.schema(), sub.split("psi"));
    auto t1 = vt_presymplectic_slice_terms(bf, Psi, phi, xi1, xi2, seg);
    REQUIRE(std::abs(t1.transformed - t1.base - t1.boundary + t1.bulk) <= 1e-6);
    auto t2 = vt_presymplectic_slice_terms(bf, Psi, phi, xi1, xi2, circ);
    REQUIRE(t2.boundary == 0.0);
    REQUIRE(std::abs(t2.transformed - t2.base + t2.bulk) <= 1e-6);
  }
  // on solutions the constraint part dies and a pure corner relation remains
  for (int t = 0; t < 3; ++t) {
    Rng sub = rng.split("shell" + std::to_string(t));
    Fields sol = mod::bf_onshell(bf.schema(), sub.split("sol"));
    Fields xi1 = random_fields(bf.schema(), sub.split("x1"), 0.4, 2);
    Fields xi2 = random_fields(bf.schema(), sub.split("x2"), 0.4, 2);
    auto Psi = random_field_diffeo(bf.schema(), sub.split("psi"));
    auto terms = vt_presymplectic_slice_terms(bf, Psi, sol, xi1, xi2, seg);
    REQUIRE(std::abs(terms.bulk) <= 1e-6);
    REQUIRE(std::abs(terms.transformed - terms.base - terms.boundary) <= 1e-6);
  }
}

TEST_CASE("windowed variational identity under a frame") {
  auto bf = bf_lag();
  auto ps = ps_lag();
  Rng rng(457);
  for (int t = 0; t < 3; ++t) {
    Rng sub = rng.split("trial" + std::to_string(t));
    Fields phi = random_fields(bf.schema(), sub.split("phi"), 0.4, 2);
    Fields xi = random_fields(bf.schema(), sub.split("xi"), 0.4, 2);
    auto Psi = random_field_diffeo(bf.schema(), sub.split("psi"));
    REQUIRE(vt_action_residual(bf, Psi, phi, xi, Region::make_band(0.5, 3.5)) <= 1e-6);
    REQUIRE(vt_action_residual(bf, Psi, phi, xi, Region::whole()) <= 1e-6);

    Fields q = random_fields(ps.schema(), sub.split("q"), 0.4, 2);
    q["eps"].comp[0] = q["eps"].comp[0] + sample(ps.schema()->grid, [](double) { return 1.5; });
    Fields eta = random_fields(ps.schema(), sub.split("eta"), 0.4, 2);
    auto Psil = random_field_diffeo(ps.schema(), sub.split("psil"));
    REQUIRE(vt_action_residual(ps, Psil, q, eta, Region::make_interval(0.5, 4.5)) <= 1e-6);
  }
  // a zero tangent moves nothing anywhere
  Fields phi = random_fields(bf.schema(), rng.split("phi"), 0.4, 2);
  auto Psi = random_field_diffeo(bf.schema(), rng.split("psi"));
  Fields zero(bf.schema());
  REQUIRE(dressing_variation(Psi, phi, zero).max_abs() == 0.0);
  REQUIRE(vt_action_residual(bf, Psi, phi, zero, Region::make_band(0.5, 3.5)) == 0.0);
}
