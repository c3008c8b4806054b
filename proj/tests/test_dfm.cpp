// Relational frames: clock-built dressings, the dressed field and tangent
// with their basicity, the flat frame connection, reference-side
// reparametrizations, the dressed slice structure, and the classification of
// what survives of the group. Oracles: Newton round trips against the
// defining composition, substitution consistency at roundoff, dual routes
// frozen against the closed transformation formulas, and exact solutions.

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <string>
#include <vector>

#include "covphase/dfm.hpp"

using namespace covphase;
namespace mod = covphase::models;

namespace {

Lagrangian bf_lag() { return mod::bf_with_clocks(32, 32); }

// Minimal covariant line model with its own reference clock: the einbein of
// the kinetic term is the clock stretch itself.
SchemaPtr clockline_schema(int n = 64) {
  return std::make_shared<Schema>(
      PeriodicGrid::line(n), std::vector<Schema::Entry>{{"phi", FieldKind::form_kind(0)},
                                                        {"tau", FieldKind::clock_kind(0)}});
}

Lagrangian clockline_lag(int n = 64) {
  return Lagrangian(clockline_schema(n), "0.5*dx(phi)^2/dx(tau)");
}

// Reparametrization of the reference side driven by the dressed data through
// one node sample; smooth in the AD scalar and safe for two levels.
FieldDepDiffeo dressed_dependent_reparam() {
  return FieldDepDiffeo::make([](const auto& conf) {
    using T = typename std::decay_t<decltype(conf)>::Scalar;
    auto amp = conf.comp[0].comp[0].v[0];
    auto sx = sample(conf.grid(),
                     [](double x, double y) { return std::sin(x) * (2.0 + std::cos(y)); });
    std::vector<GridFunctionT<T>> disp;
    disp.push_back(T(0.01) * amp * lift_to<T>(sx));
    disp.emplace_back(conf.grid());
    return DiffeoT<T>(conf.grid(), std::move(disp));
  });
}

// Torus map moving only the second coordinate, by a function of it alone.
Diffeo axis_two_map(const PeriodicGrid& g, double a, double c) {
  std::vector<GridFunction> disp;
  disp.emplace_back(g);
  disp.push_back(sample(g, [a, c](double, double y) {
    return a * std::sin(y + c) + 0.05 * std::sin(2 * y);
  }));
  return Diffeo(g, std::move(disp));
}

}  // namespace

// ===========================================================================
// clock dressings
// ===========================================================================

TEST_CASE("clock maps invert to the configured clocks and reject bad input") {
  auto lag = clockline_lag();
  auto sch = lag.schema();
  Rng rng(401);
  Fields phi = random_fields(sch, rng.split("phi"), 0.2, 2);
  phi["tau"].comp[0] = sample(sch->grid, [](double x) { return 0.2 * std::sin(x); });

  Dressing u = clock_dressing(phi);
  REQUIRE(u.origin() == "clock:tau");
  // dressing the clock slot must erase it: the frame is the clock's inverse
  Fields phiu = dress_field(phi, u);
  REQUIRE(phiu["tau"].comp[0].max_abs() <= 1e-8);

  // identity clock gives the identity frame and fixes the configuration
  Fields flat = random_fields(sch, rng.split("flat"), 0.2, 2);
  flat["tau"].comp[0] = GridFunction(sch->grid);
  Dressing uid = clock_dressing(flat);
  REQUIRE(diffeo_distance(uid.map(flat), Diffeo::identity(sch->grid)) <= 1e-12);
  REQUIRE(fields_gap(dress_field(flat, uid), flat) <= 1e-12);

  // a folded clock cannot serve as a frame
  Fields bad = phi;
  bad["tau"].comp[0] = sample(sch->grid, [](double x) { return 1.2 * std::sin(x); });
  REQUIRE_THROWS_AS(clock_dressing(bad), dressing_degenerate_error);

  // name validation: only clock slots qualify, each axis once
  REQUIRE_THROWS_AS(clock_dressing(phi, {"phi"}), config_error);
  REQUIRE_THROWS_AS(clock_dressing(phi, {"missing"}), config_error);
  Fields q(mod::pscalar_schema(64));
  REQUIRE_THROWS_AS(clock_dressing(q), config_error);
  Fields two = random_fields(mod::bf_schema(32, 32), rng.split("two"), 0.2, 2);
  REQUIRE_THROWS_AS(clock_dressing(two, {"chi1", "chi1"}), config_error);
}

TEST_CASE("clock dressings are equivariant and dressed data are invariant") {
  auto sch = mod::bf_schema(32, 32);
  Rng rng(409);
  Fields phi = random_fields(sch, rng.split("phi"), 0.2, 2);
  Dressing u = clock_dressing(phi);

  for (int t = 0; t < 10; ++t) {
    Rng sub = rng.split("trial" + std::to_string(t));
    Diffeo psi = flow(random_vf(sch->grid, sub.split("psi"), 0.12, 2), 1.0);
    REQUIRE(equivariance_residual(u.map, phi, psi) <= 1e-6);
    REQUIRE(dress_invariance_residual(u, phi, psi) <= 1e-6);
  }

  // invariance extends to configuration-dependent frame changes
  auto Psi = random_field_diffeo(sch, rng.split("vert"));
  REQUIRE(fields_gap(dress_field(vertical_transform(Psi, phi), u), dress_field(phi, u)) <= 1e-6);

  // both clock slots land on the identity clock
  Fields phiu = dress_field(phi, u);
  REQUIRE(phiu["chi1"].comp[0].max_abs() <= 1e-8);
  REQUIRE(phiu["chi2"].comp[0].max_abs() <= 1e-8);

  // the admission helper agrees with the direct residuals
  REQUIRE(validate_dressing(u, phi, rng.split("gate")) <= 1e-6);
}

// ===========================================================================
// dressed tangents
// ===========================================================================

TEST_CASE("dressed tangents are basic and obey the substitution rule") {
  auto sch = mod::bf_schema(32, 32);
  Rng rng(419);
  Fields phi = random_fields(sch, rng.split("phi"), 0.2, 2);
  Fields xi = random_fields(sch, rng.split("xi"), 0.2, 2);
  Dressing u = clock_dressing(phi);
  auto X = random_vf(sch->grid, rng.split("X"), 0.3, 2);
  Diffeo psi = flow(random_vf(sch->grid, rng.split("psi"), 0.12, 2), 1.0);

  BasicityReport b = basicity_check(u, phi, xi, X, FieldDepDiffeo::constant(psi));
  REQUIRE(b.horizontality <= 1e-6);
  REQUIRE(b.invariance <= 1e-6);

  // instantiating the generic reframing formula at the frame is the dressed
  // formula, literally
  REQUIRE(rule_of_thumb_gap(u, phi, xi) <= 1e-9);

  // and the generic formula itself closes against the derivative route
  REQUIRE(reframed_tangent_residual(u.map, phi, xi) <= 1e-6);

  // a configuration-independent frame transports tangents linearly
  Dressing fixed = user_dressing(FieldDepDiffeo::constant(psi));
  REQUIRE(fields_gap(dress_basis_1form(phi, fixed, xi), pullback_tangent(psi, xi)) <= 1e-12);
}

// ===========================================================================
// the frame connection
// ===========================================================================

TEST_CASE("the frame connection reproduces vertical directions and is flat") {
  auto bf = bf_lag();
  auto sch = bf.schema();
  Rng rng(431);
  Fields phi = random_fields(sch, rng.split("phi"), 0.2, 2);
  Fields xi1 = random_fields(sch, rng.split("xi1"), 0.2, 2);
  Fields xi2 = random_fields(sch, rng.split("xi2"), 0.2, 2);
  Dressing u = clock_dressing(phi);
  auto om = flat_connection(u);

  auto X = random_vf(sch->grid, rng.split("X"), 0.3, 2);
  auto Y = random_vf(sch->grid, rng.split("Y"), 0.25, 2);
  REQUIRE(connection_vertical_residual(om, phi, X) <= 1e-6);
  REQUIRE(connection_vertical_residual(om, phi, Y) <= 1e-6);

  Diffeo psi = flow(random_vf(sch->grid, rng.split("psi"), 0.12, 2), 1.0);
  REQUIRE(connection_equivariance_residual(om, phi, xi1, psi) <= 1e-6);

  // structure equation on constant and configuration-dependent probes
  auto Xf = value_tangent(xi1);
  auto Yf = value_tangent(xi2);
  REQUIRE(curvature_residual(om, Xf, Yf, phi) <= 1e-5);
  auto Zf = FieldVectorField::make([X](const auto& conf) {
    using T = typename std::decay_t<decltype(conf)>::Scalar;
    auto amp = conf.comp[0].comp[0].v[0];
    return lie_drag(amp * lift_to<T>(X), conf);
  });
  REQUIRE(curvature_residual(om, Xf, Zf, phi) <= 1e-5);

  // the horizontal projection lands in the connection's kernel
  REQUIRE(om(phi, horizontal_tangent(om, phi, xi1)).max_abs() <= 1e-6);

  // horizontalized potential: kills vertical probes, stays linear
  Slice sigma = Slice::at_circle(1.1);
  auto pot = presymplectic_potential(bf, sigma);
  auto hpot = horizontalize(pot, om);
  auto vert = value_tangent(lie_drag(X, phi));
  REQUIRE(std::abs(hpot(phi, {&vert})) <= 1e-6);
  auto pa = value_tangent(xi1);
  auto pb = value_tangent(xi2);
  auto pab = value_tangent(xi1 + 2.0 * xi2);
  REQUIRE(std::abs(hpot(phi, {&pab}) - hpot(phi, {&pa}) - 2.0 * hpot(phi, {&pb})) <= 1e-9);
  REQUIRE_THROWS_AS(horizontalize(field_d(pot), om), unsupported_degree_error);

  // transporting the horizontal part through the frame is the dressed tangent
  REQUIRE(fields_gap(pullback_tangent(u.map(phi), horizontal_tangent(om, phi, xi1)),
                     dress_basis_1form(phi, u, xi1)) <= 1e-7);
}

TEST_CASE("the frame lemma transports derivatives through the pullback") {
  auto bf = bf_lag();
  auto sch = bf.schema();
  Rng rng(433);
  Fields phi = random_fields(sch, rng.split("phi"), 0.2, 2);
  Fields xi = random_fields(sch, rng.split("xi"), 0.2, 2);
  Fields xi0 = random_fields(sch, rng.split("probe"), 0.2, 2);
  Dressing u = clock_dressing(phi);

  auto dens = [&bf](const auto& conf) { return bf.lagrangian_form(conf); };
  REQUIRE(pullback_variation_residual(u, dens, phi, xi) <= 1e-6);

  auto pairing = [&bf, xi0](const auto& conf) {
    using T = typename std::decay_t<decltype(conf)>::Scalar;
    return bf.theta(conf, lift_to<T>(xi0));
  };
  REQUIRE(pullback_variation_residual(u, pairing, phi, xi) <= 1e-6);
}

// ===========================================================================
// reference-side reparametrization
// ===========================================================================

TEST_CASE("reparametrizations shift the connection affinely") {
  auto bf = bf_lag();
  auto sch = bf.schema();
  Rng rng(443);
  Fields phi = random_fields(sch, rng.split("phi"), 0.2, 2);
  Fields xi = random_fields(sch, rng.split("xi"), 0.2, 2);
  Dressing u = clock_dressing(phi);
  auto X = random_vf(sch->grid, rng.split("X"), 0.3, 2);
  Diffeo psi = flow(random_vf(sch->grid, rng.split("psi"), 0.12, 2), 1.0);
  Slice sigma = Slice::at_circle(1.1);

  // the identity reparametrization moves nothing
  auto fid = FieldDepDiffeo::constant(Diffeo::identity(sch->grid));
  FrameShiftReport r0 = connection_shift_suite(bf, u, fid, phi, xi, X, psi, sigma);
  REQUIRE(r0.closure <= 1e-12);
  REQUIRE(r0.horizontality <= 1e-12);
  REQUIRE(r0.equivariance <= 1e-12);
  REQUIRE(r0.potential_shift <= 1e-12);

  // a fixed reparametrization shifts the frame but generates no connection
  // change: its variation vanishes
  std::vector<GridFunction> disp;
  disp.push_back(sample(sch->grid, [](double x, double) { return 0.1 * std::sin(x); }));
  disp.emplace_back(sch->grid);
  Diffeo ffix(sch->grid, std::move(disp));
  REQUIRE(frame_shift_generator(u, FieldDepDiffeo::constant(ffix), phi, xi).max_abs() <= 1e-12);
  FrameShiftReport r1 =
      connection_shift_suite(bf, u, FieldDepDiffeo::constant(ffix), phi, xi, X, psi, sigma);
  REQUIRE(r1.closure <= 1e-6);
  REQUIRE(r1.potential_shift <= 1e-6);

  // a dressed-data-dependent reparametrization realizes the full affine law
  FrameShiftReport r2 = connection_shift_suite(bf, u, dressed_dependent_reparam(), phi, xi, X,
                                               psi, sigma);
  REQUIRE(r2.closure <= 1e-6);
  REQUIRE(r2.horizontality <= 1e-6);
  REQUIRE(r2.equivariance <= 1e-6);
  REQUIRE(r2.potential_shift <= 1e-6);

  // composing the frame with the reparametrization is pullback on dressed data
  Dressing u2 = reparametrize(u, ffix);
  REQUIRE(fields_gap(dress_field(phi, u2), pullback(ffix, dress_field(phi, u))) <= 1e-8);
}

// ===========================================================================
// dressed slice structure
// ===========================================================================

TEST_CASE("the dressed slice structure closes on its dual routes") {
  auto bf = bf_lag();
  auto sch = bf.schema();
  Rng rng(449);
  Slice sigma = Slice::at_circle(1.1);
  Region band = Region::make_band(0.4, 2.6);

  Fields phi = random_fields(sch, rng.split("phi"), 0.15, 2);
  Fields xi1 = random_fields(sch, rng.split("xi1"), 0.2, 2);
  Fields xi2 = random_fields(sch, rng.split("xi2"), 0.2, 2);
  Dressing u = clock_dressing(phi);

  DressedReport r = dressed_presymplectic(bf, u, phi, xi1, xi2, sigma, band);
  REQUIRE(r.density <= 1e-6);
  REQUIRE(r.field_eq <= 1e-6);
  REQUIRE(r.theta_slice <= 1e-6);
  REQUIRE(r.two_form <= 1e-6);
  REQUIRE(r.variational <= 1e-6);
  REQUIRE(r.boundary_flux <= 1e-6);

  // same closure over the whole window, where the drag routes trivialize
  DressedReport rw = dressed_presymplectic(bf, u, phi, xi1, xi2, sigma, Region::whole());
  REQUIRE(rw.variational <= 1e-6);
  REQUIRE(rw.boundary_flux <= 1e-6);

  // solutions stay solutions through the frame; the floor here is the Newton
  // inverse threaded through the pullback, not the equations themselves
  Fields sol = mod::bf_onshell(sch, rng.split("sol"));
  Dressing us = clock_dressing(sol);
  DressedReport rs = dressed_presymplectic(bf, us, sol, xi1, xi2, sigma, band);
  REQUIRE(rs.dressed_eq_norm <= 1e-6);
  REQUIRE(rs.two_form <= 1e-6);

  // the identity frame reproduces the bare structure
  Dressing uid = user_dressing(FieldDepDiffeo::constant(Diffeo::identity(sch->grid)));
  DressedReport ri = dressed_presymplectic(bf, uid, phi, xi1, xi2, sigma, band);
  REQUIRE(ri.density <= 1e-12);
  REQUIRE(ri.theta_slice <= 1e-12);
  REQUIRE(ri.two_form <= 1e-10);
  auto pot = dressed_potential_form(bf, uid, sigma);
  auto bare = presymplectic_potential(bf, sigma);
  auto p = value_tangent(xi1);
  REQUIRE(std::abs(pot(phi, {&p}) - bare(phi, {&p})) <= 1e-12);
}

TEST_CASE("the dressed potential is invariant under frame changes") {
  auto bf = bf_lag();
  auto sch = bf.schema();
  Rng rng(457);
  Fields phi = random_fields(sch, rng.split("phi"), 0.15, 2);
  Fields xi = random_fields(sch, rng.split("xi"), 0.2, 2);
  Dressing u = clock_dressing(phi);
  Slice sigma = Slice::at_circle(1.1);

  for (int t = 0; t < 10; ++t) {
    auto Psi = random_field_diffeo(sch, rng.split("vert" + std::to_string(t)));
    REQUIRE(dressed_potential_invariance(bf, u, Psi, phi, xi, sigma) <= 1e-6);
  }
}

TEST_CASE("the line model dresses by its own clock") {
  auto lag = clockline_lag();
  auto sch = lag.schema();
  Rng rng(461);
  Fields phi = random_fields(sch, rng.split("phi"), 0.2, 2);
  Fields xi1 = random_fields(sch, rng.split("xi1"), 0.2, 2);
  Fields xi2 = random_fields(sch, rng.split("xi2"), 0.2, 2);
  Dressing u = clock_dressing(phi);

  Slice sigma = Slice::at_point(0.7);
  Region window = Region::make_interval(0.5, 5.0);
  DressedReport r = dressed_presymplectic(lag, u, phi, xi1, xi2, sigma, window);
  REQUIRE(r.density <= 1e-6);
  REQUIRE(r.field_eq <= 1e-6);
  REQUIRE(r.theta_slice <= 1e-6);
  REQUIRE(r.two_form <= 1e-6);
  REQUIRE(r.variational <= 1e-6);
  REQUIRE(r.boundary_flux <= 1e-6);
}

TEST_CASE("relationally defined window boundaries are frame independent") {
  auto sch = mod::bf_schema(32, 32);
  Rng rng(463);
  Fields phi = random_fields(sch, rng.split("phi"), 0.2, 2);
  Dressing u = clock_dressing(phi);
  Region band = Region::make_band(0.4, 2.6);

  for (int t = 0; t < 3; ++t) {
    Diffeo psi = flow(random_vf(sch->grid, rng.split("psi" + std::to_string(t)), 0.12, 2), 1.0);
    REQUIRE(dressed_boundary_gap(u, phi, psi, band) <= 1e-6);
  }
  Diffeo psi = flow(random_vf(sch->grid, rng.split("full"), 0.12, 2), 1.0);
  REQUIRE(dressed_boundary_gap(u, phi, psi, Region::whole()) == 0.0);
}

// ===========================================================================
// residual structure
// ===========================================================================

TEST_CASE("residual freedom classifies into the three laws") {
  auto sch = mod::bf_schema(32, 32);
  Rng rng(467);
  Fields phi = random_fields(sch, rng.split("phi"), 0.2, 2);

  std::vector<Diffeo> generic;
  for (int t = 0; t < 3; ++t)
    generic.push_back(
        flow(random_vf(sch->grid, rng.split("gen" + std::to_string(t)), 0.1, 2), 1.0));
  std::vector<Diffeo> second_axis;
  for (int t = 0; t < 3; ++t)
    second_axis.push_back(axis_two_map(sch->grid, 0.12, 0.7 * t));

  // a full set of clocks eliminates everything
  Dressing u = clock_dressing(phi);
  ResidualProbe full = classify_residual(u, phi, generic);
  REQUIRE(full.law == ResidualLaw::eliminated);
  REQUIRE(std::string(residual_law_label(full.law)) ==
          "complete elimination; residual freedom = reference reparametrizations");

  // one clock leaves the transverse maps acting by conjugation
  Dressing ux = clock_dressing(phi, {"chi1"});
  ResidualProbe conj = classify_residual(ux, phi, second_axis);
  REQUIRE(conj.law == ResidualLaw::conjugation);
  REQUIRE(conj.conjugation_gap <= 1e-6);

  // against generic maps the same partial frame obeys the twisted law only
  ResidualProbe tw = classify_residual(ux, phi, generic);
  REQUIRE(tw.law == ResidualLaw::cocycle);
  REQUIRE(tw.eliminated_gap > 1e-3);
  REQUIRE(tw.conjugation_gap > 1e-3);
  REQUIRE(tw.cocycle_gap <= 1e-6);

  REQUIRE_THROWS_AS(classify_residual(u, phi, {}), config_error);
}

TEST_CASE("residual charges on dressed data reuse the bare algebra") {
  auto bf = bf_lag();
  auto sch = bf.schema();
  Rng rng(479);
  Fields sol = mod::bf_onshell(sch, rng.split("sol"));
  Fields xi = random_fields(sch, rng.split("xi"), 0.2, 2);
  Dressing u = clock_dressing(sol);
  Slice sigma = Slice::at_circle(1.1);

  std::vector<Diffeo> subgroup;
  for (int t = 0; t < 2; ++t)
    subgroup.push_back(
        flow(random_vf(sch->grid, rng.split("sub" + std::to_string(t)), 0.1, 2), 1.0));
  auto X = random_vf(sch->grid, rng.split("X"), 0.3, 2);
  auto Y = random_vf(sch->grid, rng.split("Y"), 0.25, 2);

  ResidualReport r =
      residual_suite(bf, u, sol, subgroup, dressed_dependent_reparam(), xi, X, Y, sigma);
  REQUIRE(r.probe.law == ResidualLaw::eliminated);
  REQUIRE(r.reparam_tangent <= 1e-6);
  REQUIRE(r.bracket_relation <= 1e-6);
  REQUIRE(r.zero_charge == 0.0);
}
