// Diffeomorphisms, pullbacks, flows, brackets and oriented integration.
// Flow-based finite differences serve as the independent oracle for the
// algebraic Lie derivative, and analytic implicit-function values check the
// derivative channels of the Newton inverse.

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "covphase/geom.hpp"

using namespace covphase;

namespace {

double diffeo_err(const Diffeo& a, const Diffeo& b) {
  double m = 0;
  for (int d = 0; d < a.grid().dim(); ++d)
    m = std::max(m, (a.displacement()[d] - b.displacement()[d]).max_abs());
  return m;
}

double form_err(const FormField& a, const FormField& b) {
  double m = 0;
  for (size_t i = 0; i < a.comp.size(); ++i) m = std::max(m, (a.comp[i] - b.comp[i]).max_abs());
  return m;
}

Diffeo psi_1d(const PeriodicGrid& g, double amp = 0.3) {
  return Diffeo(g, {sample(g, [amp](double x) { return amp * std::sin(x + 0.4); })});
}

Diffeo psi_2d(const PeriodicGrid& g) {
  return Diffeo(g, {sample(g, [](double x, double y) { return 0.20 * std::sin(x + 0.3) + 0.05 * std::cos(y); }),
                    sample(g, [](double x, double y) { return 0.15 * std::cos(y - 0.7) + 0.05 * std::sin(x + y); })});
}

}  // namespace

// ===========================================================================
// diffeomorphisms
// ===========================================================================

TEST_CASE("displacement graphs require a contracting Jacobian") {
  auto g = PeriodicGrid::line(64);
  REQUIRE_NOTHROW(psi_1d(g, 0.9));
  REQUIRE_THROWS_AS(psi_1d(g, 1.05), near_singular_diffeo_error);
}

TEST_CASE("inverse round trip on the circle and the torus") {
  auto g = PeriodicGrid::line(64);
  auto psi = psi_1d(g);
  REQUIRE(diffeo_err(compose(psi, psi.inverse()), Diffeo::identity(g)) <= 1e-8);
  REQUIRE(diffeo_err(compose(psi.inverse(), psi), Diffeo::identity(g)) <= 1e-8);

  auto g2 = PeriodicGrid::torus(32, 32);
  auto phi = psi_2d(g2);
  REQUIRE(diffeo_err(compose(phi, phi.inverse()), Diffeo::identity(g2)) <= 1e-8);
}

TEST_CASE("translations invert exactly") {
  auto g = PeriodicGrid::line(32);
  double c = 0.731;
  Diffeo tr(g, {sample(g, [c](double) { return c; })});
  REQUIRE(tr.is_translation());
  const Diffeo& inv = tr.inverse();
  for (int j = 0; j < 32; ++j) REQUIRE(inv.displacement()[0].v[j] == -c);
}

TEST_CASE("inverse derivative channel matches the implicit function formula") {
  // psi_c(x) = x + c sin x; d/dc of the inverse at fixed target is
  // -sin(x)/(1 + c cos x) evaluated at the preimage
  auto g = PeriodicGrid::line(64);
  double c = 0.3;
  GridFunctionT<D1> disp(g);
  for (int j = 0; j < 64; ++j) {
    double x = g.node(0, j);
    disp.v[j] = D1{c * std::sin(x), std::sin(x)};
  }
  DiffeoT<D1> psi(g, {disp});
  const auto& inv = psi.inverse();
  for (int j = 0; j < 64; ++j) {
    double y = g.node(0, j);
    D1 gy = inv.displacement()[0].v[j];
    double x = y + gy.a;
    REQUIRE(std::abs(x + c * std::sin(x) - y) <= 1e-12);
    double expect = -std::sin(x) / (1 + c * std::cos(x));
    REQUIRE(std::abs(gy.b - expect) <= 1e-10);
  }
}

TEST_CASE("pullback is contravariant") {
  auto g = PeriodicGrid::torus(32, 32);
  auto psi = psi_2d(g);
  Diffeo eta(g, {sample(g, [](double x, double y) { return 0.1 * std::cos(x + y); }),
                 sample(g, [](double x, double y) { return 0.12 * std::sin(y - x); })});
  FormField w(g, 1, {sample(g, [](double x, double y) { return std::sin(x + 2 * y); }),
                     sample(g, [](double x, double y) { return std::cos(x - y); })});
  auto lhs = pullback(compose(psi, eta), w);
  auto rhs = pullback(eta, pullback(psi, w));
  REQUIRE(form_err(lhs, rhs) <= 1e-8);

  FormField top(g, 2, {sample(g, [](double x, double y) { return 1 + 0.5 * std::sin(x) * std::cos(y); })});
  REQUIRE(form_err(pullback(compose(psi, eta), top), pullback(eta, pullback(psi, top))) <= 1e-8);
}

// ===========================================================================
// exterior calculus
// ===========================================================================

TEST_CASE("degree rules") {
  auto g = PeriodicGrid::torus(16, 16);
  FormField top(g, 2);
  REQUIRE_THROWS_AS(exterior_d(top), degree_error);
  FormField sc(g, 0);
  VectorFieldM X(g);
  REQUIRE_THROWS_AS(interior(X, sc), degree_error);

  auto g1 = PeriodicGrid::line(16);
  FormField w1(g1, 1);
  REQUIRE_THROWS_AS(exterior_d(w1), degree_error);  // top form in 1d
}

TEST_CASE("d squared vanishes on scalars") {
  auto g = PeriodicGrid::torus(32, 32);
  FormField f(g, 0, {sample(g, [](double x, double y) { return std::exp(0.4 * std::sin(x - 2 * y)); })});
  auto ddf = exterior_d(exterior_d(f));
  REQUIRE(ddf.max_abs() <= 1e-10);
}

TEST_CASE("commutator bracket on the circle") {
  auto g = PeriodicGrid::line(64);
  auto X = sample_vf(g, [](double x) { return std::sin(x); });
  auto Y = sample_vf(g, [](double x) { return std::cos(x); });
  // sin d(cos) - cos d(sin) = -sin^2 - cos^2 = -1
  auto gb = lie_bracket_gamma(X, Y);
  for (int j = 0; j < 64; ++j) REQUIRE(std::abs(gb.comp[0].v[j] + 1.0) <= 1e-10);
  auto db = lie_bracket_diff(X, Y);
  for (int j = 0; j < 64; ++j) REQUIRE(std::abs(db.comp[0].v[j] - 1.0) <= 1e-10);
}

TEST_CASE("bracket satisfies the Jacobi identity") {
  auto g = PeriodicGrid::torus(32, 32);
  auto X = sample_vf(g, [](double x, double y) { return std::sin(x + y); },
                     [](double x, double) { return 0.5 * std::cos(x); });
  auto Y = sample_vf(g, [](double, double y) { return std::cos(2 * y); },
                     [](double x, double y) { return std::sin(x - y); });
  auto Z = sample_vf(g, [](double x, double y) { return 0.3 * std::cos(x + 2 * y); },
                     [](double, double y) { return 0.7 * std::sin(y); });
  auto J = lie_bracket_gamma(lie_bracket_gamma(X, Y), Z) +
           lie_bracket_gamma(lie_bracket_gamma(Y, Z), X) +
           lie_bracket_gamma(lie_bracket_gamma(Z, X), Y);
  REQUIRE(J.max_abs() <= 1e-8);
}

TEST_CASE("Lie derivative against the flow oracle") {
  auto g = PeriodicGrid::torus(32, 32);
  auto X = sample_vf(g, [](double x, double y) { return std::sin(x) * std::cos(y); },
                     [](double x, double y) { return 0.5 * std::cos(x + y); });
  FormField w(g, 1, {sample(g, [](double x, double y) { return std::cos(x + y); }),
                     sample(g, [](double x, double y) { return std::sin(x - 2 * y); })});
  auto lw = lie_derivative(X, w);

  // Richardson-extrapolated central differences of the flow pullback
  auto fd = [&](double eps) {
    auto fwd = pullback(flow(X, eps), w);
    auto bwd = pullback(flow(X, -eps), w);
    FormField out(g, 1);
    for (int c = 0; c < 2; ++c) out.comp[c] = (fwd.comp[c] - bwd.comp[c]) * (1.0 / (2 * eps));
    return out;
  };
  auto d1 = fd(0.02), d2 = fd(0.01);
  FormField rich(g, 1);
  for (int c = 0; c < 2; ++c) rich.comp[c] = d2.comp[c] * (4.0 / 3.0) - d1.comp[c] * (1.0 / 3.0);
  REQUIRE(form_err(lw, rich) <= 1e-6);
}

// ===========================================================================
// flows
// ===========================================================================

TEST_CASE("flow at time zero is the identity") {
  auto g = PeriodicGrid::line(64);
  auto X = sample_vf(g, [](double x) { return std::sin(2 * x); });
  REQUIRE(diffeo_err(flow(X, 0.0), Diffeo::identity(g)) <= 1e-14);
}

TEST_CASE("flow group property") {
  auto g = PeriodicGrid::line(64);
  auto X = sample_vf(g, [](double x) { return 0.8 * std::sin(x + 1.0); });
  auto a = flow(X, 0.25), b = flow(X, 0.35), ab = flow(X, 0.6);
  REQUIRE(diffeo_err(compose(a, b), ab) <= 1e-7);

  auto g2 = PeriodicGrid::torus(32, 32);
  auto Y = sample_vf(g2, [](double x, double y) { return 0.5 * std::sin(x + y); },
                     [](double x, double) { return 0.4 * std::cos(x); });
  REQUIRE(diffeo_err(compose(flow(Y, 0.2), flow(Y, 0.3)), flow(Y, 0.5)) <= 1e-7);
}

TEST_CASE("conjugated generator flows through the conjugated map") {
  auto g = PeriodicGrid::line(64);
  auto psi = psi_1d(g, 0.25);
  auto X = sample_vf(g, [](double x) { return 0.6 * std::cos(x); });
  double tau = 0.4;
  auto lhs = flow(conjugate_vf(psi, X), tau);
  auto rhs = compose(compose(psi.inverse(), flow(X, tau)), psi);
  REQUIRE(diffeo_err(lhs, rhs) <= 1e-7);
}

TEST_CASE("flows that leave the graph regime are rejected") {
  auto g = PeriodicGrid::line(64);
  auto X = sample_vf(g, [](double x) { return 2.0 * std::sin(x); });
  REQUIRE_THROWS_AS(flow(X, 2.0), flow_too_large_error);
}

// ===========================================================================
// regions, slices, integration
// ===========================================================================

TEST_CASE("Stokes on the interval and the band") {
  auto g1 = PeriodicGrid::line(64);
  FormField f(g1, 0, {sample(g1, [](double x) { return std::exp(std::sin(x)); })});
  auto U1 = Region::make_interval(0.5, 2.5);
  REQUIRE(std::abs(integrate(exterior_d(f), U1) - boundary_integrate(f, U1)) <= 1e-8);

  auto g2 = PeriodicGrid::torus(32, 32);
  FormField w(g2, 1, {sample(g2, [](double x, double y) { return std::sin(x + 2 * y); }),
                      sample(g2, [](double x, double y) { return std::cos(x - y) + 0.3; })});
  auto U2 = Region::make_band(0.5, 2.5);
  REQUIRE(std::abs(integrate(exterior_d(w), U2) - boundary_integrate(w, U2)) <= 1e-8);
}

TEST_CASE("integration degree rules") {
  auto g = PeriodicGrid::torus(16, 16);
  FormField w(g, 1);
  REQUIRE_THROWS_AS(integrate(w, Region::whole()), degree_error);
  FormField top(g, 2);
  REQUIRE_THROWS_AS(boundary_integrate(top, Region::whole()), degree_error);
  REQUIRE_THROWS_AS(Region::make_band(-1.0, 1.0), invalid_region_error);
}

TEST_CASE("slice integrals on the torus") {
  auto g = PeriodicGrid::torus(32, 32);
  FormField w(g, 1, {sample(g, [](double x, double y) { return 2 + std::sin(x) + std::cos(y); }),
                     sample(g, [](double, double) { return 1.0; })});
  // circle y = 1.1: only the x component integrates, sin averages out
  double c = integrate_slice(w, Slice::at_circle(1.1));
  REQUIRE(std::abs(c - two_pi * (2 + std::cos(1.1))) <= 1e-10);
  // segment x in [0, pi]: integral of 2 + cos(1.1) + sin over the half circle
  double s = integrate_slice(w, Slice::at_segment(1.1, 0.0, two_pi / 2));
  REQUIRE(std::abs(s - ((2 + std::cos(1.1)) * two_pi / 2 + 2.0)) <= 1e-8);
}

TEST_CASE("slice boundaries are oriented point differences") {
  auto g = PeriodicGrid::torus(32, 32);
  FormField f(g, 0, {sample(g, [](double x, double y) { return std::sin(x) * std::cos(y); })});
  double d = boundary_integrate_slice(f, Slice::at_segment(0.9, 0.4, 2.0));
  REQUIRE(std::abs(d - (std::sin(2.0) - std::sin(0.4)) * std::cos(0.9)) <= 1e-9);
  REQUIRE(boundary_integrate_slice(f, Slice::at_circle(0.9)) == 0.0);

  auto g1 = PeriodicGrid::line(32);
  FormField f1(g1, 0, {sample(g1, [](double x) { return std::sin(x); })});
  REQUIRE(boundary_integrate_slice(f1, Slice::at_point(1.0)) == 0.0);
}

TEST_CASE("integration pairing is invariant under the pulled back region") {
  auto g = PeriodicGrid::line(64);
  auto psi = psi_1d(g);
  FormField w(g, 1, {sample(g, [](double x) { return 1 + 0.4 * std::cos(2 * x); })});
  for (auto U : {Region::whole(), Region::make_interval(0.8, 3.1)}) {
    double lhs = integrate_preimage(pullback(psi, w), psi, U);
    REQUIRE(std::abs(lhs - integrate(w, U)) <= 1e-8);
  }

  auto g2 = PeriodicGrid::torus(32, 32);
  auto phi = psi_2d(g2);
  FormField top(g2, 2, {sample(g2, [](double x, double y) { return 1 + 0.3 * std::sin(x + y); })});
  for (auto U : {Region::whole(), Region::make_band(0.5, 2.8)}) {
    double lhs = integrate_preimage(pullback(phi, top), phi, U);
    REQUIRE(std::abs(lhs - integrate(top, U)) <= 1e-8);
  }
}

TEST_CASE("region continuity residual") {
  auto g = PeriodicGrid::torus(32, 32);
  auto X = sample_vf(g, [](double x, double y) { return std::sin(x) + 0.2 * std::cos(y); },
                     [](double x, double y) { return std::cos(x + y); });
  FormField w(g, 2, {sample(g, [](double x, double y) { return 1 + 0.5 * std::sin(x) * std::sin(y); })});
  REQUIRE(std::abs(region_continuity_residual(X, w, Region::make_band(0.4, 2.9))) <= 1e-7);
  REQUIRE(std::abs(region_continuity_residual(X, w, Region::whole())) <= 1e-10);
}
