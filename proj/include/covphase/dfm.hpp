#pragma once
/// Relational frames extracted from the fields themselves. A dressing sends
/// each configuration to a map from reference coordinates into spacetime and
/// intertwines the group action with composition by the inverse; rewriting
/// data through that frame produces invariants whose leftover freedom lives
/// entirely on the reference side. Every dressed object below is obtained by
/// feeding the frame to the closed transformation formulas of cps, so the
/// two code paths cannot drift apart.
///
/// Depth bookkeeping: each frame variation spends one derivative channel,
/// exactly as in cps. Connection evaluators therefore carry two channels,
/// and the dressed potential form stops at one nested argument.

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "covphase/cps.hpp"

namespace covphase {

// ---------------------------------------------------------------------------
// Dressings
// ---------------------------------------------------------------------------

enum class DressingKind { clock, user };

/// A frame evaluator phi -> Diffeo. The contract is equivariance,
/// u(psi*phi) = psi^{-1} . u(phi); clock dressings satisfy it by
/// construction, user evaluators promise it and validate_dressing probes it.
struct Dressing {
  DressingKind kind = DressingKind::user;
  std::vector<std::string> clocks;  // dressing slot names when clock built
  FieldDepDiffeo map;

  template <class T>
  DiffeoT<T> operator()(const FieldsT<T>& phi) const {
    return map(phi);
  }

  /// Construction tag for serialized exports.
  std::string origin() const {
    if (kind == DressingKind::user) return "user";
    std::string s = "clock:";
    for (size_t i = 0; i < clocks.size(); ++i) {
      if (i) s += ',';
      s += clocks[i];
    }
    return s;
  }
};

namespace detail {

/// The clock map of a configuration: displacement on each dressed axis read
/// from the named clock slots, identity on the others. Monotonicity of the
/// clock graphs is exactly invertibility of this map.
template <class T>
DiffeoT<T> clock_map(const FieldsT<T>& phi, const std::vector<int>& slots) {
  const PeriodicGrid& g = phi.grid();
  std::vector<GridFunctionT<T>> disp(g.dim(), GridFunctionT<T>(g));
  for (int s : slots) disp[phi.schema->fields[s].kind.axis] = phi.comp[s].comp[0];
  try {
    return DiffeoT<T>(g, std::move(disp));
  } catch (const near_singular_diffeo_error&) {
    throw dressing_degenerate_error("clock not monotone along its winding axis");
  }
}

}  // namespace detail

/// Frame built from the configuration's own clocks: the inverse of the clock
/// map. Names default to every clock slot; an axis carries at most one clock
/// and keeps its coordinate when it carries none. Equivariance holds because
/// pulling back a clock composes its map on the right, so the inverse
/// composes with psi^{-1} on the left.
inline Dressing clock_dressing(const Fields& phi, std::vector<std::string> names = {}) {
  const Schema& s = *phi.schema;
  if (names.empty())
    for (const auto& e : s.fields)
      if (e.kind.is_clock()) names.push_back(e.name);
  if (names.empty()) throw config_error("clock dressing needs at least one clock slot");
  std::vector<int> slots;
  std::vector<int> used(s.grid.dim(), 0);
  for (const auto& n : names) {
    int i = s.index(n);
    if (!s.fields[i].kind.is_clock()) throw config_error("field '" + n + "' is not a clock");
    if (used[s.fields[i].kind.axis]++) throw config_error("two clocks dress the same axis");
    slots.push_back(i);
  }
  (void)detail::clock_map(phi, slots);  // reject degenerate clocks up front
  Dressing out;
  out.kind = DressingKind::clock;
  out.clocks = std::move(names);
  out.map = FieldDepDiffeo::make(
      [slots](const auto& conf) { return detail::clock_map(conf, slots).inverse(); });
  return out;
}

/// Wrap an externally supplied frame evaluator.
inline Dressing user_dressing(FieldDepDiffeo map) {
  Dressing out;
  out.map = std::move(map);
  return out;
}

/// Worst equivariance residual of a frame over sampled diffeomorphisms; the
/// admission test for user evaluators.
inline double validate_dressing(const Dressing& u, const Fields& phi, Rng rng, int trials = 8,
                                double amp = 0.12) {
  const PeriodicGrid& g = phi.grid();
  double worst = 0;
  for (int t = 0; t < trials; ++t) {
    Diffeo psi = flow(random_vf(g, rng.split("frame probe " + std::to_string(t)), amp, 2), 1.0);
    worst = std::max(worst, equivariance_residual(u.map, phi, psi));
  }
  return worst;
}

/// The dressed configuration: pullback of phi along its own frame. Invariant
/// under the group action on phi, to the frame's accuracy.
template <class T>
FieldsT<T> dress_field(const FieldsT<T>& phi, const Dressing& u) {
  return pullback(u.map(phi), phi);
}

/// Tangent of the dressed configuration along xi, by the closed formula:
/// linear transport of xi corrected by the drag along the frame variation.
template <class T>
FieldsT<T> dress_basis_1form(const FieldsT<T>& phi, const Dressing& u, const FieldsT<T>& xi) {
  auto w = dressing_variation(u.map, phi, xi);
  return pullback_tangent(u.map(phi), xi + lie_drag(w, phi));
}

/// Closed transport formula for the tangent of a reframed configuration,
/// written against an arbitrary configuration-dependent map.
inline Fields reframed_tangent(const FieldDepDiffeo& Psi, const Fields& phi, const Fields& xi) {
  auto w = dressing_variation(Psi, phi, xi);
  return pullback_tangent(Psi(phi), xi + lie_drag(w, phi));
}

/// Gap between the generic derivative of a reframed configuration and the
/// closed pullback formula. With a frame for Psi this is the tangent half of
/// the substitution rule, and it applies unchanged to reference-side
/// reparametrizations acting on dressed data.
inline double reframed_tangent_residual(const FieldDepDiffeo& Psi, const Fields& phi,
                                        const Fields& xi) {
  auto generic = vertical_pushforward_at(Psi, phi, xi);
  return fields_gap(generic, reframed_tangent(Psi, phi, xi));
}

/// The substitution rule on the tangent map: instantiating the generic
/// reframing formula at the frame of a dressing must reproduce the dressed
/// tangent exactly, both being the same expression in different clothes.
inline double rule_of_thumb_gap(const Dressing& u, const Fields& phi, const Fields& xi) {
  return fields_gap(reframed_tangent(u.map, phi, xi), dress_basis_1form(phi, u, xi));
}

/// Invariance gap of the dressed configuration across one group element.
inline double dress_invariance_residual(const Dressing& u, const Fields& phi,
                                        const Diffeo& psi) {
  return fields_gap(dress_field(pullback(psi, phi), u), dress_field(phi, u));
}

struct BasicityReport {
  double horizontality = 0;  // dressed tangent of a purely vertical direction
  double invariance = 0;     // gap across a frame change of configuration and tangent
};

/// Both halves of basicity for the dressed tangent map.
inline BasicityReport basicity_check(const Dressing& u, const Fields& phi, const Fields& xi,
                                     const VectorFieldM& X, const FieldDepDiffeo& Psi) {
  BasicityReport r;
  r.horizontality = dress_basis_1form(phi, u, lie_drag(X, phi)).max_abs();
  auto moved = vertical_transform(Psi, phi);
  auto moved_xi = vertical_pushforward_at(Psi, phi, xi);
  r.invariance = fields_gap(dress_basis_1form(moved, u, moved_xi),
                            dress_basis_1form(phi, u, xi));
  return r;
}

// ---------------------------------------------------------------------------
// Flat connection of a frame
// ---------------------------------------------------------------------------

/// Connection evaluator on configuration space: eats a point and a tangent,
/// returns the generator whose vertical lift is the tangent's vertical part.
class FlatConnection {
 public:
  std::function<VectorFieldM(const Fields&, const Fields&)> c0;
  std::function<VectorFieldMT<D1>(const FieldsT<D1>&, const FieldsT<D1>&)> c1;

  FlatConnection() = default;

  template <class F>
  static FlatConnection make(F fn) {
    FlatConnection out;
    out.c0 = fn;
    out.c1 = fn;
    return out;
  }

  template <class T>
  VectorFieldMT<T> operator()(const FieldsT<T>& phi, const FieldsT<T>& xi) const {
    if constexpr (std::is_same_v<T, double>) {
      if (!c0) throw differentiation_error("connection evaluator missing at depth 0");
      return c0(phi, xi);
    } else if constexpr (std::is_same_v<T, D1>) {
      if (!c1) throw differentiation_error("connection derivative depth exhausted");
      return c1(phi, xi);
    } else {
      static_assert(detail::no_such_depth<T>, "derivative depth beyond budget");
    }
  }
};

/// The canonical connection of a frame: minus the frame variation. Vertical
/// tangents return their own generator, and the curvature residual vanishes
/// because frames compose.
inline FlatConnection flat_connection(const Dressing& u) {
  return FlatConnection::make([map = u.map](const auto& phi, const auto& xi) {
    return -dressing_variation(map, phi, xi);
  });
}

/// omega(X^v) - X on one probe.
inline double connection_vertical_residual(const FlatConnection& om, const Fields& phi,
                                           const VectorFieldM& X) {
  return (om(phi, lie_drag(X, phi)) - X).max_abs();
}

/// Transport law under a fixed diffeomorphism: evaluated on transported data
/// the output conjugates.
inline double connection_equivariance_residual(const FlatConnection& om, const Fields& phi,
                                               const Fields& xi, const Diffeo& psi) {
  auto lhs = om(pullback(psi, phi), pullback_tangent(psi, xi));
  return (lhs - conjugate_vf(psi, om(phi, xi))).max_abs();
}

/// Structure-equation residual on two configuration-space vector fields: the
/// Koszul derivative of the connection plus the bracket of its outputs.
/// Identically zero for the connection of a frame.
inline double curvature_residual(const FlatConnection& om, const FieldVectorField& Xf,
                                 const FieldVectorField& Yf, const Fields& phi) {
  auto Xp = Xf(phi);
  auto Yp = Yf(phi);
  auto liftX = dual_lift(phi, Xp);
  auto liftY = dual_lift(phi, Yp);
  auto dX = b_channel(om(liftX, Yf(liftX)));  // derivative of om(Y) along X
  auto dY = b_channel(om(liftY, Xf(liftY)));  // derivative of om(X) along Y
  auto br = b_channel(Yf(liftX)) - b_channel(Xf(liftY));  // commutator tangent
  auto curv = dX - dY - om(phi, br) + lie_bracket_diff(om(phi, Xp), om(phi, Yp));
  return curv.max_abs();
}

/// Tangent with its vertical part removed.
inline Fields horizontal_tangent(const FlatConnection& om, const Fields& phi,
                                 const Fields& xi) {
  return xi - lie_drag(om(phi, xi), phi);
}

/// Precompose a number-valued 1-form with the horizontal projection. Higher
/// degrees would need the alternating sum over argument subsets.
inline FieldScalarForm horizontalize(const FieldScalarForm& alpha, const FlatConnection& om) {
  if (alpha.deg != 1)
    throw unsupported_degree_error("horizontal projection covers degree-1 forms");
  auto impl = [alpha, om](const auto& phi, VfArgs args) {
    auto xi = (*args[0])(phi);
    auto h = value_tangent(xi - lie_drag(om(phi, xi), phi));
    const FieldVectorField* probe[] = {&h};
    return alpha.eval(phi, VfArgs(probe, 1));
  };
  FieldScalarForm out;
  out.deg = 1;
  out.e0 = impl;
  out.e1 = impl;
  return out;
}

/// Variation of a frame-pulled-back family of spacetime forms: the field
/// space derivative passes through the frame at the cost of one drag term,
///   d(u* alpha) = u*(d alpha + L_w alpha),  w the frame variation.
/// This statement moves the form slot; it is not the tangent transport rule,
/// and conflating the two is the classic mistake this residual guards.
template <class A>
double pullback_variation_residual(const Dressing& u, A&& alpha, const Fields& phi,
                                   const Fields& xi) {
  auto lifted = dual_lift(phi, xi);
  auto along = alpha(lifted);
  auto lhs = b_channel(pullback(u.map(lifted), along));
  auto w = dressing_variation(u.map, phi, xi);
  auto rhs = pullback(u.map(phi), b_channel(along) + lie_derivative(w, alpha(phi)));
  return detail::form_gap(lhs, rhs);
}

// ---------------------------------------------------------------------------
// Dressed presymplectic structure
// ---------------------------------------------------------------------------

namespace detail {

/// Slice current of the dressed potential at one configuration and tangent:
/// the kinetic pairing plus corner, drag and constraint corrections of the
/// frame variation. Spends one channel on the frame derivative.
template <class T>
FormFieldT<T> dressed_theta_current(const Lagrangian& lag, const FieldDepDiffeo& map,
                                    const FieldsT<T>& phi, const FieldsT<T>& xi) {
  auto w = dressing_variation(map, phi, xi);
  auto inner = lag.theta(phi, xi);
  if (lag.schema()->grid.dim() == 2)
    inner = inner + exterior_d(lag.theta_contraction(phi, w));
  return inner + interior(w, lag.lagrangian_form(phi)) - lag.eq_contraction(phi, w);
}

}  // namespace detail

/// The dressed slice potential as a 1-form on configuration space, by the
/// closed formula: the corrected current integrated over the slice itself.
/// Equals the preimage-slice integral of the pairing at the dressed data.
inline FieldScalarForm dressed_potential_form(const Lagrangian& lag, const Dressing& u,
                                              const Slice& sigma) {
  auto impl = [lag, map = u.map, sigma](const auto& phi, VfArgs args) {
    return integrate_slice(detail::dressed_theta_current(lag, map, phi, (*args[0])(phi)), sigma);
  };
  FieldScalarForm out;
  out.deg = 1;
  out.e0 = impl;
  out.e1 = impl;
  return out;
}

/// Invariance of the dressed potential across a frame change of the input.
/// The group action carries the slice along with the configuration, so the
/// transported evaluation meets its slice on the preimage; holding the slice
/// fixed instead would leak the flux of the current between the two loci.
inline double dressed_potential_invariance(const Lagrangian& lag, const Dressing& u,
                                           const FieldDepDiffeo& Psi, const Fields& phi,
                                           const Fields& xi, const Slice& sigma) {
  double base = integrate_slice(detail::dressed_theta_current(lag, u.map, phi, xi), sigma);
  auto psi = Psi(phi);
  auto moved = pullback(psi, phi);
  auto moved_xi = vertical_pushforward_at(Psi, phi, xi);
  double lhs = integrate_slice_preimage(
      detail::dressed_theta_current(lag, u.map, moved, moved_xi), psi, sigma);
  return std::abs(lhs - base);
}

struct DressedReport {
  double density = 0;        // frame route vs dressed-variable route for the density
  double field_eq = 0;       // generic vs closed formula for the field equations
  double theta_slice = 0;    // preimage route vs closed slice formula for the potential
  double two_form = 0;       // closed slice formula vs d of the dressed potential
  double variational = 0;    // windowed action variation with the bulk drag term
  double boundary_flux = 0;  // same variation with the drag routed through the boundary
  double dressed_eq_norm = 0;  // field equations evaluated on the dressed configuration
};

/// Dressed structure over a slice and a window. Every entry but the last is
/// the gap of a dual route and should sit at the interpolation floor;
/// dressed_eq_norm instead reports solution persistence and is only small
/// when phi itself solves the field equations.
inline DressedReport dressed_presymplectic(const Lagrangian& lag, const Dressing& u,
                                           const Fields& phi, const Fields& xi1,
                                           const Fields& xi2, const Slice& sigma,
                                           const Region& window) {
  DressedReport r;
  r.density = vt_density_residual(lag, u.map, phi);
  r.field_eq = vt_field_eq_residual(lag, u.map, phi, xi1);
  r.theta_slice = vt_theta_slice_residual(lag, u.map, phi, xi1, sigma);

  Diffeo uphi = u.map(phi);
  Fields moved = pullback(uphi, phi);
  {
    auto pot = dressed_potential_form(lag, u, sigma);
    auto p1 = value_tangent(xi1);
    auto p2 = value_tangent(xi2);
    double dual = field_d(pot)(phi, {&p1, &p2});

    // Closed route. The slice potential carries the frame with it, so its
    // derivative sees the fixed-slice corner/constraint decomposition plus
    // the transport of the kinetic pairing by the frame variation. Omitting
    // the transport leaves a first-order gap that survives refinement.
    auto w1 = dressing_variation(u.map, phi, xi1);
    auto w2 = dressing_variation(u.map, phi, xi2);
    auto lift1 = dual_lift(phi, xi1);
    auto lift2 = dual_lift(phi, xi2);
    auto w2_at1 = dressing_variation(u.map, lift1, lift_to<D1>(xi2));
    auto w1_at2 = dressing_variation(u.map, lift2, lift_to<D1>(xi1));

    double direct =
        integrate_slice(detail::theta_two_form_integrand(lag, phi, xi1, xi2), sigma);
    if (lag.schema()->grid.dim() == 2) {
      auto corner = b_channel(lag.theta_contraction(lift1, w2_at1)) -
                    b_channel(lag.theta_contraction(lift2, w1_at2));
      corner = corner + interior(w1, lag.theta(phi, xi2)) - interior(w2, lag.theta(phi, xi1));
      corner = corner + lie_derivative(w1, lag.theta_contraction(phi, w2)) -
               lie_derivative(w2, lag.theta_contraction(phi, w1));
      corner = corner + interior(w1, interior(w2, lag.lagrangian_form(phi)));
      direct += boundary_integrate_slice(corner, sigma);
    }
    auto bulk = b_channel(lag.eq_contraction(lift1, w2_at1)) -
                b_channel(lag.eq_contraction(lift2, w1_at2));
    bulk = bulk + interior(w1, lag.field_eq(phi, xi2)) - interior(w2, lag.field_eq(phi, xi1));
    auto transport = interior(w2, exterior_d(lag.theta(phi, xi1))) -
                     interior(w1, exterior_d(lag.theta(phi, xi2))) +
                     interior(b_channel(w2_at1) - b_channel(w1_at2), lag.lagrangian_form(phi));
    direct += integrate_slice(transport - bulk, sigma);
    r.two_form = std::abs(direct - dual);
  }
  {
    auto vxi = vertical_pushforward_at(u.map, phi, xi1);
    auto w = dressing_variation(u.map, phi, xi1);
    auto form = lag.field_eq(moved, vxi) + exterior_d(lag.theta(moved, vxi));
    double lhs = integrate_preimage(form, uphi, window);
    double ds = integrate(b_channel(lag.lagrangian_form(dual_lift(phi, xi1))), window);
    double drag = integrate(lie_derivative(w, lag.lagrangian_form(phi)), window);
    double flux = boundary_integrate(interior(w, lag.lagrangian_form(phi)), window);
    r.variational = std::abs(lhs - ds - drag);
    r.boundary_flux = std::abs(lhs - ds - flux);
  }
  r.dressed_eq_norm = lag.eq_norm(dress_field(phi, u));
  return r;
}

/// A window boundary seen through the frame is group-independent: computed
/// from transformed data at transported points it lands on the same locus.
/// Compared pointwise with periodic distance.
inline double dressed_boundary_gap(const Dressing& u, const Fields& phi, const Diffeo& psi,
                                   const Region& window, int samples = 48) {
  if (window.kind == Region::full) return 0.0;
  const PeriodicGrid& g = phi.grid();
  Diffeo u1 = u.map(phi);
  Diffeo u2 = u.map(pullback(psi, phi));
  const Diffeo& back1 = u1.inverse();
  const Diffeo& back2 = u2.inverse();
  const Diffeo& psi_back = psi.inverse();
  double worst = 0;
  auto probe = [&](PointT<double> p) {
    auto n1 = back1.apply(p);
    auto n2 = back2.apply(psi_back.apply(p));
    for (int d = 0; d < g.dim(); ++d)
      worst = std::max(worst, std::abs(std::remainder(n1[d] - n2[d], two_pi)));
  };
  if (g.dim() == 1) {
    probe({window.a, 0.0});
    probe({window.b, 0.0});
  } else {
    for (int k = 0; k < samples; ++k) {
      double x = two_pi * k / samples;
      probe({x, window.a});
      probe({x, window.b});
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Reference-side reparametrization
// ---------------------------------------------------------------------------

/// u' = u . f, with f a reparametrization of the reference side, possibly
/// depending on the dressed configuration (which is what keeps u'
/// equivariant).
inline Dressing reparametrize(const Dressing& u, const FieldDepDiffeo& f) {
  Dressing out;
  out.map = FieldDepDiffeo::make([base = u.map, f](const auto& conf) {
    auto up = base(conf);
    return compose(up, f(pullback(up, conf)));
  });
  return out;
}

inline Dressing reparametrize(const Dressing& u, const Diffeo& f) {
  return reparametrize(u, FieldDepDiffeo::constant(f));
}

/// Connection shift generator of a reparametrization at one probe: the
/// reference-side variation conjugated to spacetime through the frame.
/// Field-independent f gives exactly zero.
inline VectorFieldM frame_shift_generator(const Dressing& u, const FieldDepDiffeo& f,
                                          const Fields& phi, const Fields& xi) {
  auto wN = dressing_variation(f, dress_field(phi, u), dress_basis_1form(phi, u, xi));
  Diffeo up = u.map(phi);
  return -conjugate_vf(up.inverse(), wN);
}

struct FrameShiftReport {
  double closure = 0;        // shifted connection minus base connection minus generator
  double horizontality = 0;  // generator on a vertical tangent
  double equivariance = 0;   // transport law of the generator under a fixed map
  double potential_shift = 0;  // dressed potential shifts by minus the generator pairing
};

/// Affine change of the frame connection under u -> u . f, verified on
/// probes: the shift is tensorial (horizontal and equivariant) and moves the
/// dressed potential by minus its pairing with the shift's vertical lift.
inline FrameShiftReport connection_shift_suite(const Lagrangian& lag, const Dressing& u,
                                               const FieldDepDiffeo& f, const Fields& phi,
                                               const Fields& xi, const VectorFieldM& X,
                                               const Diffeo& psi, const Slice& sigma) {
  FrameShiftReport r;
  Dressing u2 = reparametrize(u, f);
  auto om1 = flat_connection(u);
  auto om2 = flat_connection(u2);
  auto beta = frame_shift_generator(u, f, phi, xi);
  r.closure = (om2(phi, xi) - om1(phi, xi) - beta).max_abs();
  r.horizontality = frame_shift_generator(u, f, phi, lie_drag(X, phi)).max_abs();
  auto beta_moved = frame_shift_generator(u, f, pullback(psi, phi), pullback_tangent(psi, xi));
  r.equivariance = (beta_moved - conjugate_vf(psi, beta)).max_abs();
  auto pot1 = dressed_potential_form(lag, u, sigma);
  auto pot2 = dressed_potential_form(lag, u2, sigma);
  auto bare = presymplectic_potential(lag, sigma);
  auto probe = value_tangent(xi);
  auto vert = value_tangent(lie_drag(beta, phi));
  r.potential_shift = std::abs(pot2(phi, {&probe}) - pot1(phi, {&probe}) + bare(phi, {&vert}));
  return r;
}

// ---------------------------------------------------------------------------
// Residual action on the reference side
// ---------------------------------------------------------------------------

/// The reference-side compensator of one group element: the map C closing
/// u(psi*phi) = psi^{-1} . u(phi) . C, read off as u(phi)^{-1} . psi . u(psi*phi).
inline Diffeo residual_compensator(const Dressing& u, const Fields& phi, const Diffeo& psi) {
  Diffeo u1 = u.map(phi);
  Diffeo u2 = u.map(pullback(psi, phi));
  return compose(u1.inverse(), compose(psi, u2));
}

enum class ResidualLaw { eliminated, conjugation, cocycle };

inline const char* residual_law_label(ResidualLaw law) {
  switch (law) {
    case ResidualLaw::eliminated:
      return "complete elimination; residual freedom = reference reparametrizations";
    case ResidualLaw::conjugation:
      return "conjugation law; dressed data transform tensorially under the subgroup";
    case ResidualLaw::cocycle:
      break;
  }
  return "twisted law; compensator follows the composition cocycle";
}

struct ResidualProbe {
  ResidualLaw law = ResidualLaw::cocycle;
  double eliminated_gap = 0;   // sup distance of the compensator from the identity
  double conjugation_gap = 0;  // sup distance of the compensator from the sample
  double cocycle_gap = 0;      // composition-law consistency of the compensator
};

/// Scan a sampled subgroup: a compensator pinned at the identity means the
/// subgroup is fully eliminated, a compensator tracking the sample itself
/// means dressed data transform by conjugation, and anything else obeys the
/// twisted composition law, which is verified on consecutive sample pairs.
inline ResidualProbe classify_residual(const Dressing& u, const Fields& phi,
                                       const std::vector<Diffeo>& subgroup, double tol = 1e-6) {
  if (subgroup.empty()) throw config_error("residual classification needs probe maps");
  ResidualProbe p;
  Diffeo id = Diffeo::identity(phi.grid());
  for (const auto& psi : subgroup) {
    Diffeo c = residual_compensator(u, phi, psi);
    p.eliminated_gap = std::max(p.eliminated_gap, diffeo_distance(c, id));
    p.conjugation_gap = std::max(p.conjugation_gap, diffeo_distance(c, psi));
  }
  for (size_t k = 0; k + 1 < subgroup.size(); ++k) {
    const Diffeo& outer = subgroup[k];
    const Diffeo& inner = subgroup[k + 1];
    Diffeo lhs = residual_compensator(u, phi, compose(outer, inner));
    Diffeo rhs = compose(residual_compensator(u, phi, outer),
                         residual_compensator(u, pullback(outer, phi), inner));
    p.cocycle_gap = std::max(p.cocycle_gap, diffeo_distance(lhs, rhs));
  }
  if (p.eliminated_gap <= tol)
    p.law = ResidualLaw::eliminated;
  else if (p.conjugation_gap <= tol)
    p.law = ResidualLaw::conjugation;
  else
    p.law = ResidualLaw::cocycle;
  return p;
}

struct ResidualReport {
  ResidualProbe probe;
  double reparam_tangent = 0;   // closed tangent formula under the reparametrization
  double bracket_relation = 0;  // charge bracket identity on the dressed data
  double zero_charge = 0;       // charge of the zero generator
};

/// Residual structure on dressed data with the bare formulas: classify what
/// is left of the group, then run the tangent rule for a reference-side
/// reparametrization and the charge algebra over a slice in dressed
/// coordinates. The charge machinery is reused verbatim, which is the point.
inline ResidualReport residual_suite(const Lagrangian& lag, const Dressing& u, const Fields& phi,
                                     const std::vector<Diffeo>& subgroup,
                                     const FieldDepDiffeo& reparam, const Fields& xi,
                                     const VectorFieldM& X, const VectorFieldM& Y,
                                     const Slice& sigma, GammaChoice gc = GammaChoice::zero) {
  ResidualReport r;
  r.probe = classify_residual(u, phi, subgroup);
  Fields phiu = dress_field(phi, u);
  Fields xiu = dress_basis_1form(phi, u, xi);
  r.reparam_tangent = reframed_tangent_residual(reparam, phiu, xiu);
  r.bracket_relation = bracket_relation_residual(lag, phiu, X, Y, sigma, gc);
  r.zero_charge = std::abs(noether_charge(lag, phiu, VectorFieldM(phi.grid()), sigma, gc));
  return r;
}

}  // namespace covphase
