#pragma once
/// Covariant phase space on top of a Lagrangian. Currents and charges of
/// spacetime generators, the presymplectic potential and form attached to a
/// slice, charge brackets with their corner cocycles, the anomaly cocycle of
/// a window, and the closed formulas for how all of this transforms under
/// field-dependent frame changes.
///
/// Degree bookkeeping: currents are (dim-1)-forms, charge corner densities
/// are (dim-2)-forms, so on the circle every corner quantity is identically
/// absent and the helpers below return zero there. The optional corner piece
/// gamma = -i_X ell is tied to the Lagrangian's boundary density; requesting
/// it without one is a configuration error.

#include "covphase/lagrangian.hpp"

namespace covphase {

namespace detail {

template <class F>
struct field_scalar_impl;
template <class T>
struct field_scalar_impl<FieldsT<T>> {
  using type = T;
};
template <class F>
using field_scalar = typename field_scalar_impl<std::decay_t<F>>::type;

/// Lift a configuration one dual level with a zero derivative channel.
template <class T>
FieldsT<Dual<T>> const_lift(const FieldsT<T>& v) {
  return dual_lift(v, FieldsT<T>(v.schema));
}

template <class T>
double form_gap(const FormFieldT<T>& a, const FormFieldT<T>& b) {
  double m = 0;
  for (size_t c = 0; c < a.comp.size(); ++c) m = std::max(m, (a.comp[c] - b.comp[c]).max_abs());
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Corner ambiguity
// ---------------------------------------------------------------------------

enum class GammaChoice { zero, boundary };

inline void check_gamma(const Lagrangian& lag, GammaChoice gc) {
  if (gc == GammaChoice::boundary && !lag.has_boundary_term())
    throw config_error("corner choice 'boundary' needs a boundary density on the Lagrangian");
}

/// gamma = -i_X ell, the corner density induced by the boundary term. One
/// degree below theta, so it exists only on the torus; elsewhere, and for the
/// zero choice, this is the zero scalar.
template <class T>
FormFieldT<T> corner_gamma(const Lagrangian& lag, const FieldsT<T>& phi,
                           const VectorFieldMT<T>& X, GammaChoice gc) {
  check_gamma(lag, gc);
  const PeriodicGrid& g = lag.schema()->grid;
  if (gc == GammaChoice::zero || g.dim() != 2) return FormFieldT<T>(g, 0);
  return -interior(X, lag.boundary_form(phi));
}

// ---------------------------------------------------------------------------
// Currents
// ---------------------------------------------------------------------------

/// Current of a generator through the momentum route:
///   J(X) = theta(phi, L_X phi) - i_X L - d gamma.
template <class T>
FormFieldT<T> noether_current(const Lagrangian& lag, const FieldsT<T>& phi,
                              const VectorFieldMT<T>& X, GammaChoice gc = GammaChoice::zero) {
  check_gamma(lag, gc);
  const PeriodicGrid& g = lag.schema()->grid;
  auto out = lag.theta(phi, lie_drag(X, phi)) - interior(X, lag.lagrangian_form(phi));
  if (gc == GammaChoice::boundary && g.dim() == 2)
    out = out - exterior_d(corner_gamma(lag, phi, X, gc));
  return out;
}

/// The same current assembled from an exact piece and the field equations:
///   J(X) = d( theta(phi, i_X phi) - gamma ) - E(i_X phi).
/// On the circle the exact piece sits in negative degree and drops out.
template <class T>
FormFieldT<T> noether_current_exact_form(const Lagrangian& lag, const FieldsT<T>& phi,
                                         const VectorFieldMT<T>& X,
                                         GammaChoice gc = GammaChoice::zero) {
  check_gamma(lag, gc);
  const PeriodicGrid& g = lag.schema()->grid;
  if (g.dim() == 1) return -lag.eq_contraction(phi, X);
  auto corner = lag.theta_contraction(phi, X) - corner_gamma(lag, phi, X, gc);
  return exterior_d(corner) - lag.eq_contraction(phi, X);
}

/// Pointwise gap between the two current routes. The corner piece appears in
/// both, so the comparison is corner-independent.
inline double current_split_residual(const Lagrangian& lag, const Fields& phi,
                                     const VectorFieldM& X) {
  return detail::form_gap(noether_current(lag, phi, X),
                          noether_current_exact_form(lag, phi, X));
}

/// Conservation defect: dJ(X) + E(phi, L_X phi), identically zero as a
/// spacetime form, on or off the solution set.
inline double current_conservation_residual(const Lagrangian& lag, const Fields& phi,
                                            const VectorFieldM& X,
                                            GammaChoice gc = GammaChoice::zero) {
  auto dj = exterior_d(noether_current(lag, phi, X, gc));
  return detail::form_gap(dj, -lag.field_eq(phi, lie_drag(X, phi)));
}

// ---------------------------------------------------------------------------
// Charges
// ---------------------------------------------------------------------------

/// Charge over a slice, split into the constraint bulk and the corner flux:
///   Q(X) = boundary(theta(i_X phi) - gamma) - bulk E(i_X phi).
template <class T>
T noether_charge(const Lagrangian& lag, const FieldsT<T>& phi, const VectorFieldMT<T>& X,
                 const Slice& sigma, GammaChoice gc = GammaChoice::zero) {
  check_gamma(lag, gc);
  const PeriodicGrid& g = lag.schema()->grid;
  T q = -integrate_slice(lag.eq_contraction(phi, X), sigma);
  if (g.dim() == 2) {
    auto corner = lag.theta_contraction(phi, X) - corner_gamma(lag, phi, X, gc);
    q = q + boundary_integrate_slice(corner, sigma);
  }
  return q;
}

struct ChargeReport {
  double bulk = 0;    // -integral of E(i_X phi) over the slice
  double corner = 0;  // im/export through the slice boundary
  double total = 0;
};

inline ChargeReport charge_report(const Lagrangian& lag, const Fields& phi,
                                  const VectorFieldM& X, const Slice& sigma,
                                  GammaChoice gc = GammaChoice::zero) {
  check_gamma(lag, gc);
  ChargeReport r;
  r.bulk = -integrate_slice(lag.eq_contraction(phi, X), sigma);
  if (lag.schema()->grid.dim() == 2) {
    auto corner = lag.theta_contraction(phi, X) - corner_gamma(lag, phi, X, gc);
    r.corner = boundary_integrate_slice(corner, sigma);
  }
  r.total = r.bulk + r.corner;
  return r;
}

/// Charge as a scalar functional on field space, so the field-space exterior
/// derivative applies to it.
inline FieldScalarForm charge_functional(const Lagrangian& lag, const VectorFieldM& X,
                                         const Slice& sigma, GammaChoice gc = GammaChoice::zero) {
  check_gamma(lag, gc);
  return FieldScalarForm::make(0, [lag, X, sigma, gc](const auto& phi, VfArgs) {
    using T = detail::field_scalar<decltype(phi)>;
    return noether_charge(lag, phi, lift_to<T>(X), sigma, gc);
  });
}

// ---------------------------------------------------------------------------
// Presymplectic potential and form
// ---------------------------------------------------------------------------

/// theta_Sigma, the slice integral of the kinetic pairing, as a one-form on
/// field space.
inline FieldScalarForm presymplectic_potential(const Lagrangian& lag, const Slice& sigma) {
  return FieldScalarForm::make(1, [lag, sigma](const auto& phi, VfArgs args) {
    auto xi = (*args[0])(phi);
    return integrate_slice(lag.theta(phi, xi), sigma);
  });
}

/// theta_Sigma shifted by the exact one-form d of the slice boundary
/// functional. The shift moves the potential but cancels in its exterior
/// derivative; the evaluator spends one dual level on the shift.
inline FieldScalarForm shifted_presymplectic_potential(const Lagrangian& lag,
                                                       const Slice& sigma) {
  if (!lag.has_boundary_term())
    throw config_error("shifted potential needs a boundary density on the Lagrangian");
  auto impl = [lag, sigma](const auto& phi, VfArgs args) {
    using T = detail::field_scalar<decltype(phi)>;
    auto xi = (*args[0])(phi);
    T base = integrate_slice(lag.theta(phi, xi), sigma);
    auto shift = integrate_slice(lag.boundary_form(dual_lift(phi, xi)), sigma);
    return base + b_channel(shift);
  };
  FieldScalarForm out;
  out.deg = 1;
  out.e0 = impl;
  out.e1 = impl;
  return out;
}

/// Theta_Sigma = d theta_Sigma.
inline FieldScalarForm presymplectic_form(const Lagrangian& lag, const Slice& sigma) {
  return field_d(presymplectic_potential(lag, sigma));
}

// ---------------------------------------------------------------------------
// Moment map
// ---------------------------------------------------------------------------

/// i_{X^v} Theta_Sigma + dQ(X) evaluated on one probe direction. For
/// solutions and generators that fix the slice boundary this is the defect of
/// Q generating the vertical flow, and it vanishes.
inline double hamiltonian_defect(const Lagrangian& lag, const Fields& phi, const VectorFieldM& X,
                                 const FieldVectorField& probe, const Slice& sigma,
                                 GammaChoice gc = GammaChoice::zero) {
  auto theta_s = presymplectic_potential(lag, sigma);
  auto big = field_d(theta_s);
  auto xv = vertical_vf(X);
  double lhs = big(phi, {&xv, &probe});
  double dq = field_d(charge_functional(lag, X, sigma, gc))(phi, {&probe});
  return lhs + dq;
}

/// Full balance behind the defect, valid off shell and for any generator:
///   i_{X^v} Theta_Sigma + dQ(X)
///     = boundary(i_X theta(probe) - d gamma(probe)) - bulk i_X E(probe).
/// Returns the absolute gap between the two sides.
inline double moment_map_residual(const Lagrangian& lag, const Fields& phi, const VectorFieldM& X,
                                  const FieldVectorField& probe, const Slice& sigma,
                                  GammaChoice gc = GammaChoice::zero) {
  check_gamma(lag, gc);
  const PeriodicGrid& g = lag.schema()->grid;
  double lhs = hamiltonian_defect(lag, phi, X, probe, sigma, gc);
  Fields xi = probe(phi);
  double flux = 0;
  if (g.dim() == 2) {
    flux += boundary_integrate_slice(interior(X, lag.theta(phi, xi)), sigma);
    if (gc == GammaChoice::boundary) {
      auto dgamma = b_channel(corner_gamma(lag, dual_lift(phi, xi), lift_to<D1>(X), gc));
      flux -= boundary_integrate_slice(dgamma, sigma);
    }
  }
  double bulk = integrate_slice(interior(X, lag.field_eq(phi, xi)), sigma);
  return std::abs(lhs - flux + bulk);
}

// ---------------------------------------------------------------------------
// Charge bracket and its corner cocycle
// ---------------------------------------------------------------------------

/// {Q_X, Q_Y} := Theta_Sigma(X^v, Y^v).
inline double charge_bracket(const Lagrangian& lag, const Fields& phi, const VectorFieldM& X,
                             const VectorFieldM& Y, const Slice& sigma) {
  auto big = presymplectic_form(lag, sigma);
  auto xv = vertical_vf(X);
  auto yv = vertical_vf(Y);
  return big(phi, {&xv, &yv});
}

inline double charge_bracket(const Lagrangian& lag, const Fields& phi, const FieldDepVectorM& X,
                             const FieldDepVectorM& Y, const Slice& sigma) {
  auto big = presymplectic_form(lag, sigma);
  auto xv = vertical_vf(X);
  auto yv = vertical_vf(Y);
  return big(phi, {&xv, &yv});
}

/// Corner two-cocycle paired with the bracket:
///   C(X,Y) = boundary[ L_X theta(i_Y phi) - L_Y theta(i_X phi) + i_X i_Y L
///                      + gamma([X,Y]) + i_Y E(i_X phi) - i_X E(i_Y phi) ].
/// Identically zero on the circle and on slices without boundary.
inline double corner_cocycle(const Lagrangian& lag, const Fields& phi, const VectorFieldM& X,
                             const VectorFieldM& Y, const Slice& sigma,
                             GammaChoice gc = GammaChoice::zero) {
  check_gamma(lag, gc);
  if (lag.schema()->grid.dim() == 1) return 0.0;
  auto tc_x = lag.theta_contraction(phi, X);
  auto tc_y = lag.theta_contraction(phi, Y);
  auto dens = lie_derivative(X, tc_y) - lie_derivative(Y, tc_x);
  dens = dens + interior(X, interior(Y, lag.lagrangian_form(phi)));
  dens = dens + corner_gamma(lag, phi, lie_bracket_diff(X, Y), gc);
  dens = dens + interior(Y, lag.eq_contraction(phi, X)) - interior(X, lag.eq_contraction(phi, Y));
  return boundary_integrate_slice(dens, sigma);
}

/// Off-shell bracket balance:
///   Theta_Sigma(X^v,Y^v) = Q([X,Y]) + C(X,Y)
///                          + bulk[ i_Y E(L_X phi) - i_X E(L_Y phi) ].
inline double bracket_relation_residual(const Lagrangian& lag, const Fields& phi,
                                        const VectorFieldM& X, const VectorFieldM& Y,
                                        const Slice& sigma, GammaChoice gc = GammaChoice::zero) {
  double lhs = charge_bracket(lag, phi, X, Y, sigma);
  double q = noether_charge(lag, phi, lie_bracket_diff(X, Y), sigma, gc);
  double c = corner_cocycle(lag, phi, X, Y, sigma, gc);
  double bulk = integrate_slice(interior(Y, lag.field_eq(phi, lie_drag(X, phi))), sigma) -
                integrate_slice(interior(X, lag.field_eq(phi, lie_drag(Y, phi))), sigma);
  return std::abs(lhs - q - c - bulk);
}

/// Cyclic sum of the corner cocycle over bracketed triples. Vanishing makes
/// Q + C a central extension; a boundary obstruction shows up otherwise.
inline double cocycle_cyclic_sum(const Lagrangian& lag, const Fields& phi, const VectorFieldM& X,
                                 const VectorFieldM& Y, const VectorFieldM& Z, const Slice& sigma,
                                 GammaChoice gc = GammaChoice::zero) {
  return corner_cocycle(lag, phi, X, lie_bracket_diff(Y, Z), sigma, gc) +
         corner_cocycle(lag, phi, Y, lie_bracket_diff(Z, X), sigma, gc) +
         corner_cocycle(lag, phi, Z, lie_bracket_diff(X, Y), sigma, gc);
}

/// Boundary flux of a generator as a one-form on field space:
///   F_X(probe) = boundary[ i_X theta(probe) - d gamma(probe) ].
/// The gamma part spends one dual level, so two levels remain for d F_X.
inline FieldScalarForm flux_form(const Lagrangian& lag, const VectorFieldM& X, const Slice& sigma,
                                 GammaChoice gc = GammaChoice::zero) {
  check_gamma(lag, gc);
  auto impl = [lag, X, sigma, gc](const auto& phi, VfArgs args) {
    using T = detail::field_scalar<decltype(phi)>;
    if (lag.schema()->grid.dim() == 1) return T{};
    auto xi = (*args[0])(phi);
    T out = boundary_integrate_slice(interior(lift_to<T>(X), lag.theta(phi, xi)), sigma);
    if (gc == GammaChoice::boundary) {
      auto dgamma = b_channel(corner_gamma(lag, dual_lift(phi, xi), lift_to<Dual<T>>(X), gc));
      out = out - boundary_integrate_slice(dgamma, sigma);
    }
    return out;
  };
  FieldScalarForm out;
  out.deg = 1;
  out.e0 = impl;
  out.e1 = impl;
  return out;
}

/// The matching obstruction: cyclic sum of d F_X evaluated on the other two
/// vertical directions. For solutions this equals the cyclic cocycle sum.
inline double cocycle_flux_obstruction(const Lagrangian& lag, const Fields& phi,
                                       const VectorFieldM& X, const VectorFieldM& Y,
                                       const VectorFieldM& Z, const Slice& sigma,
                                       GammaChoice gc = GammaChoice::zero) {
  auto xv = vertical_vf(X);
  auto yv = vertical_vf(Y);
  auto zv = vertical_vf(Z);
  auto fx = field_d(flux_form(lag, X, sigma, gc));
  auto fy = field_d(flux_form(lag, Y, sigma, gc));
  auto fz = field_d(flux_form(lag, Z, sigma, gc));
  return fx(phi, {&yv, &zv}) + fy(phi, {&zv, &xv}) + fz(phi, {&xv, &yv});
}

// ---------------------------------------------------------------------------
// Field-dependent generators
// ---------------------------------------------------------------------------

/// Cocycle of the extended bracket. The corner part is the pointwise cocycle
/// at the current generator values; the derivative terms of the extended
/// bracket feed back through a charge:
///   Cbar(X,Y) = C(X(phi), Y(phi)) - Q( X^v(Y) - Y^v(X) ).
inline double extended_cocycle(const Lagrangian& lag, const Fields& phi, const FieldDepVectorM& X,
                               const FieldDepVectorM& Y, const Slice& sigma,
                               GammaChoice gc = GammaChoice::zero) {
  VectorFieldM xp = X(phi);
  VectorFieldM yp = Y(phi);
  double c = corner_cocycle(lag, phi, xp, yp, sigma, gc);
  auto dy = b_channel(Y(dual_lift(phi, lie_drag(xp, phi))));
  auto dx = b_channel(X(dual_lift(phi, lie_drag(yp, phi))));
  return c - noether_charge(lag, phi, dy - dx, sigma, gc);
}

/// Off-shell balance for field-dependent generators, with the extended
/// bracket in place of the pointwise one.
inline double extended_bracket_relation_residual(const Lagrangian& lag, const Fields& phi,
                                                 const FieldDepVectorM& X,
                                                 const FieldDepVectorM& Y, const Slice& sigma,
                                                 GammaChoice gc = GammaChoice::zero) {
  double lhs = charge_bracket(lag, phi, X, Y, sigma);
  double q = noether_charge(lag, phi, extended_bracket(X, Y)(phi), sigma, gc);
  double cbar = extended_cocycle(lag, phi, X, Y, sigma, gc);
  VectorFieldM xp = X(phi);
  VectorFieldM yp = Y(phi);
  double bulk = integrate_slice(interior(yp, lag.field_eq(phi, lie_drag(xp, phi))), sigma) -
                integrate_slice(interior(xp, lag.field_eq(phi, lie_drag(yp, phi))), sigma);
  return std::abs(lhs - q - cbar - bulk);
}

// ---------------------------------------------------------------------------
// Anomaly cocycle of a window
// ---------------------------------------------------------------------------

enum class AnomalyConvention { fixed_region, comoving };

/// Action difference over a window when the configuration is pulled back.
/// With the comoving convention the window is dragged along, so the value
/// measures nothing but the covariance defect of the density.
inline double anomaly_cocycle(const Lagrangian& lag, const Fields& phi, const Diffeo& psi,
                              const Region& U,
                              AnomalyConvention conv = AnomalyConvention::fixed_region) {
  auto moved = lag.lagrangian_form(pullback(psi, phi));
  double base = integrate(lag.lagrangian_form(phi), U);
  if (conv == AnomalyConvention::fixed_region) return integrate(moved, U) - base;
  return integrate_preimage(moved, psi, U) - base;
}

/// Composition law of the fixed-region cocycle:
///   c(phi; psi' . psi) = c(phi; psi') + c(phi pulled by psi'; psi).
inline double anomaly_law_residual(const Lagrangian& lag, const Fields& phi,
                                   const Diffeo& psi_prime, const Diffeo& psi, const Region& U) {
  double lhs = anomaly_cocycle(lag, phi, compose(psi_prime, psi), U);
  double rhs = anomaly_cocycle(lag, phi, psi_prime, U) +
               anomaly_cocycle(lag, pullback(psi_prime, phi), psi, U);
  return std::abs(lhs - rhs);
}

// ---------------------------------------------------------------------------
// Vertical transformations
// ---------------------------------------------------------------------------

/// Variation of a field-dependent frame along a tangent, transported back to
/// the target: w(xi) = d psi(xi) composed with psi^{-1}, a spacetime vector
/// field. Spends one dual level on the frame derivative.
template <class T>
VectorFieldMT<T> dressing_variation(const FieldDepDiffeo& Psi, const FieldsT<T>& phi,
                                    const FieldsT<T>& xi) {
  auto lifted = Psi(dual_lift(phi, xi));
  auto base = Psi(phi);
  const PeriodicGrid& g = phi.grid();
  std::vector<GridFunctionT<T>> comp;
  comp.reserve(g.dim());
  for (int m = 0; m < g.dim(); ++m) {
    FormFieldT<T> f(g, 0, {b_channel(lifted.displacement()[m])});
    comp.push_back(pullback(base.inverse(), f).comp[0]);
  }
  return VectorFieldMT<T>(g, std::move(comp));
}

/// The transformed configuration: pullback of phi along its own frame.
inline Fields vertical_transform(const FieldDepDiffeo& Psi, const Fields& phi) {
  return pullback(Psi(phi), phi);
}

/// The density transforms by pure pullback, with no derivative terms.
inline double vt_density_residual(const Lagrangian& lag, const FieldDepDiffeo& Psi,
                                  const Fields& phi) {
  auto psi = Psi(phi);
  return detail::form_gap(pullback(psi, lag.lagrangian_form(phi)),
                          lag.lagrangian_form(pullback(psi, phi)));
}

/// Field equations pick up one derivative term from the frame:
///   E(xi) at the transformed point = pullback of E(xi) + d E-contraction(w).
inline double vt_field_eq_residual(const Lagrangian& lag, const FieldDepDiffeo& Psi,
                                   const Fields& phi, const Fields& xi) {
  auto psi = Psi(phi);
  auto w = dressing_variation(Psi, phi, xi);
  auto generic = lag.field_eq(pullback(psi, phi), vertical_pushforward_at(Psi, phi, xi));
  auto closed = pullback(psi, lag.field_eq(phi, xi) + exterior_d(lag.eq_contraction(phi, w)));
  return detail::form_gap(generic, closed);
}

/// The kinetic pairing picks up three terms from the frame:
///   theta(xi) at the transformed point
///     = pullback of theta(xi) + d theta(i_w phi) + i_w L - E(i_w phi).
/// The exact corner term is empty on the circle.
inline double vt_theta_residual(const Lagrangian& lag, const FieldDepDiffeo& Psi,
                                const Fields& phi, const Fields& xi) {
  auto psi = Psi(phi);
  auto w = dressing_variation(Psi, phi, xi);
  auto generic = lag.theta(pullback(psi, phi), vertical_pushforward_at(Psi, phi, xi));
  auto inner = lag.theta(phi, xi);
  if (lag.schema()->grid.dim() == 2)
    inner = inner + exterior_d(lag.theta_contraction(phi, w));
  inner = inner + interior(w, lag.lagrangian_form(phi)) - lag.eq_contraction(phi, w);
  return detail::form_gap(generic, pullback(psi, inner));
}

/// Slice version of the same statement: the transformed potential integrated
/// over the frame preimage of the slice equals the corrected integrand over
/// the slice itself.
inline double vt_theta_slice_residual(const Lagrangian& lag, const FieldDepDiffeo& Psi,
                                      const Fields& phi, const Fields& xi, const Slice& sigma) {
  auto psi = Psi(phi);
  auto w = dressing_variation(Psi, phi, xi);
  auto generic = lag.theta(pullback(psi, phi), vertical_pushforward_at(Psi, phi, xi));
  double lhs = integrate_slice_preimage(generic, psi, sigma);
  auto inner = lag.theta(phi, xi);
  if (lag.schema()->grid.dim() == 2)
    inner = inner + exterior_d(lag.theta_contraction(phi, w));
  inner = inner + interior(w, lag.lagrangian_form(phi)) - lag.eq_contraction(phi, w);
  return std::abs(lhs - integrate_slice(inner, sigma));
}

namespace detail {

/// Pointwise integrand of Theta on two tangent value assignments, evaluated
/// through constant extensions; as a two-form this is extension independent.
template <class T>
FormFieldT<T> theta_two_form_integrand(const Lagrangian& lag, const FieldsT<T>& phi,
                                       const FieldsT<T>& v1, const FieldsT<T>& v2) {
  auto a = b_channel(lag.theta(dual_lift(phi, v1), const_lift(v2)));
  auto b = b_channel(lag.theta(dual_lift(phi, v2), const_lift(v1)));
  return a - b;
}

}  // namespace detail

struct SliceTwoFormTerms {
  double transformed = 0;  // integrand at the transformed point, over the preimage slice
  double base = 0;         // integrand at phi, over the slice
  double boundary = 0;     // frame corrections through the slice boundary
  double bulk = 0;         // frame corrections proportional to the field equations
};

/// Decomposition of the transformed presymplectic form on two constant probe
/// tangents: transformed = base + boundary - bulk, and the bulk piece dies on
/// solutions, leaving a pure corner relation. Torus only.
inline SliceTwoFormTerms vt_presymplectic_slice_terms(const Lagrangian& lag,
                                                      const FieldDepDiffeo& Psi,
                                                      const Fields& phi, const Fields& xi1,
                                                      const Fields& xi2, const Slice& sigma) {
  const PeriodicGrid& g = lag.schema()->grid;
  if (g.dim() != 2) throw degree_error("slice two-form decomposition needs the torus");
  SliceTwoFormTerms t;
  auto psi = Psi(phi);
  auto moved = pullback(psi, phi);
  auto v1 = vertical_pushforward_at(Psi, phi, xi1);
  auto v2 = vertical_pushforward_at(Psi, phi, xi2);
  t.transformed =
      integrate_slice_preimage(detail::theta_two_form_integrand(lag, moved, v1, v2), psi, sigma);
  t.base = integrate_slice(detail::theta_two_form_integrand(lag, phi, xi1, xi2), sigma);

  auto w1 = dressing_variation(Psi, phi, xi1);
  auto w2 = dressing_variation(Psi, phi, xi2);

  // d of the corner and constraint contractions along the probes, with the
  // frame variation recomputed at the dual-lifted point.
  auto lift1 = dual_lift(phi, xi1);
  auto lift2 = dual_lift(phi, xi2);
  auto w2_at1 = dressing_variation(Psi, lift1, lift_to<D1>(xi2));
  auto w1_at2 = dressing_variation(Psi, lift2, lift_to<D1>(xi1));
  auto d_corner = b_channel(lag.theta_contraction(lift1, w2_at1)) -
                  b_channel(lag.theta_contraction(lift2, w1_at2));
  auto d_constraint = b_channel(lag.eq_contraction(lift1, w2_at1)) -
                      b_channel(lag.eq_contraction(lift2, w1_at2));

  auto corner = d_corner;
  corner = corner + interior(w1, lag.theta(phi, xi2)) - interior(w2, lag.theta(phi, xi1));
  corner = corner + lie_derivative(w1, lag.theta_contraction(phi, w2)) -
           lie_derivative(w2, lag.theta_contraction(phi, w1));
  corner = corner + interior(w1, interior(w2, lag.lagrangian_form(phi)));
  t.boundary = boundary_integrate_slice(corner, sigma);

  auto bulk = d_constraint;
  bulk = bulk + interior(w1, lag.field_eq(phi, xi2)) - interior(w2, lag.field_eq(phi, xi1));
  t.bulk = integrate_slice(bulk, sigma);
  return t;
}

/// Variation of the windowed action against the transformed fields:
///   preimage integral of E(xi) + d theta(xi) at the transformed point
///     = dS(xi) + window integral of L_w L.
inline double vt_action_residual(const Lagrangian& lag, const FieldDepDiffeo& Psi,
                                 const Fields& phi, const Fields& xi, const Region& U) {
  auto psi = Psi(phi);
  auto moved = pullback(psi, phi);
  auto vxi = vertical_pushforward_at(Psi, phi, xi);
  auto w = dressing_variation(Psi, phi, xi);
  auto form = lag.field_eq(moved, vxi) + exterior_d(lag.theta(moved, vxi));
  double lhs = integrate_preimage(form, psi, U);
  double ds = integrate(b_channel(lag.lagrangian_form(dual_lift(phi, xi))), U);
  double drag = integrate(lie_derivative(w, lag.lagrangian_form(phi)), U);
  return std::abs(lhs - ds - drag);
}

}  // namespace covphase
