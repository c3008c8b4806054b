#pragma once

// Configuration space machinery. A schema declares a list of named fields on
// one periodic grid; a configuration assigns each a value. Diffeomorphisms
// act by pullback, and infinitesimally by the Lie drag. On top of this sits a
// small exterior calculus over configuration space itself: vector fields and
// p-forms on the space of configurations, differentiated through forward
// derivative channels rather than symbolic manipulation.
//
// Derivative depth is budgeted explicitly. Every erased object carries up to
// three evaluators (plain, one derivative channel, two nested channels), and
// each application of the configuration-space exterior derivative or bracket
// consumes one level. Requests past the stored depth throw.

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "covphase/geom.hpp"
#include "covphase/rng.hpp"

namespace covphase {

// ---------------------------------------------------------------------------
// schemas and configurations
// ---------------------------------------------------------------------------

/// What a single field is: a differential form of fixed degree, or a clock,
/// a circle-valued scalar winding once along one grid axis. Clocks are stored
/// through their periodic displacement p, the full map being x^axis + p.
struct FieldKind {
  enum class Type { form, clock };
  Type type = Type::form;
  int deg = 0;   // form degree
  int axis = 0;  // winding axis of a clock

  static FieldKind form_kind(int deg) { return {Type::form, deg, 0}; }
  static FieldKind clock_kind(int axis) { return {Type::clock, 0, axis}; }
  bool is_clock() const { return type == Type::clock; }
};

struct Schema {
  struct Entry {
    std::string name;
    FieldKind kind;
  };

  PeriodicGrid grid;
  std::vector<Entry> fields;

  Schema(const PeriodicGrid& g, std::vector<Entry> f) : grid(g), fields(std::move(f)) {
    for (const auto& e : fields) {
      if (e.kind.type == FieldKind::Type::form) {
        if (e.kind.deg < 0 || e.kind.deg > grid.dim())
          throw config_error("field '" + e.name + "': form degree out of range");
      } else if (e.kind.axis < 0 || e.kind.axis >= grid.dim()) {
        throw config_error("field '" + e.name + "': clock axis out of range");
      }
      int dup = 0;
      for (const auto& o : fields)
        if (o.name == e.name) ++dup;
      if (dup > 1) throw config_error("duplicate field name '" + e.name + "'");
    }
  }

  int count() const { return int(fields.size()); }

  int index(std::string_view name) const {
    for (int i = 0; i < count(); ++i)
      if (fields[i].name == name) return i;
    throw config_error("no field named '" + std::string(name) + "'");
  }
};

using SchemaPtr = std::shared_ptr<const Schema>;

/// A configuration: one value per schema entry. Tangent vectors to
/// configuration space reuse the same shape; the tangent to a clock is the
/// plain periodic scalar perturbing its displacement.
template <class T>
struct FieldsT {
  using Scalar = T;

  SchemaPtr schema;
  std::vector<FormFieldT<T>> comp;

  explicit FieldsT(SchemaPtr s) : schema(std::move(s)) {
    comp.reserve(schema->count());
    for (const auto& e : schema->fields)
      comp.emplace_back(schema->grid, e.kind.is_clock() ? 0 : e.kind.deg);
  }

  const PeriodicGrid& grid() const { return schema->grid; }

  FormFieldT<T>& operator[](std::string_view name) { return comp[schema->index(name)]; }
  const FormFieldT<T>& operator[](std::string_view name) const { return comp[schema->index(name)]; }

  double max_abs() const {
    double m = 0;
    for (const auto& c : comp) m = std::max(m, c.max_abs());
    return m;
  }
};

using Fields = FieldsT<double>;

namespace detail {
inline void check_same_schema(const void* a, const void* b) {
  if (a != b) throw invalid_data_error("configurations built from different schemas");
}
}  // namespace detail

template <class T>
FieldsT<T> operator+(FieldsT<T> a, const FieldsT<T>& b) {
  detail::check_same_schema(a.schema.get(), b.schema.get());
  for (size_t i = 0; i < a.comp.size(); ++i) a.comp[i] = a.comp[i] + b.comp[i];
  return a;
}

template <class T>
FieldsT<T> operator-(FieldsT<T> a, const FieldsT<T>& b) {
  detail::check_same_schema(a.schema.get(), b.schema.get());
  for (size_t i = 0; i < a.comp.size(); ++i) a.comp[i] = a.comp[i] - b.comp[i];
  return a;
}

template <class T, class S>
FieldsT<T> operator*(S c, FieldsT<T> a) {
  for (auto& w : a.comp) w = c * w;
  return a;
}

// ---------------------------------------------------------------------------
// channel plumbing
// ---------------------------------------------------------------------------

/// Value-only lift of double data into a wider scalar type.
template <class T>
GridFunctionT<T> lift_to(const GridFunction& g) {
  GridFunctionT<T> out(g.grid);
  for (int i = 0; i < int(g.v.size()); ++i) out.v[i] = T(g.v[i]);
  return out;
}

template <class T>
FormFieldT<T> lift_to(const FormField& w) {
  FormFieldT<T> out(w.grid, w.deg);
  for (size_t c = 0; c < w.comp.size(); ++c) out.comp[c] = lift_to<T>(w.comp[c]);
  return out;
}

template <class T>
VectorFieldMT<T> lift_to(const VectorFieldM& X) {
  VectorFieldMT<T> out(X.grid);
  for (size_t c = 0; c < X.comp.size(); ++c) out.comp[c] = lift_to<T>(X.comp[c]);
  return out;
}

template <class T>
DiffeoT<T> lift_to(const Diffeo& psi) {
  std::vector<GridFunctionT<T>> f;
  for (const auto& c : psi.displacement()) f.push_back(lift_to<T>(c));
  return DiffeoT<T>(psi.grid(), std::move(f));
}

template <class T>
FieldsT<T> lift_to(const Fields& phi) {
  FieldsT<T> out(phi.schema);
  for (size_t i = 0; i < phi.comp.size(); ++i) out.comp[i] = lift_to<T>(phi.comp[i]);
  return out;
}

/// Attach a tangent as the derivative channel of a one-level-wider scalar.
template <class T>
FieldsT<Dual<T>> dual_lift(const FieldsT<T>& base, const FieldsT<T>& tang) {
  detail::check_same_schema(base.schema.get(), tang.schema.get());
  FieldsT<Dual<T>> out(base.schema);
  for (size_t i = 0; i < base.comp.size(); ++i)
    for (size_t c = 0; c < base.comp[i].comp.size(); ++c) {
      const auto& bv = base.comp[i].comp[c].v;
      const auto& tv = tang.comp[i].comp[c].v;
      auto& ov = out.comp[i].comp[c].v;
      for (size_t k = 0; k < bv.size(); ++k) ov[k] = Dual<T>{bv[k], tv[k]};
    }
  return out;
}

template <class T>
T b_channel(const Dual<T>& x) { return x.b; }

template <class T>
GridFunctionT<T> b_channel(const GridFunctionT<Dual<T>>& g) {
  GridFunctionT<T> out(g.grid);
  for (size_t i = 0; i < g.v.size(); ++i) out.v[i] = g.v[i].b;
  return out;
}

template <class T>
FormFieldT<T> b_channel(const FormFieldT<Dual<T>>& w) {
  FormFieldT<T> out(w.grid, w.deg);
  for (size_t c = 0; c < w.comp.size(); ++c) out.comp[c] = b_channel(w.comp[c]);
  return out;
}

template <class T>
VectorFieldMT<T> b_channel(const VectorFieldMT<Dual<T>>& X) {
  VectorFieldMT<T> out(X.grid);
  for (size_t c = 0; c < X.comp.size(); ++c) out.comp[c] = b_channel(X.comp[c]);
  return out;
}

template <class T>
FieldsT<T> b_channel(const FieldsT<Dual<T>>& f) {
  FieldsT<T> out(f.schema);
  for (size_t i = 0; i < f.comp.size(); ++i) out.comp[i] = b_channel(f.comp[i]);
  return out;
}

namespace detail {
template <class>
inline constexpr bool no_such_depth = false;
}

// ---------------------------------------------------------------------------
// the action of diffeomorphisms
// ---------------------------------------------------------------------------

/// Pullback of a whole configuration. Form fields pull back as forms; a
/// clock composes as a map, which on displacements reads f^axis + p(psi(x)).
template <class T>
FieldsT<T> pullback(const DiffeoT<T>& psi, const FieldsT<T>& phi) {
  FieldsT<T> out(phi.schema);
  for (int i = 0; i < phi.schema->count(); ++i) {
    const FieldKind& k = phi.schema->fields[i].kind;
    if (k.is_clock()) {
      FormFieldT<T> p = pullback(psi, phi.comp[i]);
      p.comp[0] = p.comp[0] + psi.displacement()[k.axis];
      out.comp[i] = std::move(p);
    } else {
      out.comp[i] = pullback(psi, phi.comp[i]);
    }
  }
  return out;
}

/// Infinitesimal pullback along a spacetime vector field. On forms this is
/// the Cartan Lie derivative; on a clock the full map contributes the unit
/// winding, giving X^axis + X(p).
template <class T>
FieldsT<T> lie_drag(const VectorFieldMT<T>& X, const FieldsT<T>& phi) {
  FieldsT<T> out(phi.schema);
  for (int i = 0; i < phi.schema->count(); ++i) {
    const FieldKind& k = phi.schema->fields[i].kind;
    if (k.is_clock()) {
      FormFieldT<T> t = interior(X, exterior_d(phi.comp[i]));
      t.comp[0] = t.comp[0] + X.comp[k.axis];
      out.comp[i] = std::move(t);
    } else {
      out.comp[i] = lie_derivative(X, phi.comp[i]);
    }
  }
  return out;
}

/// Transport of a tangent vector under a fixed map. Unlike configurations,
/// tangents move linearly in every slot: a clock perturbation lives in the
/// displacement and carries no winding shift of its own.
template <class T>
FieldsT<T> pullback_tangent(const DiffeoT<T>& psi, const FieldsT<T>& xi) {
  FieldsT<T> out(xi.schema);
  for (int i = 0; i < xi.schema->count(); ++i) out.comp[i] = pullback(psi, xi.comp[i]);
  return out;
}

// ---------------------------------------------------------------------------
// erased maps out of configuration space
// ---------------------------------------------------------------------------

/// A vector field on configuration space: assigns a tangent to every
/// configuration, evaluable at up to three derivative depths.
class FieldVectorField {
 public:
  std::function<FieldsT<double>(const FieldsT<double>&)> f0;
  std::function<FieldsT<D1>(const FieldsT<D1>&)> f1;
  std::function<FieldsT<D2>(const FieldsT<D2>&)> f2;

  FieldVectorField() = default;

  template <class F>
  static FieldVectorField make(F fn) {
    FieldVectorField out;
    out.f0 = fn;
    out.f1 = fn;
    out.f2 = fn;
    return out;
  }

  template <class T>
  FieldsT<T> operator()(const FieldsT<T>& phi) const {
    if constexpr (std::is_same_v<T, double>) {
      if (!f0) throw differentiation_error("vector field evaluator missing at depth 0");
      return f0(phi);
    } else if constexpr (std::is_same_v<T, D1>) {
      if (!f1) throw differentiation_error("vector field derivative depth exhausted");
      return f1(phi);
    } else if constexpr (std::is_same_v<T, D2>) {
      if (!f2) throw differentiation_error("vector field derivative depth exhausted");
      return f2(phi);
    } else {
      static_assert(detail::no_such_depth<T>, "derivative depth beyond budget");
    }
  }
};

/// Constant extension of one concrete tangent value. Deeper evaluations see
/// the same value with vanishing derivative channels, so forms can be probed
/// at explicit tangents; depths below the value's own are not provided.
template <class T>
FieldVectorField value_tangent(const FieldsT<T>& v) {
  FieldVectorField out;
  if constexpr (std::is_same_v<T, double>) {
    out.f0 = [v](const FieldsT<double>&) { return v; };
    out.f1 = [v](const FieldsT<D1>&) { return lift_to<D1>(v); };
    out.f2 = [v](const FieldsT<D2>&) { return lift_to<D2>(v); };
  } else if constexpr (std::is_same_v<T, D1>) {
    out.f1 = [v](const FieldsT<D1>&) { return v; };
    out.f2 = [v](const FieldsT<D2>&) { return dual_lift(v, FieldsT<D1>(v.schema)); };
  } else {
    out.f2 = [v](const FieldsT<D2>&) { return v; };
  }
  return out;
}

/// A configuration-dependent spacetime vector field (a generator whose
/// shape depends on where in configuration space it is evaluated).
class FieldDepVectorM {
 public:
  std::function<VectorFieldMT<double>(const FieldsT<double>&)> f0;
  std::function<VectorFieldMT<D1>(const FieldsT<D1>&)> f1;
  std::function<VectorFieldMT<D2>(const FieldsT<D2>&)> f2;

  FieldDepVectorM() = default;

  template <class F>
  static FieldDepVectorM make(F fn) {
    FieldDepVectorM out;
    out.f0 = fn;
    out.f1 = fn;
    out.f2 = fn;
    return out;
  }

  static FieldDepVectorM constant(const VectorFieldM& X) {
    return make([X](const auto& phi) {
      using T = typename std::decay_t<decltype(phi)>::Scalar;
      (void)phi;
      return lift_to<T>(X);
    });
  }

  template <class T>
  VectorFieldMT<T> operator()(const FieldsT<T>& phi) const {
    if constexpr (std::is_same_v<T, double>) {
      if (!f0) throw differentiation_error("generator evaluator missing at depth 0");
      return f0(phi);
    } else if constexpr (std::is_same_v<T, D1>) {
      if (!f1) throw differentiation_error("generator derivative depth exhausted");
      return f1(phi);
    } else if constexpr (std::is_same_v<T, D2>) {
      if (!f2) throw differentiation_error("generator derivative depth exhausted");
      return f2(phi);
    } else {
      static_assert(detail::no_such_depth<T>, "derivative depth beyond budget");
    }
  }
};

/// A configuration-dependent diffeomorphism (dressings, field-dependent
/// frames).
class FieldDepDiffeo {
 public:
  std::function<DiffeoT<double>(const FieldsT<double>&)> f0;
  std::function<DiffeoT<D1>(const FieldsT<D1>&)> f1;
  std::function<DiffeoT<D2>(const FieldsT<D2>&)> f2;

  FieldDepDiffeo() = default;

  template <class F>
  static FieldDepDiffeo make(F fn) {
    FieldDepDiffeo out;
    out.f0 = fn;
    out.f1 = fn;
    out.f2 = fn;
    return out;
  }

  static FieldDepDiffeo constant(const Diffeo& psi) {
    return make([psi](const auto& phi) {
      using T = typename std::decay_t<decltype(phi)>::Scalar;
      (void)phi;
      return lift_to<T>(psi);
    });
  }

  template <class T>
  DiffeoT<T> operator()(const FieldsT<T>& phi) const {
    if constexpr (std::is_same_v<T, double>) {
      if (!f0) throw differentiation_error("map evaluator missing at depth 0");
      return f0(phi);
    } else if constexpr (std::is_same_v<T, D1>) {
      if (!f1) throw differentiation_error("map derivative depth exhausted");
      return f1(phi);
    } else if constexpr (std::is_same_v<T, D2>) {
      if (!f2) throw differentiation_error("map derivative depth exhausted");
      return f2(phi);
    } else {
      static_assert(detail::no_such_depth<T>, "derivative depth beyond budget");
    }
  }
};

// ---------------------------------------------------------------------------
// vertical vector fields and brackets
// ---------------------------------------------------------------------------

/// The fundamental vector field of a fixed generator: phi -> Lie drag of phi.
inline FieldVectorField vertical_vf(const VectorFieldM& X) {
  return FieldVectorField::make([X](const auto& phi) {
    using T = typename std::decay_t<decltype(phi)>::Scalar;
    return lie_drag(lift_to<T>(X), phi);
  });
}

/// Same for a configuration-dependent generator: phi -> Lie drag along X(phi).
inline FieldVectorField vertical_vf(const FieldDepVectorM& X) {
  return FieldVectorField::make([X](const auto& phi) { return lie_drag(X(phi), phi); });
}

/// Commutator of configuration-space vector fields, computed through one
/// derivative channel; the result therefore loses one depth.
inline FieldVectorField vf_bracket(const FieldVectorField& A, const FieldVectorField& B) {
  auto impl = [A, B](const auto& phi) {
    auto dB = b_channel(B(dual_lift(phi, A(phi))));
    auto dA = b_channel(A(dual_lift(phi, B(phi))));
    return dB - dA;
  };
  FieldVectorField out;
  out.f0 = impl;
  out.f1 = impl;
  return out;
}

/// Bracket on configuration-dependent generators: the spacetime commutator
/// in the sign convention matching composition of pullbacks, plus the cross
/// variations of each generator along the other's vertical lift.
inline FieldDepVectorM extended_bracket(const FieldDepVectorM& X, const FieldDepVectorM& Y) {
  auto impl = [X, Y](const auto& phi) {
    auto Xp = X(phi);
    auto Yp = Y(phi);
    auto dY = b_channel(Y(dual_lift(phi, lie_drag(Xp, phi))));
    auto dX = b_channel(X(dual_lift(phi, lie_drag(Yp, phi))));
    return lie_bracket_diff(Xp, Yp) + dY - dX;
  };
  FieldDepVectorM out;
  out.f0 = impl;
  out.f1 = impl;
  return out;
}

// ---------------------------------------------------------------------------
// forms on configuration space
// ---------------------------------------------------------------------------

using VfArgs = std::span<const FieldVectorField* const>;

/// A p-form on configuration space with values described by VT: plain
/// numbers (VT<T> = T) or spacetime forms (VT = FormFieldT). Evaluators take
/// the base configuration and p configuration-space vector fields; only the
/// stored derivative depths are usable.
template <template <class> class VT>
struct FieldFormT {
  int deg = 0;
  std::function<VT<double>(const FieldsT<double>&, VfArgs)> e0;
  std::function<VT<D1>(const FieldsT<D1>&, VfArgs)> e1;
  std::function<VT<D2>(const FieldsT<D2>&, VfArgs)> e2;

  template <class F>
  static FieldFormT make(int deg, F fn) {
    FieldFormT out;
    out.deg = deg;
    out.e0 = fn;
    out.e1 = fn;
    out.e2 = fn;
    return out;
  }

  template <class T>
  VT<T> eval(const FieldsT<T>& phi, VfArgs args) const {
    if (int(args.size()) != deg) throw degree_error("argument count does not match form degree");
    if constexpr (std::is_same_v<T, double>) {
      if (!e0) throw differentiation_error("form evaluator missing at depth 0");
      return e0(phi, args);
    } else if constexpr (std::is_same_v<T, D1>) {
      if (!e1) throw differentiation_error("form derivative depth exhausted");
      return e1(phi, args);
    } else if constexpr (std::is_same_v<T, D2>) {
      if (!e2) throw differentiation_error("form derivative depth exhausted");
      return e2(phi, args);
    } else {
      static_assert(detail::no_such_depth<T>, "derivative depth beyond budget");
    }
  }

  template <class T>
  VT<T> operator()(const FieldsT<T>& phi, std::initializer_list<const FieldVectorField*> args) const {
    std::vector<const FieldVectorField*> a(args);
    return eval(phi, VfArgs(a));
  }

  template <class T>
  VT<T> operator()(const FieldsT<T>& phi) const {
    return eval(phi, VfArgs{});
  }
};

template <class T>
using ScalarValue = T;

using FieldScalarForm = FieldFormT<ScalarValue>;  // number-valued
using FieldLocalForm = FieldFormT<FormFieldT>;    // spacetime-form-valued

namespace detail {

/// Derivative of phi -> alpha(phi; rest) along the vector field xi.
template <template <class> class VT, class T>
VT<T> arg_derivative(const FieldFormT<VT>& alpha, const FieldVectorField& xi,
                     const FieldsT<T>& phi, VfArgs rest) {
  return b_channel(alpha.eval(dual_lift(phi, xi(phi)), rest));
}

template <template <class> class VT, class T>
VT<T> koszul_eval(const FieldFormT<VT>& alpha, const FieldsT<T>& phi, VfArgs args) {
  std::optional<VT<T>> acc;
  auto add = [&acc](VT<T> term, int sign) {
    if (!acc)
      acc = sign > 0 ? std::move(term) : -std::move(term);
    else
      acc = sign > 0 ? std::move(*acc) + term : std::move(*acc) - term;
  };
  int n = int(args.size());
  std::vector<const FieldVectorField*> rest;
  for (int i = 0; i < n; ++i) {
    rest.clear();
    for (int k = 0; k < n; ++k)
      if (k != i) rest.push_back(args[k]);
    add(arg_derivative(alpha, *args[i], phi, VfArgs(rest)), (i % 2 == 0) ? +1 : -1);
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      FieldVectorField bij = vf_bracket(*args[i], *args[j]);
      rest.clear();
      rest.push_back(&bij);
      for (int k = 0; k < n; ++k)
        if (k != i && k != j) rest.push_back(args[k]);
      add(alpha.eval(phi, VfArgs(rest)), ((i + j) % 2 == 0) ? +1 : -1);
    }
  return std::move(*acc);
}

}  // namespace detail

/// Exterior derivative on configuration space, by the Koszul formula. Costs
/// one derivative depth; applying it twice to a fully evaluable form still
/// leaves a plain evaluation, which is how the nilpotency checks run.
template <template <class> class VT>
FieldFormT<VT> field_d(const FieldFormT<VT>& alpha) {
  if (alpha.deg >= 3) throw degree_error("exterior derivative supported through degree 2");
  FieldFormT<VT> out;
  out.deg = alpha.deg + 1;
  if (alpha.e1)
    out.e0 = [alpha](const FieldsT<double>& phi, VfArgs args) {
      return detail::koszul_eval(alpha, phi, args);
    };
  if (alpha.e2)
    out.e1 = [alpha](const FieldsT<D1>& phi, VfArgs args) {
      return detail::koszul_eval(alpha, phi, args);
    };
  return out;
}

/// Interior product with a configuration-space vector field.
template <template <class> class VT>
FieldFormT<VT> field_interior(const FieldVectorField& X, const FieldFormT<VT>& alpha) {
  if (alpha.deg == 0) throw degree_error("interior product needs positive degree");
  FieldFormT<VT> out;
  out.deg = alpha.deg - 1;
  auto wrap = [&X](const auto& ev) {
    return [ev, X](const auto& phi, VfArgs args) {
      std::vector<const FieldVectorField*> full;
      full.reserve(args.size() + 1);
      full.push_back(&X);
      full.insert(full.end(), args.begin(), args.end());
      return ev(phi, VfArgs(full));
    };
  };
  if (alpha.e0) out.e0 = wrap(alpha.e0);
  if (alpha.e1) out.e1 = wrap(alpha.e1);
  if (alpha.e2) out.e2 = wrap(alpha.e2);
  return out;
}

/// Derivative of forms along a configuration-space vector field, by the
/// Cartan formula. For degree zero this is just the directional derivative.
template <template <class> class VT>
FieldFormT<VT> field_lie(const FieldVectorField& X, const FieldFormT<VT>& alpha) {
  auto dterm = field_interior(X, field_d(alpha));
  if (alpha.deg == 0) return dterm;
  auto iterm = field_d(field_interior(X, alpha));
  FieldFormT<VT> out;
  out.deg = alpha.deg;
  if (dterm.e0 && iterm.e0)
    out.e0 = [dterm, iterm](const FieldsT<double>& phi, VfArgs args) {
      return dterm.e0(phi, args) + iterm.e0(phi, args);
    };
  if (dterm.e1 && iterm.e1)
    out.e1 = [dterm, iterm](const FieldsT<D1>& phi, VfArgs args) {
      return dterm.e1(phi, args) + iterm.e1(phi, args);
    };
  return out;
}

// ---------------------------------------------------------------------------
// directional derivatives of arbitrary functionals
// ---------------------------------------------------------------------------

/// Forward-channel directional derivative of g along xi at phi. g must be
/// callable on FieldsT<D1>.
template <class G>
auto ad_directional(G&& g, const Fields& phi, const Fields& xi) {
  return b_channel(g(dual_lift(phi, xi)));
}

/// Central finite difference with one step of Richardson extrapolation,
/// the independent cross-check for the forward channel.
template <class G>
auto fd_directional(G&& g, const Fields& phi, const Fields& xi, double h = 1e-3) {
  auto probe = [&](double s) { return (1.0 / (2 * s)) * (g(phi + s * xi) - g(phi + (-s) * xi)); };
  auto dh = probe(h);
  auto dh2 = probe(h / 2);
  return (4.0 / 3.0) * dh2 - (1.0 / 3.0) * dh;
}

// ---------------------------------------------------------------------------
// vertical automorphisms
// ---------------------------------------------------------------------------

/// Image of the tangent xi at phi under phi -> Psi(phi)* phi, evaluated at
/// the transformed configuration.
inline Fields vertical_pushforward_at(const FieldDepDiffeo& Psi, const Fields& phi,
                                      const Fields& xi) {
  auto phiL = dual_lift(phi, xi);
  return b_channel(pullback(Psi(phiL), phiL));
}

/// Composite of two configuration-dependent maps, twisted so that acting
/// with the result equals acting with `first`, then with `second` on the
/// already transformed configuration.
inline FieldDepDiffeo twisted_compose(const FieldDepDiffeo& first, const FieldDepDiffeo& second) {
  return FieldDepDiffeo::make([first, second](const auto& phi) {
    auto u1 = first(phi);
    auto u2 = second(pullback(u1, phi));
    return compose(u1, u2);
  });
}

/// Sup-norm displacement distance between two maps on the same grid.
template <class T>
double diffeo_distance(const DiffeoT<T>& a, const DiffeoT<T>& b) {
  double m = 0;
  for (int d = 0; d < a.grid().dim(); ++d)
    m = std::max(m, (a.displacement()[d] - b.displacement()[d]).max_abs());
  return m;
}

/// Sup-norm gap between two configurations over the same schema.
inline double fields_gap(const Fields& a, const Fields& b) { return (a - b).max_abs(); }

/// How far Psi is from intertwining the group action with right translation,
/// at one probe configuration and one probe diffeomorphism. Zero for an
/// exactly equivariant dressing.
inline double equivariance_residual(const FieldDepDiffeo& Psi, const Fields& phi,
                                    const Diffeo& psi) {
  Diffeo lhs = Psi(pullback(psi, phi));
  Diffeo rhs = compose(psi.inverse(), Psi(phi));
  return diffeo_distance(lhs, rhs);
}

// ---------------------------------------------------------------------------
// band limited random data for property tests
// ---------------------------------------------------------------------------

/// Random smooth scalar: trigonometric polynomial with modes up to kmax and
/// amplitudes damped by 1/(1+|k|^2), bounded overall by roughly amp.
inline GridFunction random_scalar(const PeriodicGrid& g, Rng rng, double amp = 0.5,
                                  int kmax = 3) {
  GridFunction out(g);
  struct Mode {
    int kx, ky;
    double c, s;
  };
  std::vector<Mode> modes;
  double norm = 0;
  int kylo = g.dim() == 2 ? -kmax : 0;
  int kyhi = g.dim() == 2 ? kmax : 0;
  for (int kx = 0; kx <= kmax; ++kx)
    for (int ky = kylo; ky <= kyhi; ++ky) {
      if (kx == 0 && ky < 0) continue;
      if (kx == 0 && ky == 0) continue;
      double damp = 1.0 / (1 + kx * kx + ky * ky);
      Mode m{kx, ky, damp * rng.uniform(-1, 1), damp * rng.uniform(-1, 1)};
      modes.push_back(m);
      norm += std::abs(m.c) + std::abs(m.s);
    }
  if (norm == 0) norm = 1;
  for (int i = 0; i < g.size(0); ++i)
    for (int j = 0; j < (g.dim() == 2 ? g.size(1) : 1); ++j) {
      double x = g.node(0, i), y = g.dim() == 2 ? g.node(1, j) : 0;
      double v = 0;
      for (const auto& m : modes) {
        double ph = m.kx * x + m.ky * y;
        v += m.c * std::cos(ph) + m.s * std::sin(ph);
      }
      out.at(i, j) = amp * v / norm;
    }
  return out;
}

inline VectorFieldM random_vf(const PeriodicGrid& g, Rng rng, double amp = 0.5, int kmax = 3) {
  VectorFieldM out(g);
  for (int d = 0; d < g.dim(); ++d) {
    Rng sub = rng.split("component" + std::to_string(d));
    out.comp[d] = random_scalar(g, sub, amp, kmax);
  }
  return out;
}

/// Random configuration. Clock displacements are kept small enough that the
/// full clock map stays monotone along its winding axis.
inline Fields random_fields(const SchemaPtr& schema, Rng rng, double amp = 0.5, int kmax = 3) {
  Fields out(schema);
  for (int i = 0; i < schema->count(); ++i) {
    Rng sub = rng.split("field" + schema->fields[i].name);
    const FieldKind& k = schema->fields[i].kind;
    double a = k.is_clock() ? std::min(amp, 0.35) : amp;
    for (auto& c : out.comp[i].comp) {
      Rng csub = sub.split("comp" + std::to_string(&c - out.comp[i].comp.data()));
      c = random_scalar(schema->grid, csub, a, kmax);
    }
  }
  return out;
}

/// Random field-dependent frame: fixed displacement shapes scaled by a smooth
/// functional of the first field component, so the frame genuinely moves with
/// the configuration while the graph stays invertible.
inline FieldDepDiffeo random_field_diffeo(const SchemaPtr& schema, Rng rng, double amp = 0.08) {
  VectorFieldM shape = random_vf(schema->grid, rng.split("shape"), amp, 2);
  double c0 = rng.uniform(0.6, 1.0);
  double c1 = rng.uniform(0.2, 0.4);
  return FieldDepDiffeo::make([shape, c0, c1](const auto& phi) {
    using T = typename std::decay_t<decltype(phi)>::Scalar;
    using std::sin;
    const PeriodicGrid& g = phi.grid();
    T q = quadrature(phi.comp[0].comp[0] * phi.comp[0].comp[0]);
    T scale = c0 + c1 * sin(q);
    std::vector<GridFunctionT<T>> disp;
    disp.reserve(g.dim());
    for (int d = 0; d < g.dim(); ++d) disp.push_back(scale * lift_to<T>(shape.comp[d]));
    return DiffeoT<T>(g, std::move(disp));
  });
}

}  // namespace covphase
