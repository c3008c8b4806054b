#pragma once
/// @file geom.hpp
/// Differential geometry on the periodic chart: vector fields, forms with the
/// exterior/interior/Lie calculus, diffeomorphisms near the identity stored as
/// displacement graphs x + f(x), their flows, and oriented integration over
/// regions and slices. Every transformed-domain integral is evaluated by
/// change of variables back to the reference domain.

#include <array>
#include <memory>
#include <mutex>
#include <vector>

#include "covphase/grid.hpp"

namespace covphase {

template <class T>
using PointT = std::array<T, 2>;  // component 1 unused on the circle

// ---------------------------------------------------------------------------
// Vector fields on M
// ---------------------------------------------------------------------------

template <class T>
struct VectorFieldMT {
  PeriodicGrid grid;
  std::vector<GridFunctionT<T>> comp;  // dim components

  explicit VectorFieldMT(const PeriodicGrid& g)
      : grid(g), comp(g.dim(), GridFunctionT<T>(g)) {}
  VectorFieldMT(const PeriodicGrid& g, std::vector<GridFunctionT<T>> c)
      : grid(g), comp(std::move(c)) {
    if (int(comp.size()) != g.dim()) throw degree_error("vector field needs dim components");
  }

  double max_abs() const {
    double m = 0;
    for (const auto& c : comp) m = std::max(m, c.max_abs());
    return m;
  }
};

using VectorFieldM = VectorFieldMT<double>;

template <class T> VectorFieldMT<T> operator+(VectorFieldMT<T> a, const VectorFieldMT<T>& b) {
  for (int i = 0; i < int(a.comp.size()); ++i) a.comp[i] = a.comp[i] + b.comp[i];
  return a;
}
template <class T> VectorFieldMT<T> operator-(VectorFieldMT<T> a, const VectorFieldMT<T>& b) {
  for (int i = 0; i < int(a.comp.size()); ++i) a.comp[i] = a.comp[i] - b.comp[i];
  return a;
}
template <class T, class S> VectorFieldMT<T> operator*(S c, VectorFieldMT<T> a) {
  for (auto& f : a.comp) f = c * f;
  return a;
}
template <class T> VectorFieldMT<T> operator-(VectorFieldMT<T> a) {
  for (auto& f : a.comp) f = -f;
  return a;
}

/// Sample analytic components. Fx, Fy take (x) in 1d or (x,y) in 2d.
template <class... F>
VectorFieldM sample_vf(const PeriodicGrid& g, F&&... fns) {
  static_assert(sizeof...(F) >= 1 && sizeof...(F) <= 2);
  if (int(sizeof...(F)) != g.dim()) throw degree_error("component count does not match grid");
  return VectorFieldM(g, {sample(g, std::forward<F>(fns))...});
}

// ---------------------------------------------------------------------------
// Differential forms on M
// ---------------------------------------------------------------------------

inline int form_component_count(int dim, int deg) {
  if (deg < 0 || deg > dim) throw degree_error("form degree out of range");
  return (deg == 1 && dim == 2) ? 2 : 1;
}

template <class T>
struct FormFieldT {
  PeriodicGrid grid;
  int deg;
  std::vector<GridFunctionT<T>> comp;

  FormFieldT(const PeriodicGrid& g, int d)
      : grid(g), deg(d), comp(form_component_count(g.dim(), d), GridFunctionT<T>(g)) {}
  FormFieldT(const PeriodicGrid& g, int d, std::vector<GridFunctionT<T>> c)
      : grid(g), deg(d), comp(std::move(c)) {
    if (int(comp.size()) != form_component_count(g.dim(), d))
      throw degree_error("form component count does not match degree");
  }

  double max_abs() const {
    double m = 0;
    for (const auto& c : comp) m = std::max(m, c.max_abs());
    return m;
  }
};

using FormField = FormFieldT<double>;

template <class T> FormFieldT<T> operator+(FormFieldT<T> a, const FormFieldT<T>& b) {
  if (a.deg != b.deg) throw degree_error("form degrees differ");
  for (int i = 0; i < int(a.comp.size()); ++i) a.comp[i] = a.comp[i] + b.comp[i];
  return a;
}
template <class T> FormFieldT<T> operator-(FormFieldT<T> a, const FormFieldT<T>& b) {
  if (a.deg != b.deg) throw degree_error("form degrees differ");
  for (int i = 0; i < int(a.comp.size()); ++i) a.comp[i] = a.comp[i] - b.comp[i];
  return a;
}
template <class T, class S> FormFieldT<T> operator*(S c, FormFieldT<T> a) {
  for (auto& f : a.comp) f = c * f;
  return a;
}
template <class T> FormFieldT<T> operator-(FormFieldT<T> a) {
  for (auto& f : a.comp) f = -f;
  return a;
}
/// Pointwise scaling by a scalar function.
template <class T> FormFieldT<T> operator*(const GridFunctionT<T>& s, FormFieldT<T> a) {
  for (auto& f : a.comp) f = s * f;
  return a;
}

/// Exterior derivative. The top degree is rejected.
template <class T>
FormFieldT<T> exterior_d(const FormFieldT<T>& w) {
  const PeriodicGrid& g = w.grid;
  if (w.deg >= g.dim()) throw degree_error("exterior derivative of a top form");
  if (w.deg == 0) {
    FormFieldT<T> out(g, 1);
    for (int a = 0; a < g.dim(); ++a) out.comp[a] = spectral_derivative(w.comp[0], a);
    return out;
  }
  // deg 1 on the torus
  FormFieldT<T> out(g, 2);
  out.comp[0] = spectral_derivative(w.comp[1], 0) - spectral_derivative(w.comp[0], 1);
  return out;
}

/// Interior product with a vector field; degree 0 is rejected.
template <class T>
FormFieldT<T> interior(const VectorFieldMT<T>& X, const FormFieldT<T>& w) {
  const PeriodicGrid& g = w.grid;
  if (w.deg == 0) throw degree_error("interior product with a scalar");
  if (w.deg == 1) {
    FormFieldT<T> out(g, 0);
    GridFunctionT<T> s = X.comp[0] * w.comp[0];
    if (g.dim() == 2) s = s + X.comp[1] * w.comp[1];
    out.comp[0] = s;
    return out;
  }
  // top form on the torus: i_X (w dx^dy) = w X^x dy - w X^y dx
  FormFieldT<T> out(g, 1);
  out.comp[0] = -(w.comp[0] * X.comp[1]);
  out.comp[1] = w.comp[0] * X.comp[0];
  return out;
}

/// Cartan formula; each degree uses only the defined pieces.
template <class T>
FormFieldT<T> lie_derivative(const VectorFieldMT<T>& X, const FormFieldT<T>& w) {
  if (w.deg == 0) return interior(X, exterior_d(w));
  if (w.deg == w.grid.dim()) return exterior_d(interior(X, w));
  return interior(X, exterior_d(w)) + exterior_d(interior(X, w));
}

/// Commutator bracket of vector fields: [X,Y]^m = X^n d_n Y^m - Y^n d_n X^m.
template <class T>
VectorFieldMT<T> lie_bracket_gamma(const VectorFieldMT<T>& X, const VectorFieldMT<T>& Y) {
  const PeriodicGrid& g = X.grid;
  VectorFieldMT<T> out(g);
  for (int m = 0; m < g.dim(); ++m) {
    GridFunctionT<T> acc(g);
    for (int n = 0; n < g.dim(); ++n)
      acc = acc + X.comp[n] * spectral_derivative(Y.comp[m], n) -
            Y.comp[n] * spectral_derivative(X.comp[m], n);
    out.comp[m] = acc;
  }
  return out;
}

/// Opposite-sign bracket carried by the action convention. Kept as its own
/// name so call sites document which algebra they live in.
template <class T>
VectorFieldMT<T> lie_bracket_diff(const VectorFieldMT<T>& X, const VectorFieldMT<T>& Y) {
  return -lie_bracket_gamma(X, Y);
}

/// Lie derivative of a vector field.
template <class T>
VectorFieldMT<T> lie_derivative(const VectorFieldMT<T>& X, const VectorFieldMT<T>& Y) {
  return lie_bracket_gamma(X, Y);
}

// ---------------------------------------------------------------------------
// Batch interpolation of several grid functions at scattered points.
// ---------------------------------------------------------------------------

template <class T>
class BatchInterp {
 public:
  BatchInterp(const PeriodicGrid& g, std::vector<const GridFunctionT<T>*> fields)
      : grid_(g) {
    coeffs_.reserve(fields.size());
    for (auto* f : fields) coeffs_.emplace_back(*f);
  }

  int count() const { return int(coeffs_.size()); }

  /// Evaluate every field at one point; out must hold count() slots.
  template <class S>
  void eval(const PointT<S>& p, decltype(std::declval<T>() * std::declval<S>())* out) const {
    thread_local std::vector<S> C0, S0, C1, S1;
    if (grid_.dim() == 1) {
      detail::harmonic_tables(p[0], grid_.size(0) / 2, C0, S0);
      for (size_t q = 0; q < coeffs_.size(); ++q) out[q] = eval1_with(coeffs_[q], C0, S0);
    } else {
      detail::harmonic_tables(p[0], grid_.size(0) / 2, C0, S0);
      detail::harmonic_tables(p[1], grid_.size(1) / 2, C1, S1);
      for (size_t q = 0; q < coeffs_.size(); ++q)
        out[q] = eval2_with(coeffs_[q], C0, S0, C1, S1);
    }
  }

 private:
  template <class S>
  auto eval1_with(const TrigCoeffs<T>& tc, const std::vector<S>& C,
                  const std::vector<S>& Sn) const {
    using R = decltype(std::declval<T>() * std::declval<S>());
    int N = grid_.size(0);
    R acc{};
    for (int k = 0; k < N; ++k) {
      int m = grid_.wavenumber(0, k);
      int am = m < 0 ? -m : m;
      S ss = m < 0 ? S(-1.0) * Sn[am] : Sn[am];
      acc += tc.re[k] * C[am] - tc.im[k] * ss;
    }
    return acc;
  }

  template <class S>
  auto eval2_with(const TrigCoeffs<T>& tc, const std::vector<S>& C0, const std::vector<S>& S0,
                  const std::vector<S>& C1, const std::vector<S>& S1) const {
    using R = decltype(std::declval<T>() * std::declval<S>());
    int N0 = grid_.size(0), N1 = grid_.size(1);
    R acc{};
    for (int k0 = 0; k0 < N0; ++k0) {
      int m0 = grid_.wavenumber(0, k0);
      int a0 = m0 < 0 ? -m0 : m0;
      R Ar{}, Ai{};
      const T* rerow = tc.re.data() + k0 * N1;
      const T* imrow = tc.im.data() + k0 * N1;
      for (int k1 = 0; k1 < N1; ++k1) {
        int m1 = grid_.wavenumber(1, k1);
        int a1 = m1 < 0 ? -m1 : m1;
        S s1 = m1 < 0 ? S(-1.0) * S1[a1] : S1[a1];
        Ar += rerow[k1] * C1[a1] - imrow[k1] * s1;
        Ai += rerow[k1] * s1 + imrow[k1] * C1[a1];
      }
      S s0 = m0 < 0 ? S(-1.0) * S0[a0] : S0[a0];
      acc += Ar * C0[a0] - Ai * s0;
    }
    return acc;
  }

  PeriodicGrid grid_;
  std::vector<TrigCoeffs<T>> coeffs_;
};

// ---------------------------------------------------------------------------
// Diffeomorphisms
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
GridFunctionT<double> value_channel(const GridFunctionT<T>& f) {
  GridFunctionT<double> out(f.grid);
  for (size_t i = 0; i < f.v.size(); ++i) out.v[i] = channels<T>::get(f.v[i], 0);
  return out;
}

template <class T>
GridFunctionT<T> lift_channel(const GridFunctionT<double>& f) {
  GridFunctionT<T> out(f.grid);
  for (size_t i = 0; i < f.v.size(); ++i) channels<T>::set(out.v[i], 0, f.v[i]);
  return out;
}

/// Solve the 2x2 system (I + J) dx = r in scalar type T; 1d uses entry (0,0).
template <class T>
/// J is the full map Jacobian, identity included.
void solve_newton_step(int dim, const T J[2][2], const T r[2], T dx[2]) {
  if (dim == 1) {
    dx[0] = r[0] / J[0][0];
    return;
  }
  T det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
  dx[0] = (J[1][1] * r[0] - J[0][1] * r[1]) / det;
  dx[1] = (J[0][0] * r[1] - J[1][0] * r[0]) / det;
}

}  // namespace detail

template <class T>
class DiffeoT {
 public:
  /// psi(x) = x + f(x); requires sup-norm of Df below 1 on the value channel.
  DiffeoT(const PeriodicGrid& g, std::vector<GridFunctionT<T>> disp)
      : grid_(g), f_(std::move(disp)), state_(std::make_shared<State>()) {
    if (int(f_.size()) != g.dim()) throw degree_error("displacement needs dim components");
    for (auto& c : f_) require_finite(c, "diffeo displacement");
    df_.reserve(g.dim() * g.dim());
    double sup = 0;
    for (int m = 0; m < g.dim(); ++m)
      for (int n = 0; n < g.dim(); ++n) df_.push_back(spectral_derivative(f_[m], n));
    for (int i = 0; i < g.total(); ++i) {
      for (int m = 0; m < g.dim(); ++m) {
        double row = 0;
        for (int n = 0; n < g.dim(); ++n)
          row += std::abs(channels<T>::get(df_[m * g.dim() + n].v[i], 0));
        sup = std::max(sup, row);
      }
    }
    if (sup >= 1.0)
      throw near_singular_diffeo_error("displacement Jacobian reaches 1, graph not invertible");
    translation_ = true;
    for (const auto& d : df_)
      if (d.max_abs() > 1e-13) { translation_ = false; break; }
  }

  static DiffeoT identity(const PeriodicGrid& g) {
    return DiffeoT(g, std::vector<GridFunctionT<T>>(g.dim(), GridFunctionT<T>(g)));
  }

  const PeriodicGrid& grid() const { return grid_; }
  const std::vector<GridFunctionT<T>>& displacement() const { return f_; }
  /// d f^m / d x^n, row-major.
  const GridFunctionT<T>& ddisp(int m, int n) const { return df_[m * grid_.dim() + n]; }
  bool is_translation() const { return translation_; }

  /// Map a point.
  template <class S>
  PointT<decltype(std::declval<T>() * std::declval<S>())> apply(const PointT<S>& p) const {
    using R = decltype(std::declval<T>() * std::declval<S>());
    const auto& bi = disp_interp();
    R vals[2];
    bi.eval(p, vals);
    PointT<R> out{R(p[0]), R{}};
    if (grid_.dim() == 2) out[1] = R(p[1]);
    for (int m = 0; m < grid_.dim(); ++m) out[m] += vals[m];
    return out;
  }

  /// Jacobian of the full map at a point: delta_mn + d f^m/d x^n.
  template <class S>
  void jacobian(const PointT<S>& p, decltype(std::declval<T>() * std::declval<S>()) J[2][2]) const {
    using R = decltype(std::declval<T>() * std::declval<S>());
    const auto& bi = ddisp_interp();
    R vals[4];
    bi.eval(p, vals);
    for (int m = 0; m < grid_.dim(); ++m)
      for (int n = 0; n < grid_.dim(); ++n)
        J[m][n] = (m == n ? R(1.0) : R(0.0)) + vals[m * grid_.dim() + n];
  }

  /// Lazily computed, cached inverse. Newton on every node, 50 iteration cap.
  const DiffeoT& inverse() const {
    std::call_once(state_->once, [this] { state_->inv = compute_inverse(); });
    return *state_->inv;
  }

 private:
  struct State {
    std::once_flag once;
    mutable std::shared_ptr<DiffeoT> inv;
    std::once_flag once_fi, once_dfi;
    mutable std::shared_ptr<BatchInterp<T>> fi, dfi;
  };

  const BatchInterp<T>& disp_interp() const {
    std::call_once(state_->once_fi, [this] {
      std::vector<const GridFunctionT<T>*> ptrs;
      for (const auto& c : f_) ptrs.push_back(&c);
      state_->fi = std::make_shared<BatchInterp<T>>(grid_, ptrs);
    });
    return *state_->fi;
  }
  const BatchInterp<T>& ddisp_interp() const {
    std::call_once(state_->once_dfi, [this] {
      std::vector<const GridFunctionT<T>*> ptrs;
      for (const auto& c : df_) ptrs.push_back(&c);
      state_->dfi = std::make_shared<BatchInterp<T>>(grid_, ptrs);
    });
    return *state_->dfi;
  }

  std::shared_ptr<DiffeoT> compute_inverse() const;

  PeriodicGrid grid_;
  std::vector<GridFunctionT<T>> f_, df_;
  bool translation_ = false;
  std::shared_ptr<State> state_;
};

using Diffeo = DiffeoT<double>;

namespace detail {

/// Newton solve of x + f(x) = y for one point, in scalar type T.
/// Returns false if 50 iterations fail to reach tolerance on the value channel.
template <class T>
bool invert_point(const DiffeoT<T>& psi, const PointT<T>& y, PointT<T>& x, int max_iter = 50) {
  int dim = psi.grid().dim();
  auto residual = [&](const PointT<T>& xc, T r[2]) {
    auto fx = psi.apply(xc);
    double m = 0;
    for (int d = 0; d < dim; ++d) {
      r[d] = y[d] - fx[d];
      m = std::max(m, std::abs(val(r[d])));
    }
    return m;
  };
  T r[2] = {T{}, T{}};
  double rn = residual(x, r);
  for (int it = 0; it < max_iter; ++it) {
    bool value_done = rn <= 2e-13;
    if (value_done && it >= 2) return true;  // extra sweeps settle dual channels
    T J[2][2] = {{T{}, T{}}, {T{}, T{}}};
    psi.jacobian(x, J);
    T dx[2];
    solve_newton_step(dim, J, r, dx);
    double step = 1.0;
    for (int tries = 0; tries < 6; ++tries) {
      PointT<T> xn = x;
      for (int d = 0; d < dim; ++d) xn[d] += step * dx[d];
      T rn_vec[2] = {T{}, T{}};
      double rnew = residual(xn, rn_vec);
      if (rnew < rn || rnew <= 2e-13) {
        x = xn;
        rn = rnew;
        r[0] = rn_vec[0];
        r[1] = rn_vec[1];
        break;
      }
      step *= 0.5;
      if (tries == 5) {
        if (rn < 1e-11) return true;
        return false;
      }
    }
  }
  return std::abs(rn) <= 2e-13;
}

}  // namespace detail

template <class T>
std::shared_ptr<DiffeoT<T>> DiffeoT<T>::compute_inverse() const {
  int dim = grid_.dim();
  if (translation_) {
    // constant displacement inverts exactly
    std::vector<GridFunctionT<T>> g(dim, GridFunctionT<T>(grid_));
    for (int d = 0; d < dim; ++d)
      for (int i = 0; i < grid_.total(); ++i) g[d].v[i] = -f_[d].v[0];
    return std::make_shared<DiffeoT>(grid_, std::move(g));
  }

  // Phase 1: value-channel Newton seeds.
  std::vector<GridFunctionT<double>> fval;
  for (const auto& c : f_) fval.push_back(detail::value_channel(c));
  DiffeoT<double> psi0(grid_, fval);
  std::vector<GridFunctionT<T>> g(dim, GridFunctionT<T>(grid_));
  std::vector<PointT<double>> seeds(grid_.total());
  for (int i = 0; i < grid_.size(0); ++i)
    for (int j = 0; j < grid_.size(1); ++j) {
      int idx = grid_.index(i, j);
      PointT<double> y{grid_.node(0, i), dim == 2 ? grid_.node(1, j) : 0.0};
      PointT<double> x = y;
      if (!detail::invert_point(psi0, y, x))
        throw near_singular_diffeo_error("inverse Newton did not converge in 50 iterations");
      seeds[idx] = x;
    }

  // Phase 2: polish in the full scalar type so derivative channels converge.
  if constexpr (!std::is_same_v<T, double>) {
    for (int i = 0; i < grid_.size(0); ++i)
      for (int j = 0; j < grid_.size(1); ++j) {
        int idx = grid_.index(i, j);
        PointT<T> y{T(grid_.node(0, i)), T(dim == 2 ? grid_.node(1, j) : 0.0)};
        PointT<T> x{T(seeds[idx][0]), T(seeds[idx][1])};
        if (!detail::invert_point(*this, y, x, 8))
          throw near_singular_diffeo_error("inverse Newton did not converge in 50 iterations");
        for (int d = 0; d < dim; ++d) {
          T disp = x[d] - y[d];
          g[d].v[idx] = disp;
        }
      }
  } else {
    for (int i = 0; i < grid_.total(); ++i) {
      PointT<double> y{grid_.node(0, i / grid_.size(1)), dim == 2 ? grid_.node(1, i % grid_.size(1)) : 0.0};
      for (int d = 0; d < dim; ++d) g[d].v[i] = seeds[i][d] - y[d];
    }
  }
  return std::make_shared<DiffeoT>(grid_, std::move(g));
}

/// Composition (psi . eta)(x) = psi(eta(x)), sampled at the nodes.
template <class T>
DiffeoT<T> compose(const DiffeoT<T>& psi, const DiffeoT<T>& eta) {
  const PeriodicGrid& g = psi.grid();
  int dim = g.dim();
  std::vector<GridFunctionT<T>> h(dim, GridFunctionT<T>(g));
  for (int i = 0; i < g.size(0); ++i)
    for (int j = 0; j < g.size(1); ++j) {
      int idx = g.index(i, j);
      PointT<T> p{T(g.node(0, i)), T(dim == 2 ? g.node(1, j) : 0.0)};
      auto ep = eta.apply(p);
      auto pp = psi.apply(ep);
      for (int d = 0; d < dim; ++d) h[d].v[idx] = pp[d] - p[d];
    }
  return DiffeoT<T>(g, std::move(h));
}

// ---------------------------------------------------------------------------
// Pullback and pushforward
// ---------------------------------------------------------------------------

/// Pullback of a form: (psi^* w)(x) = w(psi(x)) with Jacobian factors. The
/// node values of the Jacobian are the stored spectral derivatives, so no
/// interpolation enters beyond the composition itself.
template <class T>
FormFieldT<T> pullback(const DiffeoT<T>& psi, const FormFieldT<T>& w) {
  const PeriodicGrid& g = psi.grid();
  if (w.grid != g) throw invalid_data_error("grid mismatch");
  int dim = g.dim();
  std::vector<const GridFunctionT<T>*> ptrs;
  for (const auto& c : w.comp) ptrs.push_back(&c);
  BatchInterp<T> bi(g, ptrs);
  FormFieldT<T> out(g, w.deg);
  std::vector<T> vals(w.comp.size());
  for (int i = 0; i < g.size(0); ++i)
    for (int j = 0; j < g.size(1); ++j) {
      int idx = g.index(i, j);
      PointT<T> p{T(g.node(0, i)), T(dim == 2 ? g.node(1, j) : 0.0)};
      auto pp = psi.apply(p);
      bi.eval(pp, vals.data());
      if (w.deg == 0) {
        out.comp[0].v[idx] = vals[0];
      } else if (w.deg == 1 && dim == 2) {
        for (int m = 0; m < 2; ++m) {
          T acc{};
          for (int n = 0; n < 2; ++n) {
            T Jnm = (n == m ? T(1.0) : T(0.0)) + psi.ddisp(n, m).v[idx];
            acc += Jnm * vals[n];
          }
          out.comp[m].v[idx] = acc;
        }
      } else if (w.deg == dim) {
        T det;
        if (dim == 1) {
          det = T(1.0) + psi.ddisp(0, 0).v[idx];
        } else {
          T a = T(1.0) + psi.ddisp(0, 0).v[idx], b = psi.ddisp(0, 1).v[idx];
          T c = psi.ddisp(1, 0).v[idx], d = T(1.0) + psi.ddisp(1, 1).v[idx];
          det = a * d - b * c;
        }
        out.comp[0].v[idx] = det * vals[0];
      }
    }
  return out;
}

/// The conjugated generator ((psi^{-1})_* X) . psi: inverse Jacobian applied
/// to X at the displaced point. Its flow is psi^{-1} . flow(X) . psi.
template <class T>
VectorFieldMT<T> conjugate_vf(const DiffeoT<T>& psi, const VectorFieldMT<T>& X) {
  const PeriodicGrid& g = psi.grid();
  int dim = g.dim();
  std::vector<const GridFunctionT<T>*> ptrs;
  for (const auto& c : X.comp) ptrs.push_back(&c);
  BatchInterp<T> bi(g, ptrs);
  VectorFieldMT<T> out(g);
  std::vector<T> vals(dim);
  for (int i = 0; i < g.size(0); ++i)
    for (int j = 0; j < g.size(1); ++j) {
      int idx = g.index(i, j);
      PointT<T> p{T(g.node(0, i)), T(dim == 2 ? g.node(1, j) : 0.0)};
      auto pp = psi.apply(p);
      bi.eval(pp, vals.data());
      if (dim == 1) {
        out.comp[0].v[idx] = vals[0] / (T(1.0) + psi.ddisp(0, 0).v[idx]);
      } else {
        T J[2][2] = {{T(1.0) + psi.ddisp(0, 0).v[idx], psi.ddisp(0, 1).v[idx]},
                     {psi.ddisp(1, 0).v[idx], T(1.0) + psi.ddisp(1, 1).v[idx]}};
        T det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
        out.comp[0].v[idx] = (J[1][1] * vals[0] - J[0][1] * vals[1]) / det;
        out.comp[1].v[idx] = (J[0][0] * vals[1] - J[1][0] * vals[0]) / det;
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Flows
// ---------------------------------------------------------------------------

/// RK4 integral curves from every node; returns the time-tau map. Throws
/// flow_too_large_error when the endpoint leaves the displacement regime.
inline Diffeo flow(const VectorFieldM& X, double tau, int steps = 0) {
  const PeriodicGrid& g = X.grid;
  int dim = g.dim();
  if (steps <= 0) {
    double scale = std::abs(tau) * std::max(X.max_abs(), 1.0);
    steps = std::max(32, int(std::ceil(40 * scale)));
  }
  std::vector<const GridFunction*> ptrs;
  for (const auto& c : X.comp) ptrs.push_back(&c);
  BatchInterp<double> bi(g, ptrs);
  auto rhs = [&](const PointT<double>& p, double* out) { bi.eval(p, out); };

  double h = tau / steps;
  std::vector<GridFunction> disp(dim, GridFunction(g));
  for (int i = 0; i < g.size(0); ++i)
    for (int j = 0; j < g.size(1); ++j) {
      int idx = g.index(i, j);
      PointT<double> p{g.node(0, i), dim == 2 ? g.node(1, j) : 0.0};
      PointT<double> x = p;
      double k1[2], k2[2], k3[2], k4[2];
      for (int s = 0; s < steps; ++s) {
        PointT<double> q;
        rhs(x, k1);
        q = x; for (int d = 0; d < dim; ++d) q[d] += 0.5 * h * k1[d];
        rhs(q, k2);
        q = x; for (int d = 0; d < dim; ++d) q[d] += 0.5 * h * k2[d];
        rhs(q, k3);
        q = x; for (int d = 0; d < dim; ++d) q[d] += h * k3[d];
        rhs(q, k4);
        for (int d = 0; d < dim; ++d) x[d] += h / 6 * (k1[d] + 2 * k2[d] + 2 * k3[d] + k4[d]);
      }
      for (int d = 0; d < dim; ++d) disp[d].v[idx] = x[d] - p[d];
    }
  try {
    return Diffeo(g, std::move(disp));
  } catch (const near_singular_diffeo_error&) {
    throw flow_too_large_error("flow left the displacement regime covered by graphs");
  }
}

// ---------------------------------------------------------------------------
// Regions, slices, integration
// ---------------------------------------------------------------------------

/// Codimension-0 window: an interval [a,b] on the circle, the band
/// a <= y <= b (full x circle) on the torus, or the whole manifold.
struct Region {
  enum Kind { full, interval, band } kind = full;
  double a = 0, b = 0;

  static Region whole() { return {}; }
  static Region make_interval(double a, double b) {
    detail::check_window(a, b);
    return {interval, a, b};
  }
  static Region make_band(double a, double b) {
    detail::check_window(a, b);
    return {band, a, b};
  }
};

/// Codimension-1 hypersurface: a point x0 on the circle; the circle y = y0 or
/// the segment y = y0, a <= x <= b (oriented along +x) on the torus.
struct Slice {
  enum Kind { point, circle, segment } kind = point;
  double c = 0;  // the point (1d) or the height y0 (2d)
  double a = 0, b = 0;

  static Slice at_point(double x0) { return {point, x0, 0, 0}; }
  static Slice at_circle(double y0) { return {circle, y0, 0, 0}; }
  static Slice at_segment(double y0, double a, double b) {
    detail::check_window(a, b);
    return {segment, y0, a, b};
  }
};

/// Restriction of a 2d grid function to the circle y = y0, as a 1d function
/// of x. Band-limited restriction stays band-limited, so slice quadrature on
/// the result is exact.
template <class T>
GridFunctionT<T> restrict_to_circle(const GridFunctionT<T>& f, double y0) {
  if (f.grid.dim() != 2) throw degree_error("restriction requires a torus field");
  PeriodicGrid gx = PeriodicGrid::line(f.grid.size(0));
  GridFunctionT<T> out(gx);
  TrigCoeffs<T> tc(f);
  for (int i = 0; i < gx.size(0); ++i) out.v[i] = interp_eval2(tc, gx.node(0, i), y0);
  return out;
}

/// Integral of a top form over a region.
template <class T>
T integrate(const FormFieldT<T>& w, const Region& U) {
  if (w.deg != w.grid.dim()) throw degree_error("region integration needs a top form");
  switch (U.kind) {
    case Region::full: return quadrature(w.comp[0]);
    case Region::interval:
      if (w.grid.dim() != 1) throw invalid_region_error("interval region on a torus");
      return quadrature_on(w.comp[0], U.a, U.b);
    case Region::band:
      if (w.grid.dim() != 2) throw invalid_region_error("band region on a circle");
      return quadrature_on(w.comp[0], U.a, U.b);
  }
  throw invalid_region_error("unreachable");
}

/// Integral of a codimension-1 form over the oriented boundary of a region.
/// Bands are bounded by two circles; the lower one carries the + orientation.
template <class T>
T boundary_integrate(const FormFieldT<T>& w, const Region& U) {
  const PeriodicGrid& g = w.grid;
  if (w.deg != g.dim() - 1) throw degree_error("boundary integration needs degree dim-1");
  if (U.kind == Region::full) return T{};
  if (g.dim() == 1) {
    TrigCoeffs<T> tc(w.comp[0]);
    return interp_eval1(tc, U.b) - interp_eval1(tc, U.a);
  }
  GridFunctionT<T> lo = restrict_to_circle(w.comp[0], U.a);
  GridFunctionT<T> hi = restrict_to_circle(w.comp[0], U.b);
  return quadrature(lo) - quadrature(hi);
}

/// Integral of a codimension-1 form over a slice.
template <class T>
T integrate_slice(const FormFieldT<T>& w, const Slice& S) {
  const PeriodicGrid& g = w.grid;
  if (w.deg != g.dim() - 1) throw degree_error("slice integration needs degree dim-1");
  if (g.dim() == 1) {
    if (S.kind != Slice::point) throw invalid_region_error("circle slices live on the torus");
    TrigCoeffs<T> tc(w.comp[0]);
    return interp_eval1(tc, S.c);
  }
  if (S.kind == Slice::point) throw invalid_region_error("point slices live on the circle");
  GridFunctionT<T> line = restrict_to_circle(w.comp[0], S.c);
  if (S.kind == Slice::circle) return quadrature(line);
  return quadrature_on(line, S.a, S.b);
}

/// Integral of a codimension-2 form over the oriented slice boundary. Closed
/// slices (points, circles) have empty boundary; the value is then zero by
/// construction, which in 1d covers every slice.
template <class T>
T boundary_integrate_slice(const FormFieldT<T>& w, const Slice& S) {
  const PeriodicGrid& g = w.grid;
  if (g.dim() == 1) return T{};
  if (w.deg != 0) throw degree_error("slice boundary integration needs a scalar");
  if (S.kind != Slice::segment) return T{};
  TrigCoeffs<T> tc(w.comp[0]);
  return interp_eval2(tc, S.b, S.c) - interp_eval2(tc, S.a, S.c);
}

/// Integral over the preimage psi^{-1}(U), defined by change of variables.
template <class T>
T integrate_preimage(const FormFieldT<T>& w, const DiffeoT<T>& psi, const Region& U) {
  return integrate(pullback(psi.inverse(), w), U);
}

template <class T>
T integrate_slice_preimage(const FormFieldT<T>& w, const DiffeoT<T>& psi, const Slice& S) {
  return integrate_slice(pullback(psi.inverse(), w), S);
}

/// Defect of the continuity relation between a moving region and its flux:
/// integral over U of L_X w minus the boundary integral of i_X w.
template <class T>
T region_continuity_residual(const VectorFieldMT<T>& X, const FormFieldT<T>& w, const Region& U) {
  if (w.deg != w.grid.dim()) throw degree_error("continuity residual needs a top form");
  return integrate(lie_derivative(X, w), U) - boundary_integrate(interior(X, w), U);
}

}  // namespace covphase
