#pragma once
/// @file grid.hpp
/// Uniform periodic grids on [0,2*pi)^d, d = 1 or 2, with spectral calculus:
/// exact derivatives, trigonometric interpolation and quadrature for
/// band-limited data. All kernels are generic over the scalar channel type so
/// directional derivatives flow through unchanged; the transforms themselves
/// act channel by channel (they are R-linear with constant coefficients).

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "covphase/core.hpp"

namespace covphase {

// ---------------------------------------------------------------------------
// PeriodicGrid
// ---------------------------------------------------------------------------

class PeriodicGrid {
 public:
  PeriodicGrid(int dim, std::array<int, 2> sizes) : dim_(dim), n_(sizes) {
    if (dim != 1 && dim != 2) throw invalid_region_error("grid dimension must be 1 or 2");
    if (dim == 1) n_[1] = 1;
    for (int a = 0; a < dim_; ++a) {
      if (n_[a] < 8 || n_[a] % 2 != 0)
        throw invalid_region_error("grid size must be even and at least 8");
    }
    auto tabs = std::make_shared<std::array<std::vector<double>, 2>>();
    for (int a = 0; a < 2; ++a) {
      int N = n_[a];
      (*tabs)[a].resize(2 * N);
      for (int i = 0; i < N; ++i) {
        (*tabs)[a][i] = std::cos(two_pi * i / N);
        (*tabs)[a][N + i] = std::sin(two_pi * i / N);
      }
    }
    trig_ = std::move(tabs);
  }

  static PeriodicGrid line(int n) { return PeriodicGrid(1, {n, 1}); }
  static PeriodicGrid torus(int nx, int ny) { return PeriodicGrid(2, {nx, ny}); }

  int dim() const { return dim_; }
  int size(int axis) const { return n_[axis]; }
  int total() const { return n_[0] * n_[1]; }
  int index(int i, int j = 0) const { return i * n_[1] + j; }

  /// Node coordinate x_j = 2*pi*j/N. This expression is the definition;
  /// interpolation reproduces stored values bit for bit at these coordinates.
  double node(int axis, int j) const { return two_pi * j / n_[axis]; }

  /// Signed wavenumber for transform bin k: range (-N/2, N/2].
  int wavenumber(int axis, int k) const {
    int N = n_[axis];
    return k <= N / 2 ? k : k - N;
  }

  double cell_volume() const {
    double v = 1;
    for (int a = 0; a < dim_; ++a) v *= two_pi / n_[a];
    return v;
  }

  const double* cos_table(int axis) const { return (*trig_)[axis].data(); }
  const double* sin_table(int axis) const { return (*trig_)[axis].data() + n_[axis]; }

  friend bool operator==(const PeriodicGrid& a, const PeriodicGrid& b) {
    return a.dim_ == b.dim_ && a.n_ == b.n_;
  }
  friend bool operator!=(const PeriodicGrid& a, const PeriodicGrid& b) { return !(a == b); }

 private:
  int dim_;
  std::array<int, 2> n_;
  std::shared_ptr<const std::array<std::vector<double>, 2>> trig_;
};

// ---------------------------------------------------------------------------
// GridFunction
// ---------------------------------------------------------------------------

template <class T>
struct GridFunctionT {
  PeriodicGrid grid;
  std::vector<T> v;

  explicit GridFunctionT(const PeriodicGrid& g) : grid(g), v(g.total(), T{}) {}
  GridFunctionT(const PeriodicGrid& g, std::vector<T> data) : grid(g), v(std::move(data)) {
    if (int(v.size()) != g.total()) throw invalid_data_error("sample count does not match grid");
    for (const T& x : v)
      if (!finite(x)) throw invalid_data_error("non-finite sample");
  }

  T& at(int i, int j = 0) { return v[grid.index(i, j)]; }
  const T& at(int i, int j = 0) const { return v[grid.index(i, j)]; }

  double max_abs() const {
    double m = 0;
    for (const T& x : v) m = std::max(m, chan_abs(x));
    return m;
  }
};

using GridFunction = GridFunctionT<double>;

template <class T>
void require_finite(const GridFunctionT<T>& f, const char* what) {
  for (const T& x : f.v)
    if (!finite(x)) throw invalid_data_error(std::string(what) + ": non-finite sample");
}

template <class T>
void require_same_grid(const GridFunctionT<T>& a, const GridFunctionT<T>& b) {
  if (a.grid != b.grid) throw invalid_data_error("grid mismatch");
}

template <class T> GridFunctionT<T> operator+(GridFunctionT<T> a, const GridFunctionT<T>& b) {
  require_same_grid(a, b);
  for (size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
  return a;
}
template <class T> GridFunctionT<T> operator-(GridFunctionT<T> a, const GridFunctionT<T>& b) {
  require_same_grid(a, b);
  for (size_t i = 0; i < a.v.size(); ++i) a.v[i] -= b.v[i];
  return a;
}
template <class T> GridFunctionT<T> operator*(GridFunctionT<T> a, const GridFunctionT<T>& b) {
  require_same_grid(a, b);
  for (size_t i = 0; i < a.v.size(); ++i) a.v[i] *= b.v[i];
  return a;
}
template <class T> GridFunctionT<T> operator-(GridFunctionT<T> a) {
  for (auto& x : a.v) x = -x;
  return a;
}
template <class T, class S> GridFunctionT<T> operator*(GridFunctionT<T> a, S c) {
  for (auto& x : a.v) x = x * c;
  return a;
}
template <class T, class S> GridFunctionT<T> operator*(S c, GridFunctionT<T> a) {
  for (auto& x : a.v) x = c * x;
  return a;
}

/// Sample an analytic function at the nodes. F takes (x) in 1d, (x,y) in 2d.
template <class F>
GridFunction sample(const PeriodicGrid& g, F&& f) {
  GridFunction out(g);
  if constexpr (std::is_invocable_v<F&, double, double>) {
    if (g.dim() != 2) throw degree_error("sampling function arity does not match grid");
    for (int i = 0; i < g.size(0); ++i)
      for (int j = 0; j < g.size(1); ++j) out.at(i, j) = f(g.node(0, i), g.node(1, j));
  } else {
    if (g.dim() != 1) throw degree_error("sampling function arity does not match grid");
    for (int i = 0; i < g.size(0); ++i) out.v[i] = f(g.node(0, i));
  }
  require_finite(out, "sample");
  return out;
}

// ---------------------------------------------------------------------------
// Direct transforms, one real channel at a time. Sizes stay at or below 64,
// so the O(N^2) single-axis transform is far from being a bottleneck.
// ---------------------------------------------------------------------------

namespace detail {

/// Forward normalized DFT of a strided complex line; im_in may be null.
inline void dft_line(const double* re_in, const double* im_in, int N, int stride,
                     const double* ct, const double* st, double* re_out, double* im_out) {
  for (int k = 0; k < N; ++k) {
    double sr = 0, si = 0;
    for (int j = 0; j < N; ++j) {
      int t = (j * k) % N;
      double xr = re_in[j * stride];
      sr += xr * ct[t];
      si -= xr * st[t];
      if (im_in) {
        double xi = im_in[j * stride];
        sr += xi * st[t];
        si += xi * ct[t];
      }
    }
    re_out[k] = sr / N;
    im_out[k] = si / N;
  }
}

/// Real part of the inverse DFT, written back through a stride.
inline void idft_line(const double* re, const double* im, int N, int stride,
                      const double* ct, const double* st, double* out) {
  for (int j = 0; j < N; ++j) {
    double s = 0;
    for (int k = 0; k < N; ++k) {
      int t = (j * k) % N;
      s += re[k] * ct[t] - im[k] * st[t];
    }
    out[j * stride] = s;
  }
}

struct LineSet {
  int count, stride, offset_step;  // line l starts at l*offset_step
};

/// Lines of a row-major (n0, n1) array running along the given axis.
inline LineSet lines(const PeriodicGrid& g, int axis) {
  if (g.dim() == 1) return {1, 1, 0};
  if (axis == 0) return {g.size(1), g.size(1), 1};
  return {g.size(0), 1, g.size(1)};
}

}  // namespace detail

/// Exact derivative of the trigonometric interpolant along one axis. The
/// Nyquist bin is dropped: its interpolant derivative vanishes at the nodes
/// and keeping it would make the result complex.
template <class T>
GridFunctionT<T> spectral_derivative(const GridFunctionT<T>& f, int axis = 0) {
  const PeriodicGrid& g = f.grid;
  if (axis < 0 || axis >= g.dim()) throw degree_error("derivative axis out of range");
  require_finite(f, "spectral_derivative");
  int N = g.size(axis);
  const double* ct = g.cos_table(axis);
  const double* st = g.sin_table(axis);
  auto ls = detail::lines(g, axis);

  GridFunctionT<T> out(g);
  std::vector<double> chan(g.total()), re(N), im(N), dre(N), dim_(N), line(N);
  for (int c = 0; c < channels<T>::count; ++c) {
    for (int i = 0; i < g.total(); ++i) chan[i] = channels<T>::get(f.v[i], c);
    for (int l = 0; l < ls.count; ++l) {
      double* base = chan.data() + l * ls.offset_step;
      detail::dft_line(base, nullptr, N, ls.stride, ct, st, re.data(), im.data());
      for (int k = 0; k < N; ++k) {
        int m = g.wavenumber(axis, k);
        if (m == N / 2) m = 0;
        dre[k] = -double(m) * im[k];
        dim_[k] = double(m) * re[k];
      }
      detail::idft_line(dre.data(), dim_.data(), N, 1, ct, st, line.data());
      for (int j = 0; j < N; ++j) chan[(l * ls.offset_step) + j * ls.stride] = line[j];
    }
    for (int i = 0; i < g.total(); ++i) channels<T>::set(out.v[i], c, chan[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trigonometric interpolation: direct series evaluation, no FFT shortcuts.
// ---------------------------------------------------------------------------

template <class T>
struct TrigCoeffs {
  PeriodicGrid grid;
  std::vector<T> re, im;  // bin layout identical to the node layout

  explicit TrigCoeffs(const GridFunctionT<T>& f) : grid(f.grid) {
    require_finite(f, "interp");
    int total = grid.total();
    re.assign(total, T{});
    im.assign(total, T{});
    std::vector<double> cre(total), cim(total), tre, tim;
    for (int c = 0; c < channels<T>::count; ++c) {
      for (int i = 0; i < total; ++i) { cre[i] = channels<T>::get(f.v[i], c); cim[i] = 0.0; }
      for (int axis = 0; axis < grid.dim(); ++axis) {
        int N = grid.size(axis);
        auto ls = detail::lines(grid, axis);
        tre.resize(N); tim.resize(N);
        for (int l = 0; l < ls.count; ++l) {
          double* br = cre.data() + l * ls.offset_step;
          double* bi = cim.data() + l * ls.offset_step;
          detail::dft_line(br, bi, N, ls.stride, grid.cos_table(axis), grid.sin_table(axis),
                           tre.data(), tim.data());
          for (int j = 0; j < N; ++j) { br[j * ls.stride] = tre[j]; bi[j * ls.stride] = tim[j]; }
        }
      }
      for (int i = 0; i < total; ++i) {
        channels<T>::set(re[i], c, cre[i]);
        channels<T>::set(im[i], c, cim[i]);
      }
    }
  }
};

namespace detail {

/// cos(m*x), sin(m*x) for m = 0..half via the angle addition recurrence.
template <class S>
void harmonic_tables(const S& x, int half, std::vector<S>& C, std::vector<S>& Sn) {
  C.resize(half + 1);
  Sn.resize(half + 1);
  C[0] = S(1.0);
  Sn[0] = S(0.0);
  if (half == 0) return;
  S c1 = cos(x), s1 = sin(x);
  C[1] = c1;
  Sn[1] = s1;
  for (int m = 2; m <= half; ++m) {
    C[m] = C[m - 1] * c1 - Sn[m - 1] * s1;
    Sn[m] = Sn[m - 1] * c1 + C[m - 1] * s1;
  }
}

}  // namespace detail

/// Evaluate the interpolant of a 1d coefficient set at x (any scalar type).
template <class T, class S>
auto interp_eval1(const TrigCoeffs<T>& tc, const S& x) {
  using R = decltype(std::declval<T>() * std::declval<S>());
  int N = tc.grid.size(0);
  std::vector<S> C, Sn;
  detail::harmonic_tables(x, N / 2, C, Sn);
  R acc{};
  for (int k = 0; k < N; ++k) {
    int m = tc.grid.wavenumber(0, k);
    int am = m < 0 ? -m : m;
    S cc = C[am];
    S ss = m < 0 ? S(-1.0) * Sn[am] : Sn[am];
    acc += tc.re[k] * cc - tc.im[k] * ss;
  }
  return acc;
}

/// Evaluate the interpolant of a 2d coefficient set at (x, y).
template <class T, class S>
auto interp_eval2(const TrigCoeffs<T>& tc, const S& x, const S& y) {
  using R = decltype(std::declval<T>() * std::declval<S>());
  int N0 = tc.grid.size(0), N1 = tc.grid.size(1);
  std::vector<S> C0, S0, C1, S1;
  detail::harmonic_tables(x, N0 / 2, C0, S0);
  detail::harmonic_tables(y, N1 / 2, C1, S1);
  R acc{};
  for (int k0 = 0; k0 < N0; ++k0) {
    int m0 = tc.grid.wavenumber(0, k0);
    int a0 = m0 < 0 ? -m0 : m0;
    R Ar{}, Ai{};
    const T* rerow = tc.re.data() + k0 * N1;
    const T* imrow = tc.im.data() + k0 * N1;
    for (int k1 = 0; k1 < N1; ++k1) {
      int m1 = tc.grid.wavenumber(1, k1);
      int a1 = m1 < 0 ? -m1 : m1;
      S c1 = C1[a1];
      S s1 = m1 < 0 ? S(-1.0) * S1[a1] : S1[a1];
      Ar += rerow[k1] * c1 - imrow[k1] * s1;
      Ai += rerow[k1] * s1 + imrow[k1] * c1;
    }
    S c0 = C0[a0];
    S s0 = m0 < 0 ? S(-1.0) * S0[a0] : S0[a0];
    acc += Ar * c0 - Ai * s0;
  }
  return acc;
}

namespace detail {

/// Bin index if x is exactly a stored node coordinate, else -1.
inline int exact_node(const PeriodicGrid& g, int axis, double x) {
  double h = two_pi / g.size(axis);
  int j = int(std::lround(x / h));
  if (j >= 0 && j < g.size(axis) && g.node(axis, j) == x) return j;
  return -1;
}

}  // namespace detail

/// Interpolate a 1d grid function at an arbitrary point. At node coordinates
/// the stored value is returned unchanged.
template <class T, class S>
auto interp(const GridFunctionT<T>& f, const S& x) {
  if (f.grid.dim() != 1) throw degree_error("interp arity does not match grid dimension");
  if constexpr (std::is_same_v<S, double>) {
    int j = detail::exact_node(f.grid, 0, x);
    if (j >= 0) {
      using R = decltype(std::declval<T>() * std::declval<S>());
      return R(f.v[j]);
    }
  }
  TrigCoeffs<T> tc(f);
  return interp_eval1(tc, x);
}

template <class T, class S>
auto interp(const GridFunctionT<T>& f, const S& x, const S& y) {
  if (f.grid.dim() != 2) throw degree_error("interp arity does not match grid dimension");
  if constexpr (std::is_same_v<S, double>) {
    int i = detail::exact_node(f.grid, 0, x);
    int j = detail::exact_node(f.grid, 1, y);
    if (i >= 0 && j >= 0) {
      using R = decltype(std::declval<T>() * std::declval<S>());
      return R(f.at(i, j));
    }
  }
  TrigCoeffs<T> tc(f);
  return interp_eval2(tc, x, y);
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

/// Full-manifold integral: the rectangle rule, exact for band-limited data.
template <class T>
T quadrature(const GridFunctionT<T>& f) {
  require_finite(f, "quadrature");
  T s{};
  for (const T& x : f.v) s += x;
  return s * f.grid.cell_volume();
}

namespace detail {

inline void check_window(double a, double b) {
  if (!(a >= 0.0) || !(b <= two_pi + 1e-12) || !(a <= b))
    throw invalid_region_error("integration window must satisfy 0 <= a <= b <= 2*pi");
}

/// Exact integral of the interpolant of a 1d coefficient set over [a, b].
template <class T>
T window_integral(const TrigCoeffs<T>& tc, double a, double b) {
  int N = tc.grid.size(0);
  T acc = tc.re[0] * (b - a);
  for (int k = 1; k < N; ++k) {
    int m = tc.grid.wavenumber(0, k);
    double dm = double(m);
    acc += tc.re[k] * ((std::sin(dm * b) - std::sin(dm * a)) / dm) +
           tc.im[k] * ((std::cos(dm * b) - std::cos(dm * a)) / dm);
  }
  return acc;
}

}  // namespace detail

/// Integral over a coordinate window: [a,b] on the circle; the band
/// a <= y <= b (full x circle) on the torus. Exact for the interpolant.
template <class T>
T quadrature_on(const GridFunctionT<T>& f, double a, double b) {
  require_finite(f, "quadrature_on");
  detail::check_window(a, b);
  if (f.grid.dim() == 1) {
    TrigCoeffs<T> tc(f);
    return detail::window_integral(tc, a, b);
  }
  // integrate out the x circle, then window in y
  PeriodicGrid gy = PeriodicGrid::line(f.grid.size(1));
  GridFunctionT<T> fy(gy);
  double hx = two_pi / f.grid.size(0);
  for (int j = 0; j < f.grid.size(1); ++j) {
    T s{};
    for (int i = 0; i < f.grid.size(0); ++i) s += f.at(i, j);
    fy.v[j] = s * hx;
  }
  TrigCoeffs<T> tc(fy);
  return detail::window_integral(tc, a, b);
}

}  // namespace covphase
