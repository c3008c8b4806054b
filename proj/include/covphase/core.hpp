#pragma once
/// @file core.hpp
/// Error taxonomy, forward-mode dual scalars and channel traits shared by all
/// headers. Dual numbers nest twice (value, first, second directional
/// derivative); every numeric kernel is written against a generic scalar T so
/// the same code path produces values and directional derivatives.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace covphase {

inline constexpr double two_pi = 6.283185307179586476925286766559;

// ---------------------------------------------------------------------------
// Errors. Each invariant breach has its own type so tests can assert on it.
// ---------------------------------------------------------------------------

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite sample data.
struct invalid_data_error : error { using error::error; };
/// Integration window or region outside the chart, or malformed.
struct invalid_region_error : error { using error::error; };
/// Form degree incompatible with the requested operation.
struct degree_error : error { using error::error; };
/// Newton inversion of a map failed to contract.
struct near_singular_diffeo_error : error { using error::error; };
/// Flow left the displacement regime where the graph representation is valid.
struct flow_too_large_error : error { using error::error; };
/// Directional derivative requested where the evaluator is not smooth.
struct differentiation_error : error { using error::error; };
/// Field-space form degree outside the supported range.
struct unsupported_degree_error : error { using error::error; };
/// Clock map not monotone, Jacobian not bounded away from zero.
struct dressing_degenerate_error : error { using error::error; };
/// Expression or config text rejected; carries line/column.
struct parse_error : error {
  int line = 0, col = 0;
  parse_error(const std::string& msg, int l, int c)
      : error(msg + " (line " + std::to_string(l) + ", column " +
              std::to_string(c) + ")"),
        line(l), col(c) {}
};
/// Scenario file references that do not resolve, bad CLI usage.
struct config_error : error { using error::error; };

// ---------------------------------------------------------------------------
// Dual numbers.
// ---------------------------------------------------------------------------

template <class T>
struct Dual {
  T a{};  // value
  T b{};  // derivative

  Dual() = default;
  Dual(double v) : a(v), b{} {}  // NOLINT: implicit lift of constants
  Dual(T va, T vb) : a(va), b(vb) {}
};

using D1 = Dual<double>;
using D2 = Dual<D1>;

template <class T> struct is_dual : std::false_type {};
template <class T> struct is_dual<Dual<T>> : std::true_type {};

/// Value channel, recursively.
inline double val(double x) { return x; }
template <class T> double val(const Dual<T>& x) { return val(x.a); }

template <class T> Dual<T> operator+(const Dual<T>& x, const Dual<T>& y) { return {x.a + y.a, x.b + y.b}; }
template <class T> Dual<T> operator-(const Dual<T>& x, const Dual<T>& y) { return {x.a - y.a, x.b - y.b}; }
template <class T> Dual<T> operator-(const Dual<T>& x) { return {-x.a, -x.b}; }
template <class T> Dual<T> operator*(const Dual<T>& x, const Dual<T>& y) {
  return {x.a * y.a, x.a * y.b + x.b * y.a};
}
template <class T> Dual<T> operator/(const Dual<T>& x, const Dual<T>& y) {
  T q = x.a / y.a;
  return {q, (x.b - q * y.b) / y.a};
}

template <class T> Dual<T> operator+(const Dual<T>& x, double c) { return {x.a + c, x.b}; }
template <class T> Dual<T> operator+(double c, const Dual<T>& x) { return {x.a + c, x.b}; }
template <class T> Dual<T> operator-(const Dual<T>& x, double c) { return {x.a - c, x.b}; }
template <class T> Dual<T> operator-(double c, const Dual<T>& x) { return {c - x.a, -x.b}; }
template <class T> Dual<T> operator*(const Dual<T>& x, double c) { return {x.a * c, x.b * c}; }
template <class T> Dual<T> operator*(double c, const Dual<T>& x) { return {x.a * c, x.b * c}; }
template <class T> Dual<T> operator/(const Dual<T>& x, double c) { return {x.a / c, x.b / c}; }
template <class T> Dual<T> operator/(double c, const Dual<T>& x) { return Dual<T>(c) / x; }

template <class T> Dual<T>& operator+=(Dual<T>& x, const Dual<T>& y) { x = x + y; return x; }
template <class T> Dual<T>& operator-=(Dual<T>& x, const Dual<T>& y) { x = x - y; return x; }
template <class T> Dual<T>& operator*=(Dual<T>& x, const Dual<T>& y) { x = x * y; return x; }
template <class T> Dual<T>& operator/=(Dual<T>& x, const Dual<T>& y) { x = x / y; return x; }

using std::cos; using std::exp; using std::log; using std::sin; using std::sqrt;

template <class T> Dual<T> sin(const Dual<T>& x) { return {sin(x.a), cos(x.a) * x.b}; }
template <class T> Dual<T> cos(const Dual<T>& x) { return {cos(x.a), -(sin(x.a) * x.b)}; }
template <class T> Dual<T> exp(const Dual<T>& x) { T e = exp(x.a); return {e, e * x.b}; }
template <class T> Dual<T> log(const Dual<T>& x) { return {log(x.a), x.b / x.a}; }
template <class T> Dual<T> sqrt(const Dual<T>& x) { T r = sqrt(x.a); return {r, x.b / (2.0 * r)}; }

/// Integer power by repeated multiplication; exponent may be negative.
template <class T>
T powi(const T& x, int n) {
  if (n < 0) return 1.0 / powi(x, -n);
  T r(1.0), base = x;
  for (int k = n; k > 0; k >>= 1) {
    if (k & 1) r = r * base;
    base = base * base;
  }
  return r;
}

/// Reduce to [0, 2*pi). Piecewise constant shift: derivative channels pass
/// through untouched.
inline double wrap_angle(double x) {
  double y = x - two_pi * std::floor(x / two_pi);
  if (y >= two_pi) y -= two_pi;  // guard against roundoff at the seam
  return y >= 0 ? y : 0.0;
}
template <class T>
Dual<T> wrap_angle(const Dual<T>& x) {
  double shift = val(x) - wrap_angle(val(x));
  return {x.a - shift, x.b};
}

// ---------------------------------------------------------------------------
// Channel access: a scalar T is a fixed bundle of double channels, and every
// R-linear map with constant coefficients acts channel by channel.
// ---------------------------------------------------------------------------

template <class T> struct channels;
template <> struct channels<double> {
  static constexpr int count = 1;
  static double get(double x, int) { return x; }
  static void set(double& x, int, double v) { x = v; }
};
template <class T> struct channels<Dual<T>> {
  static constexpr int count = 2 * channels<T>::count;
  static double get(const Dual<T>& x, int i) {
    constexpr int h = channels<T>::count;
    return i < h ? channels<T>::get(x.a, i) : channels<T>::get(x.b, i - h);
  }
  static void set(Dual<T>& x, int i, double v) {
    constexpr int h = channels<T>::count;
    if (i < h) channels<T>::set(x.a, i, v);
    else channels<T>::set(x.b, i - h, v);
  }
};

template <class T>
bool finite(const T& x) {
  for (int i = 0; i < channels<T>::count; ++i)
    if (!std::isfinite(channels<T>::get(x, i))) return false;
  return true;
}

/// Magnitude across all channels, for convergence tests and residual norms.
template <class T>
double chan_abs(const T& x) {
  double m = 0;
  for (int i = 0; i < channels<T>::count; ++i)
    m = std::max(m, std::abs(channels<T>::get(x, i)));
  return m;
}

}  // namespace covphase
