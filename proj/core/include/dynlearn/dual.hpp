#pragma once

#include <cmath>

namespace dynlearn {

/// Forward-mode scalar with one tangent slot. Nesting (Dual<Dual<double>>)
/// yields exact second derivatives; the analytic plant closures use this to
/// expose mass jacobians and potential gradients without hand-derived
/// Hessians of the kinematics.
template <typename T>
struct Dual {
  T v{};
  T d{};

  Dual() = default;
  Dual(double value) : v(value), d() {}  // NOLINT: implicit by design
  Dual(T value, T deriv) : v(value), d(deriv) {}
};

inline double leading(double x) { return x; }
template <typename T>
double leading(const Dual<T>& x) {
  return leading(x.v);
}

template <typename T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return {a.v + b.v, a.d + b.d};
}
template <typename T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  return {a.v - b.v, a.d - b.d};
}
template <typename T>
Dual<T> operator-(const Dual<T>& a) {
  return {-a.v, -a.d};
}
template <typename T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <typename T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  const T q = a.v / b.v;
  return {q, (a.d - q * b.d) / b.v};
}

template <typename T>
Dual<T> operator+(const Dual<T>& a, double b) { return a + Dual<T>(b); }
template <typename T>
Dual<T> operator+(double a, const Dual<T>& b) { return Dual<T>(a) + b; }
template <typename T>
Dual<T> operator-(const Dual<T>& a, double b) { return a - Dual<T>(b); }
template <typename T>
Dual<T> operator-(double a, const Dual<T>& b) { return Dual<T>(a) - b; }
template <typename T>
Dual<T> operator*(const Dual<T>& a, double b) { return a * Dual<T>(b); }
template <typename T>
Dual<T> operator*(double a, const Dual<T>& b) { return Dual<T>(a) * b; }
template <typename T>
Dual<T> operator/(const Dual<T>& a, double b) { return a / Dual<T>(b); }
template <typename T>
Dual<T> operator/(double a, const Dual<T>& b) { return Dual<T>(a) / b; }

using std::cos;
using std::sin;
using std::sqrt;

template <typename T>
Dual<T> sin(const Dual<T>& x) {
  return {sin(x.v), cos(x.v) * x.d};
}
template <typename T>
Dual<T> cos(const Dual<T>& x) {
  return {cos(x.v), -sin(x.v) * x.d};
}
template <typename T>
Dual<T> sqrt(const Dual<T>& x) {
  const T r = sqrt(x.v);
  return {r, x.d / (2.0 * r)};
}

/// hs(t) = sin(sqrt(t)) / sqrt(t), continued through t = 0 by its series.
template <typename T>
T sinc_sqrt(const T& t) {
  if (leading(t) < 1e-2) {
    // 1 - t/6 + t^2/120 - t^3/5040 + t^4/362880, next term < 3e-18 at t=1e-2
    return 1.0 + t * (-1.0 / 6.0 +
                      t * (1.0 / 120.0 + t * (-1.0 / 5040.0 + t * (1.0 / 362880.0))));
  }
  const T r = sqrt(t);
  return sin(r) / r;
}

/// hc(t) = (1 - cos(sqrt(t))) / t, continued through t = 0 by its series.
template <typename T>
T versine_sqrt(const T& t) {
  if (leading(t) < 1e-2) {
    return 0.5 + t * (-1.0 / 24.0 +
                      t * (1.0 / 720.0 + t * (-1.0 / 40320.0 + t * (1.0 / 3628800.0))));
  }
  return (1.0 - cos(sqrt(t))) / t;
}

}  // namespace dynlearn
