#pragma once

// Forward-mode dual numbers with a compile-time number of tangent
// directions. Nesting Dual<Dual<double, N>, N> gives forward-over-forward
// second derivatives; the outermost layer is always the most recently
// introduced differentiation variable, so nested derivatives never mix.

#include <array>
#include <cmath>
#include <cstddef>
#include <type_traits>

#include "basinlab/errors.hpp"

namespace basinlab::ad {

// Differentiating a Jacobian of a gradient-valued map (Jacobian of the
// unrolled corrections) needs three layers; anything deeper is refused at
// compile time.
inline constexpr int kMaxNesting = 3;

template <class T, std::size_t N>
class Dual;

template <class T>
struct nesting : std::integral_constant<int, 0> {};
template <class T, std::size_t N>
struct nesting<Dual<T, N>> : std::integral_constant<int, 1 + nesting<T>::value> {};
template <class T>
inline constexpr int nesting_v = nesting<T>::value;

template <class T>
struct is_dual : std::false_type {};
template <class T, std::size_t N>
struct is_dual<Dual<T, N>> : std::true_type {};
template <class T>
inline constexpr bool is_dual_v = is_dual<T>::value;

template <class T, std::size_t N>
class Dual {
  static_assert(N > 0, "a dual number needs at least one tangent direction");
  static_assert(nesting_v<T> + 1 <= kMaxNesting,
                "forward-mode nesting deeper than three layers is not supported");

 public:
  using value_type = T;
  static constexpr std::size_t kDirections = N;

  T val{};
  std::array<T, N> eps{};

  constexpr Dual() = default;
  constexpr Dual(const T& v) : val(v) {}  // NOLINT(google-explicit-constructor)
  template <class U = T>
    requires(!std::is_same_v<U, double>)
  constexpr Dual(double c) : val(c) {}  // NOLINT(google-explicit-constructor)

  static Dual variable(const T& v, std::size_t direction) {
    Dual d(v);
    d.eps[direction] = T(1.0);
    return d;
  }

  Dual operator-() const {
    Dual r(-val);
    for (std::size_t k = 0; k < N; ++k) r.eps[k] = -eps[k];
    return r;
  }
  Dual operator+() const { return *this; }

  Dual& operator+=(const Dual& o) {
    val += o.val;
    for (std::size_t k = 0; k < N; ++k) eps[k] += o.eps[k];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    val -= o.val;
    for (std::size_t k = 0; k < N; ++k) eps[k] -= o.eps[k];
    return *this;
  }
  Dual& operator*=(const Dual& o) { return *this = *this * o; }
  Dual& operator/=(const Dual& o) { return *this = *this / o; }
  Dual& operator+=(double c) {
    val += c;
    return *this;
  }
  Dual& operator-=(double c) {
    val -= c;
    return *this;
  }
  Dual& operator*=(double c) {
    val *= c;
    for (std::size_t k = 0; k < N; ++k) eps[k] *= c;
    return *this;
  }
  Dual& operator/=(double c) { return *this *= (1.0 / c); }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator+(Dual a, double c) { return a += c; }
  friend Dual operator+(double c, Dual a) { return a += c; }
  friend Dual operator-(Dual a, double c) { return a -= c; }
  friend Dual operator-(double c, const Dual& a) {
    Dual r = -a;
    r.val += c;
    return r;
  }
  friend Dual operator*(Dual a, double c) { return a *= c; }
  friend Dual operator*(double c, Dual a) { return a *= c; }
  friend Dual operator/(Dual a, double c) { return a /= c; }

  friend Dual operator*(const Dual& a, const Dual& b) {
    Dual r(a.val * b.val);
    for (std::size_t k = 0; k < N; ++k) r.eps[k] = a.val * b.eps[k] + a.eps[k] * b.val;
    return r;
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    Dual r(a.val / b.val);
    for (std::size_t k = 0; k < N; ++k) r.eps[k] = (a.eps[k] - r.val * b.eps[k]) / b.val;
    return r;
  }
  friend Dual operator/(double c, const Dual& b) { return Dual(T(c)) / b; }
};

// Innermost real value.
inline double primal(double x) { return x; }
template <class T, std::size_t N>
double primal(const Dual<T, N>& x) {
  return primal(x.val);
}

namespace detail {
// Applies a scalar function with known derivative: r = f(x), r' = df(x) * x'.
template <class T, std::size_t N>
Dual<T, N> chain(const Dual<T, N>& x, const T& fx, const T& dfx) {
  Dual<T, N> r(fx);
  for (std::size_t k = 0; k < N; ++k) r.eps[k] = dfx * x.eps[k];
  return r;
}
}  // namespace detail

template <class T, std::size_t N>
Dual<T, N> exp(const Dual<T, N>& x) {
  using std::exp;
  T e = exp(x.val);
  return detail::chain(x, e, e);
}

template <class T, std::size_t N>
Dual<T, N> log(const Dual<T, N>& x) {
  using std::log;
  return detail::chain(x, T(log(x.val)), T(1.0 / x.val));
}

template <class T, std::size_t N>
Dual<T, N> log1p(const Dual<T, N>& x) {
  using std::log1p;
  return detail::chain(x, T(log1p(x.val)), T(1.0 / (1.0 + x.val)));
}

template <class T, std::size_t N>
Dual<T, N> sqrt(const Dual<T, N>& x) {
  using std::sqrt;
  T s = sqrt(x.val);
  return detail::chain(x, s, T(0.5 / s));
}

template <class T, std::size_t N>
Dual<T, N> pow(const Dual<T, N>& x, double p) {
  using std::pow;
  return detail::chain(x, T(pow(x.val, p)), T(p * pow(x.val, p - 1.0)));
}

template <class T, std::size_t N>
Dual<T, N> square(const Dual<T, N>& x) {
  return x * x;
}
inline double square(double x) { return x * x; }

// Logistic function and its logarithm, numerically stable in both tails.
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

template <class T, std::size_t N>
Dual<T, N> sigmoid(const Dual<T, N>& x) {
  T s = sigmoid(x.val);
  return detail::chain(x, s, T(s * (1.0 - s)));
}

template <class T, std::size_t N>
Dual<T, N> log_sigmoid(const Dual<T, N>& x) {
  return detail::chain(x, T(log_sigmoid(x.val)), T(sigmoid(-x.val)));
}

// Non-smooth primitives are refused rather than given a one-sided derivative.
template <class T, std::size_t N>
Dual<T, N> abs(const Dual<T, N>&) {
  throw UnsupportedOperation("abs");
}
template <class T, std::size_t N>
Dual<T, N> fabs(const Dual<T, N>&) {
  throw UnsupportedOperation("fabs");
}
template <class T, std::size_t N>
Dual<T, N> floor(const Dual<T, N>&) {
  throw UnsupportedOperation("floor");
}
template <class T, std::size_t N>
Dual<T, N> ceil(const Dual<T, N>&) {
  throw UnsupportedOperation("ceil");
}
template <class T, std::size_t N>
Dual<T, N> round(const Dual<T, N>&) {
  throw UnsupportedOperation("round");
}
template <class T, std::size_t N>
Dual<T, N> fmax(const Dual<T, N>&, const Dual<T, N>&) {
  throw UnsupportedOperation("fmax");
}
template <class T, std::size_t N>
Dual<T, N> fmin(const Dual<T, N>&, const Dual<T, N>&) {
  throw UnsupportedOperation("fmin");
}

inline bool all_finite(double x) { return std::isfinite(x); }
template <class T, std::size_t N>
bool all_finite(const Dual<T, N>& x) {
  if (!all_finite(x.val)) return false;
  for (const auto& e : x.eps)
    if (!all_finite(e)) return false;
  return true;
}

}  // namespace basinlab::ad
