#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <Eigen/Core>

#include "moce/ad/tape.hpp"

namespace moce::ad {

/// Scalar carrying a value and (optionally) a node on the active tape.
///
/// A Var constructed from a double is a constant: it never touches the tape,
/// and operations between constants stay constants. Only variables created
/// with Var::variable() participate in differentiation.
struct Var {
  double val = 0.0;
  std::int32_t id = -1;

  Var() = default;
  Var(double v) : val(v) {}  // NOLINT(google-explicit-constructor)
  Var(double v, std::int32_t node) : val(v), id(node) {}

  static Var variable(double v) {
    Tape* t = active_tape();
    if (t == nullptr) throw std::logic_error("ad::Var::variable: no active tape");
    return {v, t->leaf()};
  }

  bool is_constant() const { return id < 0; }

  Var& operator+=(const Var& o);
  Var& operator-=(const Var& o);
  Var& operator*=(const Var& o);
  Var& operator/=(const Var& o);
};

namespace detail {
inline Tape& tape() {
  Tape* t = active_tape();
  if (t == nullptr) throw std::logic_error("ad::Var: operation on a variable without an active tape");
  return *t;
}

inline Var unary(const Var& x, double value, double dx) {
  if (x.is_constant()) return Var(value);
  return {value, tape().unary(x.id, dx)};
}

inline Var binary(const Var& x, const Var& y, double value, double dx, double dy) {
  if (x.is_constant()) {
    if (y.is_constant()) return Var(value);
    return {value, tape().unary(y.id, dy)};
  }
  if (y.is_constant()) return {value, tape().unary(x.id, dx)};
  return {value, tape().binary(x.id, dx, y.id, dy)};
}
}  // namespace detail

inline Var operator+(const Var& x, const Var& y) { return detail::binary(x, y, x.val + y.val, 1.0, 1.0); }
inline Var operator-(const Var& x, const Var& y) { return detail::binary(x, y, x.val - y.val, 1.0, -1.0); }
inline Var operator*(const Var& x, const Var& y) { return detail::binary(x, y, x.val * y.val, y.val, x.val); }
inline Var operator/(const Var& x, const Var& y) {
  const double inv = 1.0 / y.val;
  return detail::binary(x, y, x.val * inv, inv, -x.val * inv * inv);
}
inline Var operator-(const Var& x) { return detail::unary(x, -x.val, -1.0); }
inline Var operator+(const Var& x) { return x; }

inline Var operator+(const Var& x, double y) { return detail::unary(x, x.val + y, 1.0); }
inline Var operator+(double x, const Var& y) { return detail::unary(y, x + y.val, 1.0); }
inline Var operator-(const Var& x, double y) { return detail::unary(x, x.val - y, 1.0); }
inline Var operator-(double x, const Var& y) { return detail::unary(y, x - y.val, -1.0); }
inline Var operator*(const Var& x, double y) { return detail::unary(x, x.val * y, y); }
inline Var operator*(double x, const Var& y) { return detail::unary(y, x * y.val, x); }
inline Var operator/(const Var& x, double y) { return detail::unary(x, x.val / y, 1.0 / y); }
inline Var operator/(double x, const Var& y) { return detail::unary(y, x / y.val, -x / (y.val * y.val)); }

inline Var& Var::operator+=(const Var& o) { return *this = *this + o; }
inline Var& Var::operator-=(const Var& o) { return *this = *this - o; }
inline Var& Var::operator*=(const Var& o) { return *this = *this * o; }
inline Var& Var::operator/=(const Var& o) { return *this = *this / o; }

// Comparisons act on values; control flow is never differentiated.
inline bool operator<(const Var& x, const Var& y) { return x.val < y.val; }
inline bool operator>(const Var& x, const Var& y) { return x.val > y.val; }
inline bool operator<=(const Var& x, const Var& y) { return x.val <= y.val; }
inline bool operator>=(const Var& x, const Var& y) { return x.val >= y.val; }
inline bool operator==(const Var& x, const Var& y) { return x.val == y.val; }
inline bool operator!=(const Var& x, const Var& y) { return x.val != y.val; }

inline Var sqrt(const Var& x) {
  const double s = std::sqrt(x.val);
  return detail::unary(x, s, 0.5 / s);
}
inline Var exp(const Var& x) {
  const double e = std::exp(x.val);
  return detail::unary(x, e, e);
}
inline Var log(const Var& x) { return detail::unary(x, std::log(x.val), 1.0 / x.val); }
inline Var log1p(const Var& x) { return detail::unary(x, std::log1p(x.val), 1.0 / (1.0 + x.val)); }
inline Var sinh(const Var& x) { return detail::unary(x, std::sinh(x.val), std::cosh(x.val)); }
inline Var cosh(const Var& x) { return detail::unary(x, std::cosh(x.val), std::sinh(x.val)); }
inline Var tanh(const Var& x) {
  const double t = std::tanh(x.val);
  return detail::unary(x, t, 1.0 - t * t);
}
inline Var asinh(const Var& x) { return detail::unary(x, std::asinh(x.val), 1.0 / std::sqrt(x.val * x.val + 1.0)); }
inline Var acosh(const Var& x) { return detail::unary(x, std::acosh(x.val), 1.0 / std::sqrt(x.val * x.val - 1.0)); }
inline Var abs(const Var& x) { return detail::unary(x, std::abs(x.val), x.val < 0.0 ? -1.0 : 1.0); }
inline Var pow(const Var& x, double p) {
  return detail::unary(x, std::pow(x.val, p), p * std::pow(x.val, p - 1.0));
}
inline Var abs2(const Var& x) { return x * x; }
inline Var conj(const Var& x) { return x; }
inline Var real(const Var& x) { return x; }
inline Var imag(const Var&) { return Var(0.0); }
inline Var max(const Var& x, const Var& y) { return x.val >= y.val ? x : y; }
inline Var min(const Var& x, const Var& y) { return x.val <= y.val ? x : y; }
inline bool isfinite(const Var& x) { return std::isfinite(x.val); }
inline bool isnan(const Var& x) { return std::isnan(x.val); }
inline bool isinf(const Var& x) { return std::isinf(x.val); }

inline std::ostream& operator<<(std::ostream& os, const Var& x) { return os << x.val; }

/// Value of a scalar with any derivative information dropped.
inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.val; }

}  // namespace moce::ad

namespace Eigen {

template <>
struct NumTraits<moce::ad::Var> : NumTraits<double> {
  using Real = moce::ad::Var;
  using NonInteger = moce::ad::Var;
  using Nested = moce::ad::Var;
  using Literal = moce::ad::Var;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 2,
    MulCost = 2,
  };
  static inline Real epsilon() { return Real(std::numeric_limits<double>::epsilon()); }
  static inline Real dummy_precision() { return Real(1e-12); }
  static inline Real highest() { return Real(std::numeric_limits<double>::max()); }
  static inline Real lowest() { return Real(std::numeric_limits<double>::lowest()); }
  static inline int digits10() { return std::numeric_limits<double>::digits10; }
};

template <typename BinaryOp>
struct ScalarBinaryOpTraits<moce::ad::Var, double, BinaryOp> {
  using ReturnType = moce::ad::Var;
};
template <typename BinaryOp>
struct ScalarBinaryOpTraits<double, moce::ad::Var, BinaryOp> {
  using ReturnType = moce::ad::Var;
};

}  // namespace Eigen
