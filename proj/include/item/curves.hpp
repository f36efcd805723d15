#pragma once

// The two bounded response-curve families and their parameter derivatives.
//
//   logistic  C(x) = 1 / (1 + exp(-a^2 (x - b)))
//   gaussian  G(x) = exp(-(x - a)^2 / (2 b^2))
//
// All functions are templated on the scalar so they can be used with
// Eigen arrays through unaryExpr as well as plain doubles.

#include <cmath>

#include "item/error.hpp"
#include "item/model.hpp"

namespace item {

template <typename Scalar>
struct CurveGradient {
  Scalar da;
  Scalar db;
};

template <typename Scalar>
Scalar eval_logistic(Scalar a, Scalar b, Scalar x) {
  using std::exp;
  const Scalar z = a * a * (x - b);
  // Branch on the sign so exp never overflows into inf/inf.
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-z));
  const Scalar e = exp(z);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
CurveGradient<Scalar> grad_logistic(Scalar a, Scalar b, Scalar x) {
  const Scalar c = eval_logistic(a, b, x);
  const Scalar cc = c * (Scalar(1) - c);
  return {Scalar(2) * a * (x - b) * cc, -a * a * cc};
}

template <typename Scalar>
void require_width(Scalar b) {
  if (b == Scalar(0)) throw Error(ErrorKind::ZeroWidth, "gaussian width must be non-zero");
}

template <typename Scalar>
Scalar eval_gaussian(Scalar a, Scalar b, Scalar x) {
  using std::exp;
  require_width(b);
  const Scalar d = x - a;
  return exp(-(d * d) / (Scalar(2) * b * b));
}

template <typename Scalar>
CurveGradient<Scalar> grad_gaussian(Scalar a, Scalar b, Scalar x) {
  require_width(b);
  const Scalar g = eval_gaussian(a, b, x);
  const Scalar d = x - a;
  const Scalar b2 = b * b;
  return {d / b2 * g, d * d / (b2 * b) * g};
}

/// Curve value and both parameter derivatives in one pass.
struct CurvePoint {
  double value;
  double da;
  double db;
};

inline CurvePoint curve_point(CurveFamily family, double a, double b, double x) {
  if (family == CurveFamily::Logistic) {
    const double c = eval_logistic(a, b, x);
    const double cc = c * (1.0 - c);
    return {c, 2.0 * a * (x - b) * cc, -a * a * cc};
  }
  const double g = eval_gaussian(a, b, x);
  const double d = x - a;
  const double b2 = b * b;
  return {g, d / b2 * g, d * d / (b2 * b) * g};
}

inline double eval_curve(CurveFamily family, double a, double b, double x) {
  return family == CurveFamily::Logistic ? eval_logistic(a, b, x) : eval_gaussian(a, b, x);
}

inline double eval_curve(const CurveSpec& c, double x) { return eval_curve(c.family, c.a, c.b, x); }

/// Curve applied elementwise to a column of regressor values.
template <typename Derived>
Eigen::ArrayXd eval_curve(const CurveSpec& c, const Eigen::DenseBase<Derived>& x) {
  return x.derived().unaryExpr([&c](double v) { return eval_curve(c, v); }).array();
}

/// Canonical sign convention: logistic slope root and gaussian width are
/// stored non-negative, since both enter squared.
inline CurveSpec canonical(CurveSpec c) {
  if (c.family == CurveFamily::Logistic) {
    c.a = std::abs(c.a);
  } else {
    c.b = std::abs(c.b);
  }
  return c;
}

}  // namespace item
