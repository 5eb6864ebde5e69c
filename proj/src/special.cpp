/*
 * Copyright 2026 The evireg authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "evireg/special.hpp"

#include <cmath>
#include <string>

#include "evireg/errors.hpp"

namespace evireg {

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr double kLnSqrt2Pi = 0.91893853320467274178032973640562;
}  // namespace

// Lanczos, g=7, 9 coefficients. Only the positive half-line is needed here,
// so no reflection branch.
double lgamma_pos(double x) {
  if (!(x > 0.0)) {
    throw DomainError("lgamma: argument must be positive, got " + std::to_string(x));
  }
  static const double coef[9] = {
      0.99999999999980993,    676.5203681218851,     -1259.1392167224028,
      771.32342877765313,     -176.61502916214059,   12.507343278686905,
      -0.13857109526572012,   9.9843695780195716e-6, 1.5056327351493116e-7};
  const double z = x - 1.0;
  double a = coef[0];
  for (int i = 1; i < 9; ++i) a += coef[i] / (z + i);
  const double t = z + 7.5;  // g + 0.5
  return kLnSqrt2Pi + (z + 0.5) * std::log(t) - t + std::log(a);
}

// psi(x) = psi(x + 1) - 1/x pushed to x >= 6, then
// psi(x) ~ ln x - 1/(2x) - sum B_2n / (2n x^(2n)).
double digamma(double x) {
  if (!(x > 0.0)) {
    throw DomainError("digamma: argument must be positive, got " + std::to_string(x));
  }
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli terms through x^-12.
  const double series = inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
  return result + std::log(x) - 0.5 * inv - series;
}

namespace {

// Continued fraction for I_x(a,b), modified Lentz.
double incbeta_cf(double x, double a, double b) {
  const double tiny = 1e-300;
  const double eps = 1e-15;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 400; ++m) {
    const int m2 = 2 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw DomainError("incomplete beta: a and b must be positive");
  }
  if (!(x >= 0.0 && x <= 1.0)) {
    throw DomainError("incomplete beta: x must lie in [0,1], got " + std::to_string(x));
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double lbeta = lgamma_pos(a) + lgamma_pos(b) - lgamma_pos(a + b);
  const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - lbeta);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * incbeta_cf(x, a, b) / a;
  }
  return 1.0 - std::exp(b * std::log1p(-x) + a * std::log(x) - lbeta) *
                   incbeta_cf(1.0 - x, b, a) / b;
}

double student_t_cdf(double x, double dof) {
  if (!(dof > 0.0)) throw DomainError("student_t_cdf: dof must be positive");
  if (x == 0.0) return 0.5;
  const double ib = regularized_incomplete_beta(dof / (dof + x * x), 0.5 * dof, 0.5);
  return x > 0.0 ? 1.0 - 0.5 * ib : 0.5 * ib;
}

double student_t_quantile(double dof, double prob) {
  if (!(dof > 0.0)) throw DomainError("student_t_quantile: dof must be positive");
  if (!(prob > 0.0 && prob < 1.0)) {
    throw DomainError("student_t_quantile: prob must lie in (0,1), got " +
                      std::to_string(prob));
  }
  if (prob == 0.5) return 0.0;
  // Bracket by doubling, then bisect until the CDF matches to 1e-10.
  double lo = -1.0, hi = 1.0;
  while (student_t_cdf(lo, dof) > prob) lo *= 2.0;
  while (student_t_cdf(hi, dof) < prob) hi *= 2.0;
  for (int it = 0; it < 500; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double c = student_t_cdf(mid, dof);
    if (std::fabs(c - prob) < 1e-12 || 0.5 * (hi - lo) < 1e-14 * (1.0 + std::fabs(mid))) {
      return mid;
    }
    if (c < prob) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / 1.4142135623730950488016887242097);
}

// Acklam's rational approximation refined with one Halley step.
double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) {
    throw DomainError("normal_quantile: prob must lie in (0,1), got " +
                      std::to_string(prob));
  }
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (prob < plow) {
    const double q = std::sqrt(-2.0 * std::log(prob));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (prob <= 1.0 - plow) {
    const double q = prob - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - prob));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement.
  const double e = normal_cdf(x) - prob;
  const double u = e * std::sqrt(2.0 * kPi) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace evireg
