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

#ifndef EVIREG_SPECIAL_HPP_
#define EVIREG_SPECIAL_HPP_

namespace evireg {

// log Gamma(x) for x > 0, Lanczos approximation (g=7, 9 coefficients).
// Throws DomainError for x <= 0.
double lgamma_pos(double x);

// digamma(x) for x > 0: recurrence up to x >= 6, then asymptotic series.
double digamma(double x);

// Regularized incomplete beta I_x(a, b), continued fraction (modified Lentz).
double regularized_incomplete_beta(double x, double a, double b);

// Student-t CDF with `dof` degrees of freedom.
double student_t_cdf(double x, double dof);

// Student-t quantile: q with CDF(q) = prob, |CDF(q) - prob| < 1e-10,
// by bisection on the closed-form CDF. prob must lie in (0, 1), dof > 0.
double student_t_quantile(double dof, double prob);

// Standard normal CDF and quantile (rational approximation plus one
// Halley refinement against erfc).
double normal_cdf(double x);
double normal_quantile(double prob);

// Overflow-safe softplus: log(1 + exp(x)), = x for x > 30.
double softplus(double x);
double sigmoid(double x);

}  // namespace evireg

#endif  // EVIREG_SPECIAL_HPP_
