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

#include "evireg/nig.hpp"

#include <cmath>
#include <string>

#include "evireg/errors.hpp"
#include "evireg/special.hpp"

namespace evireg {

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
}

NIGParams::NIGParams(double gamma_, double nu_, double alpha_, double beta_)
    : gamma(gamma_), nu(nu_), alpha(alpha_), beta(beta_) {
  if (!(nu > 0.0)) throw DomainError("NIGParams: nu must be > 0, got " + std::to_string(nu));
  if (!(alpha > 1.0)) throw DomainError("NIGParams: alpha must be > 1, got " + std::to_string(alpha));
  if (!(beta > 0.0)) throw DomainError("NIGParams: beta must be > 0, got " + std::to_string(beta));
}

UncertaintySummary decompose(const NIGParams& p) {
  if (!(p.alpha > 1.0)) {
    throw DomainError("decompose: variance undefined for alpha <= 1");
  }
  UncertaintySummary s;
  s.mean = p.gamma;
  s.aleatoric_var = p.beta / (p.alpha - 1.0);
  s.epistemic_scale = 1.0 / p.nu;
  s.total_var = s.aleatoric_var * s.epistemic_scale;
  return s;
}

UncertaintySummary summarize(const NIGParams& p, double confidence,
                             const YearScale& scale) {
  UncertaintySummary s = decompose(p);
  s.confidence = confidence;
  s.mean_years = scale.denormalize(p.gamma);
  s.std_years = std::sqrt(s.total_var) * scale.span;
  auto [lo, hi] = predictive_interval(p, confidence);
  s.interval_low_years = scale.denormalize(lo);
  s.interval_high_years = scale.denormalize(hi);
  return s;
}

double nig_nll(const NIGParams& p, double y) {
  const double omega = 2.0 * p.beta * (1.0 + p.nu);
  const double resid = y - p.gamma;
  return 0.5 * std::log(kPi / p.nu) - p.alpha * std::log(omega) +
         (p.alpha + 0.5) * std::log(resid * resid * p.nu + omega) +
         lgamma_pos(p.alpha) - lgamma_pos(p.alpha + 0.5);
}

double evidence_regularizer(const NIGParams& p, double y, double lambda) {
  if (!(lambda >= 0.0)) throw DomainError("evidence_regularizer: lambda must be >= 0");
  return lambda * std::fabs(y - p.gamma) * (2.0 * p.nu + p.alpha);
}

double evidential_loss(const NIGParams& p, double y, double lambda) {
  return nig_nll(p, y) + evidence_regularizer(p, y, lambda);
}

double predictive_scale(const NIGParams& p) {
  return std::sqrt(p.beta * (1.0 + p.nu) / (p.nu * p.alpha));
}

std::pair<double, double> predictive_interval(const NIGParams& p, double confidence) {
  if (!(confidence >= 0.0 && confidence < 1.0)) {
    throw DomainError("predictive_interval: confidence must lie in [0,1), got " +
                      std::to_string(confidence));
  }
  const double s = predictive_scale(p);
  const double tq = confidence == 0.0
                        ? 0.0
                        : student_t_quantile(2.0 * p.alpha, 0.5 * (1.0 + confidence));
  return {p.gamma - tq * s, p.gamma + tq * s};
}

NodeId build_nig_nll(Tape& t, NodeId gamma, NodeId nu, NodeId alpha,
                     NodeId beta, NodeId y) {
  const NodeId half = t.scalar_const(0.5);
  const NodeId one = t.scalar_const(1.0);
  const NodeId two = t.scalar_const(2.0);
  const NodeId log_pi = t.scalar_const(std::log(kPi));

  const NodeId omega = t.mul(two, t.mul(beta, t.add(one, nu)));
  const NodeId resid = t.sub(y, gamma);
  const NodeId term1 = t.mul(half, t.sub(log_pi, t.log(nu)));
  const NodeId term2 = t.neg(t.mul(alpha, t.log(omega)));
  const NodeId inner = t.add(t.mul(t.mul(resid, resid), nu), omega);
  const NodeId term3 = t.mul(t.add(alpha, half), t.log(inner));
  const NodeId term4 = t.sub(t.lgamma(alpha), t.lgamma(t.add(alpha, half)));
  return t.add(t.add(term1, term2), t.add(term3, term4));
}

NodeId build_evidential_loss(Tape& t, NodeId gamma, NodeId nu, NodeId alpha,
                             NodeId beta, NodeId y, double lambda) {
  const NodeId nll = build_nig_nll(t, gamma, nu, alpha, beta, y);
  if (lambda == 0.0) return nll;
  const NodeId two = t.scalar_const(2.0);
  const NodeId lam = t.scalar_const(lambda);
  const NodeId evidence = t.add(t.mul(two, nu), alpha);
  const NodeId reg = t.mul(lam, t.mul(t.abs(t.sub(y, gamma)), evidence));
  return t.add(nll, reg);
}

}  // namespace evireg
