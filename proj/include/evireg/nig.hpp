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

#ifndef EVIREG_NIG_HPP_
#define EVIREG_NIG_HPP_

#include <utility>

#include "evireg/tape.hpp"

namespace evireg {

// Years CE <-> the normalized year axis y = (t - origin) / span.
struct YearScale {
  double origin = 800.0;
  double span = 1100.0;
  double normalize(double years_ce) const { return (years_ce - origin) / span; }
  double denormalize(double y) const { return origin + span * y; }
};

constexpr double kDefaultLambda = 0.1;

// Normal-Inverse-Gamma parameters for one input: gamma is the prior mean on
// the normalized year axis, nu the pseudo-observation count, alpha the
// inverse-gamma shape, beta the scale. Construction enforces nu > 0,
// alpha > 1, beta > 0.
struct NIGParams {
  double gamma;
  double nu;
  double alpha;
  double beta;

  NIGParams(double gamma_, double nu_, double alpha_, double beta_);
};

struct UncertaintySummary {
  double mean = 0.0;             // normalized years (= gamma)
  double aleatoric_var = 0.0;    // beta / (alpha - 1)
  double total_var = 0.0;        // beta / (nu (alpha - 1)) = aleatoric / nu
  double epistemic_scale = 0.0;  // 1 / nu
  double mean_years = 0.0;
  double std_years = 0.0;  // sqrt(total_var) * span
  double interval_low_years = 0.0;
  double interval_high_years = 0.0;
  double confidence = 0.0;
};

// Variance decomposition: total = aleatoric * (1/nu). Fills only the
// normalized-unit fields.
UncertaintySummary decompose(const NIGParams& p);

// Full summary including years-domain fields and the predictive interval at
// `confidence`.
UncertaintySummary summarize(const NIGParams& p, double confidence,
                             const YearScale& scale = YearScale{});

// Negative log of the Student-t marginal of y under the NIG prior.
// With Omega = 2 beta (1 + nu):
//   nll = 1/2 log(pi/nu) - alpha log(Omega)
//         + (alpha + 1/2) log((y - gamma)^2 nu + Omega)
//         + lgamma(alpha) - lgamma(alpha + 1/2)
double nig_nll(const NIGParams& p, double y);

// lambda * |y - gamma| * (2 nu + alpha): penalizes strong evidence on
// mispredicted targets.
double evidence_regularizer(const NIGParams& p, double y, double lambda);

double evidential_loss(const NIGParams& p, double y, double lambda = kDefaultLambda);

// The predictive marginal is Student-t with 2 alpha degrees of freedom and
// scale sqrt(beta (1 + nu) / (nu alpha)). Central interval at `confidence`.
double predictive_scale(const NIGParams& p);
std::pair<double, double> predictive_interval(const NIGParams& p, double confidence);

// Tape builders for training. Each argument is a node holding a Bx1 column;
// the result is the Bx1 per-sample loss (or NLL). Targets y are constants.
NodeId build_nig_nll(Tape& tape, NodeId gamma, NodeId nu, NodeId alpha,
                     NodeId beta, NodeId y);
NodeId build_evidential_loss(Tape& tape, NodeId gamma, NodeId nu, NodeId alpha,
                             NodeId beta, NodeId y, double lambda = kDefaultLambda);

}  // namespace evireg

#endif  // EVIREG_NIG_HPP_
