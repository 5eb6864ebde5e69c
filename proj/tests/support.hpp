// Test-only oracles. Everything here is independent of the library
// implementation paths it is used to check.

#ifndef EVIREG_TESTS_SUPPORT_HPP_
#define EVIREG_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "evireg/rng.hpp"

namespace testsupport {

// -log of the Gaussian-under-NIG marginal at y, by 2-D quadrature of
//   N(y | mu, sigma2) * NIG(mu, sigma2 | gamma, nu, alpha, beta).
// Outer Simpson over s = log(sigma2); inner Simpson over mu with a window
// of +/- 12 mu-scales per sigma2 slice. For fixed sigma2 the mu integrand
// is exp of a quadratic with minimum (nu gamma + y)/(nu + 1) and scale
// sigma / sqrt(nu + 1), so the per-slice window captures all mass. The
// sigma2 upper bound is chosen so the inverse-gamma tail above it is below
// 1e-10 of the total (a fixed 50*beta cutoff leaves ~1e-5 tail mass for
// small alpha, more than the 1e-6 tolerance this oracle certifies).
inline double nig_nll_quadrature(double gamma, double nu, double alpha,
                                 double beta, double y, int n_mu = 400,
                                 int n_s = 2400) {
  const double pi = 3.14159265358979323846264338327950288;

  const double log_norm =
      0.5 * std::log(nu / (2.0 * pi)) + alpha * std::log(beta) - std::lgamma(alpha);

  auto integrand = [&](double mu, double s) {
    const double sigma2 = std::exp(s);
    // log[N(y|mu,sigma2) * NIG(mu,sigma2)] + s  (Jacobian of s = log sigma2)
    const double dy = y - mu, dm = mu - gamma;
    const double logf = log_norm - 0.5 * std::log(2.0 * pi * sigma2) -
                        (alpha + 1.5) * std::log(sigma2) -
                        (2.0 * beta + nu * dm * dm + dy * dy) / (2.0 * sigma2) + s;
    return std::exp(logf);
  };

  // Simpson weights: 1 4 2 4 ... 2 4 1 (n intervals, n even).
  auto simpson_weight = [](int i, int n) {
    if (i == 0 || i == n) return 1.0;
    return (i % 2 == 1) ? 4.0 : 2.0;
  };

  // Upper sigma2 bound: tail of InvGamma(alpha+1/2, c) with c >= beta falls
  // like (c/x)^(alpha+1/2); solve for relative mass 1e-10, floor at 50*beta.
  const double resid = y - gamma;
  const double c_scale = beta + 0.5 * nu * resid * resid / (1.0 + nu);
  const double tail_factor = std::pow(1e10, 1.0 / (alpha + 0.5));
  const double sigma2_hi = std::max(50.0 * beta, 10.0 * c_scale * tail_factor);
  const double s_lo = std::log(beta * 1e-9), s_hi = std::log(sigma2_hi);

  const double mu_center = (nu * gamma + y) / (nu + 1.0);
  const double h_s = (s_hi - s_lo) / n_s;
  double total = 0.0;
  for (int j = 0; j <= n_s; ++j) {
    const double s = s_lo + j * h_s;
    const double mu_scale = std::sqrt(std::exp(s) / (nu + 1.0));
    const double mu_lo = mu_center - 12.0 * mu_scale;
    const double h_mu = 24.0 * mu_scale / n_mu;
    double inner = 0.0;
    for (int i = 0; i <= n_mu; ++i) {
      inner += simpson_weight(i, n_mu) * integrand(mu_lo + i * h_mu, s);
    }
    total += simpson_weight(j, n_s) * (inner * h_mu / 3.0);
  }
  total *= h_s / 3.0;
  return -std::log(total);
}

// Marsaglia-Tsang gamma sampler (shape-only, unit scale).
inline double gamma_sample(evireg::Rng& rng, double shape) {
  if (shape < 1.0) {
    const double u = rng.uniform();
    return gamma_sample(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

// Draw (mu, sigma2, y) from the generative NIG model.
inline double nig_generative_draw(evireg::Rng& rng, double gamma, double nu,
                                  double alpha, double beta) {
  const double sigma2 = beta / gamma_sample(rng, alpha);
  const double mu = rng.normal(gamma, std::sqrt(sigma2 / nu));
  return rng.normal(mu, std::sqrt(sigma2));
}

// O(n^2) average-rank assignment followed by textbook Pearson on the ranks.
inline std::vector<double> brute_force_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t less = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (v[j] < v[i]) ++less;
      if (v[j] == v[i]) ++equal;
    }
    r[i] = less + 0.5 * (equal - 1) + 1.0;
  }
  return r;
}

inline double brute_force_spearman(const std::vector<double>& u,
                                   const std::vector<double>& e) {
  const std::vector<double> ru = brute_force_ranks(u), re = brute_force_ranks(e);
  const std::size_t n = u.size();
  double mu = 0.0, me = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mu += ru[i];
    me += re[i];
  }
  mu /= n;
  me /= n;
  double cov = 0.0, vu = 0.0, ve = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (ru[i] - mu) * (re[i] - me);
    vu += (ru[i] - mu) * (ru[i] - mu);
    ve += (re[i] - me) * (re[i] - me);
  }
  return cov / std::sqrt(vu * ve);
}

// Standard normal quantile by bisection against std::erfc; used to check the
// library's closed-form approximation and the Gaussian interval limit.
inline double normal_quantile_bisect(double p) {
  auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) < p) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace testsupport

#endif  // EVIREG_TESTS_SUPPORT_HPP_
