#include <cmath>
#include <utility>
#include <vector>

#include "doctest.h"
#include "evireg/errors.hpp"
#include "evireg/nig.hpp"
#include "evireg/rng.hpp"
#include "evireg/special.hpp"
#include "support.hpp"

using namespace evireg;

TEST_CASE("year normalization") {
  YearScale s;
  CHECK(s.normalize(800.0) == 0.0);
  CHECK(s.normalize(1900.0) == 1.0);
  CHECK(s.normalize(1350.0) == 0.5);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const double t = rng.uniform(500.0, 2100.0);
    CHECK(std::fabs(s.denormalize(s.normalize(t)) - t) < 1e-12 * std::max(1.0, std::fabs(t)));
    const double y = rng.uniform(-1.0, 2.0);
    CHECK(std::fabs(s.normalize(s.denormalize(y)) - y) < 1e-12);
  }
}

TEST_CASE("NIGParams construction enforces the invariants") {
  CHECK_NOTHROW(NIGParams(0.0, 1e-6, 1.0 + 1e-6, 1e-6));
  CHECK_THROWS_AS(NIGParams(0.0, 0.0, 2.0, 1.0), DomainError);
  CHECK_THROWS_AS(NIGParams(0.0, -1.0, 2.0, 1.0), DomainError);
  CHECK_THROWS_AS(NIGParams(0.0, 1.0, 1.0, 1.0), DomainError);   // alpha must exceed 1
  CHECK_THROWS_AS(NIGParams(0.0, 1.0, 0.5, 1.0), DomainError);
  CHECK_THROWS_AS(NIGParams(0.0, 1.0, 2.0, 0.0), DomainError);
}

TEST_CASE("variance decomposition") {
  {
    UncertaintySummary s = decompose(NIGParams(0.3, 2.0, 3.0, 4.0));
    CHECK(s.aleatoric_var == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(s.total_var == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.epistemic_scale == doctest::Approx(0.5).epsilon(1e-15));
  }
  {
    // nu = 1 makes total equal aleatoric.
    UncertaintySummary s = decompose(NIGParams(0.3, 1.0, 2.0, 1.0));
    CHECK(s.aleatoric_var == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.total_var == doctest::Approx(1.0).epsilon(1e-15));
  }
  {
    // nu 10x larger: total shrinks 10x, aleatoric unchanged.
    UncertaintySummary a = decompose(NIGParams(0.3, 0.7, 2.5, 1.3));
    UncertaintySummary b = decompose(NIGParams(0.3, 7.0, 2.5, 1.3));
    CHECK(b.aleatoric_var == a.aleatoric_var);
    CHECK(b.total_var == doctest::Approx(a.total_var / 10.0).epsilon(1e-15));
  }
}

TEST_CASE("decomposition identity holds to machine precision") {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    const NIGParams p(rng.uniform(-1.0, 2.0), std::exp(rng.uniform(-6.0, 4.0)),
                      1.0 + std::exp(rng.uniform(-6.0, 3.0)),
                      std::exp(rng.uniform(-6.0, 3.0)));
    const UncertaintySummary s = decompose(p);
    CHECK(s.total_var == doctest::Approx(s.aleatoric_var * s.epistemic_scale).epsilon(1e-15));
    CHECK(s.total_var == doctest::Approx(s.aleatoric_var / p.nu).epsilon(1e-12));
  }
}

TEST_CASE("nig_nll matches the 2-D quadrature oracle") {
  // The spec's two pinned parameter points.
  {
    const NIGParams p(0.5, 1.0, 2.0, 1.0);
    const double oracle = testsupport::nig_nll_quadrature(0.5, 1.0, 2.0, 1.0, 0.5);
    CHECK(std::fabs(nig_nll(p, 0.5) - oracle) < 1e-6);
  }
  {
    const NIGParams p(0.5, 1.0, 1.5, 0.5);
    const double oracle = testsupport::nig_nll_quadrature(0.5, 1.0, 1.5, 0.5, 0.9);
    CHECK(std::fabs(nig_nll(p, 0.9) - oracle) < 1e-6);
  }
}

TEST_CASE("nig_nll quadrature agreement on a 20-point parameter grid") {
  Rng rng(31);
  for (int i = 0; i < 20; ++i) {
    const double gamma = rng.uniform(-0.5, 1.5);
    const double nu = rng.uniform(0.3, 5.0);
    const double alpha = rng.uniform(1.3, 6.0);
    const double beta = rng.uniform(0.2, 3.0);
    const double y = gamma + rng.uniform(-1.0, 1.0);
    const double oracle = testsupport::nig_nll_quadrature(gamma, nu, alpha, beta, y);
    CHECK(std::fabs(nig_nll(NIGParams(gamma, nu, alpha, beta), y) - oracle) < 1e-6);
  }
}

TEST_CASE("y = gamma minimizes the NLL in y") {
  const NIGParams p(0.4, 1.7, 2.2, 0.9);
  const double at_gamma = nig_nll(p, 0.4);
  for (double dy : {-1.0, -0.25, -1e-3, 1e-3, 0.25, 1.0}) {
    CHECK(nig_nll(p, 0.4 + dy) > at_gamma);
  }
}

TEST_CASE("evidence regularizer") {
  const NIGParams p(0.5, 1.0, 2.0, 1.0);
  CHECK(evidence_regularizer(p, 0.7, 0.1) == doctest::Approx(0.08).epsilon(1e-15));
  CHECK(evidence_regularizer(p, 0.5, 0.1) == 0.0);
  // Doubling nu with alpha fixed adds lambda * |y-gamma| * 2nu.
  const NIGParams p2(0.5, 2.0, 2.0, 1.0);
  CHECK(evidence_regularizer(p2, 0.7, 0.1) - evidence_regularizer(p, 0.7, 0.1) ==
        doctest::Approx(0.1 * 0.2 * 2.0).epsilon(1e-12));
  CHECK_THROWS_AS(evidence_regularizer(p, 0.7, -0.1), DomainError);
}

TEST_CASE("evidential loss composition") {
  const NIGParams p(0.5, 1.0, 2.0, 1.0);
  CHECK(evidential_loss(p, 0.3, 0.0) == nig_nll(p, 0.3));
  CHECK(evidential_loss(p, 0.3, 0.1) ==
        doctest::Approx(nig_nll(p, 0.3) + 0.1 * 0.2 * 4.0).epsilon(1e-12));
}

TEST_CASE("evidential loss gradcheck at random in-domain points") {
  Rng rng(17);
  for (int i = 0; i < 10; ++i) {
    // Margin >= 1e-3 from every domain boundary.
    const double gamma = rng.uniform(-0.5, 1.5);
    const double nu = rng.uniform(0.05, 4.0);
    const double alpha = rng.uniform(1.05, 5.0);
    const double beta = rng.uniform(0.05, 3.0);
    double y = gamma + rng.uniform(0.05, 0.8) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
    auto f = [y](Tape& t, const std::vector<double>& x) {
      NodeId g = t.param(Tensor::scalar(x[0]));
      NodeId n = t.param(Tensor::scalar(x[1]));
      NodeId a = t.param(Tensor::scalar(x[2]));
      NodeId b = t.param(Tensor::scalar(x[3]));
      return build_evidential_loss(t, g, n, a, b, t.scalar_const(y), 0.1);
    };
    CHECK(gradcheck(f, {gamma, nu, alpha, beta}, 1e-6) < 1e-4);
  }
}

TEST_CASE("tape NLL equals the closed form") {
  Rng rng(23);
  for (int i = 0; i < 50; ++i) {
    const double gamma = rng.uniform(-0.5, 1.5);
    const double nu = rng.uniform(0.1, 5.0);
    const double alpha = rng.uniform(1.1, 6.0);
    const double beta = rng.uniform(0.1, 3.0);
    const double y = rng.uniform(-0.5, 1.5);
    Tape t;
    NodeId nll = build_nig_nll(t, t.scalar_const(gamma), t.scalar_const(nu),
                               t.scalar_const(alpha), t.scalar_const(beta),
                               t.scalar_const(y));
    CHECK(t.scalar_value(nll) ==
          doctest::Approx(nig_nll(NIGParams(gamma, nu, alpha, beta), y)).epsilon(1e-13));
  }
}

TEST_CASE("predictive interval basics") {
  const NIGParams p(0.5, 1.4, 2.3, 0.8);
  // confidence -> 0 collapses to (gamma, gamma).
  auto [l0, h0] = predictive_interval(p, 0.0);
  CHECK(l0 == 0.5);
  CHECK(h0 == 0.5);
  // Symmetric about gamma.
  auto [lo, hi] = predictive_interval(p, 0.9);
  CHECK(0.5 - lo == doctest::Approx(hi - 0.5).epsilon(1e-12));
  CHECK(lo < 0.5);
  CHECK(hi > 0.5);
}

TEST_CASE("gaussian limit of the predictive interval") {
  // alpha very large with beta/alpha fixed: half-width approaches
  // z_{0.95} * s, z from the independent bisection oracle.
  const double alpha = 1e6;
  const double beta = alpha * 0.7;
  const NIGParams p(0.1, 2.0, alpha, beta);
  auto [lo, hi] = predictive_interval(p, 0.9);
  const double half = 0.5 * (hi - lo);
  const double s = std::sqrt(beta * (1.0 + p.nu) / (p.nu * alpha));
  const double z = testsupport::normal_quantile_bisect(0.95);
  CHECK(std::fabs(half - z * s) / (z * s) < 1e-3);
}

TEST_CASE("interval width monotone in beta and nu") {
  auto width = [](double nu, double beta) {
    auto [lo, hi] = predictive_interval(NIGParams(0.0, nu, 2.5, beta), 0.9);
    return hi - lo;
  };
  double prev = 0.0;
  for (double beta : {0.1, 0.5, 1.0, 2.0, 8.0}) {
    const double w = width(1.0, beta);
    CHECK(w > prev);
    prev = w;
  }
  prev = 1e18;
  for (double nu : {0.1, 0.5, 1.0, 2.0, 8.0}) {
    const double w = width(nu, 1.0);
    CHECK(w < prev);
    prev = w;
  }
}

TEST_CASE("90 percent intervals cover 90 percent of generative draws") {
  const NIGParams p(0.2, 1.5, 2.5, 0.7);
  auto [lo, hi] = predictive_interval(p, 0.9);
  Rng rng(77);
  const int n = 100000;
  int covered = 0;
  for (int i = 0; i < n; ++i) {
    const double y = testsupport::nig_generative_draw(rng, p.gamma, p.nu, p.alpha, p.beta);
    if (y >= lo && y <= hi) ++covered;
  }
  const double picp = static_cast<double>(covered) / n;
  CHECK(picp == doctest::Approx(0.90).epsilon(0.011));
}

TEST_CASE("summary in years") {
  const NIGParams p(0.5, 2.0, 3.0, 4.0);
  const UncertaintySummary s = summarize(p, 0.9);
  CHECK(s.mean_years == doctest::Approx(1350.0).epsilon(1e-12));
  CHECK(s.std_years == doctest::Approx(std::sqrt(1.0) * 1100.0).epsilon(1e-12));
  // Interval symmetric about the mean in years.
  CHECK(s.mean_years - s.interval_low_years ==
        doctest::Approx(s.interval_high_years - s.mean_years).epsilon(1e-9));
}
