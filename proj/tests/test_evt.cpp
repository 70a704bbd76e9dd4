#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "tailicp/evt.hpp"

namespace {

using tailicp::GevParams;

// Textbook form written out independently of the library.
double oracle_cdf(double x, double mu, double sigma, double xi) {
  const double z = (x - mu) / sigma;
  if (xi == 0.0) return std::exp(-std::exp(-z));
  const double t = 1.0 + xi * z;
  if (t <= 0.0) return xi > 0.0 ? 0.0 : 1.0;
  return std::exp(-std::pow(t, -1.0 / xi));
}

double oracle_quantile(double u, double mu, double sigma, double xi) {
  double lo = mu - 200.0 * sigma, hi = mu + 200.0 * sigma;
  while (oracle_cdf(hi, mu, sigma, xi) < u) hi = mu + 2.0 * (hi - mu);
  if (xi > 0.0) lo = mu - sigma / xi + 1e-12;
  if (xi < 0.0) hi = mu - sigma / xi - 1e-12;
  for (int i = 0; i < 300; ++i) {
    const double mid = 0.5 * (lo + hi);
    (oracle_cdf(mid, mu, sigma, xi) < u ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct Case {
  double mu, sigma, xi;
};
const std::vector<Case> kCases{{0, 1, 0}, {2, 0.5, 0.2}, {-1, 3, -0.3}, {60, 12, 0.05}, {0, 1, 0.8}, {5, 2, -0.9}};

TEST(Gev, CdfMatchesClosedForm) {
  for (const auto& c : kCases)
    for (double x : {-3.0, -0.5, 0.0, 0.7, 2.0, 6.0, 70.0}) {
      const GevParams p{c.mu, c.sigma, c.xi};
      EXPECT_NEAR(tailicp::gev_cdf(x, p), oracle_cdf(x, c.mu, c.sigma, c.xi), 1e-13);
    }
}

TEST(Gev, QuantileMatchesBisection) {
  for (const auto& c : kCases)
    for (double u : {1e-6, 0.01, 0.3, 0.5, 0.9, 0.999}) {
      const double q = tailicp::gev_quantile(u, {c.mu, c.sigma, c.xi});
      EXPECT_NEAR(q, oracle_quantile(u, c.mu, c.sigma, c.xi), 1e-8 * (1.0 + std::abs(q)));
    }
}

TEST(Gev, QuantileCdfRoundTrip) {
  for (const auto& c : kCases)
    for (double u = 0.001; u < 1.0; u += 0.0137) {
      const GevParams p{c.mu, c.sigma, c.xi};
      EXPECT_NEAR(tailicp::gev_cdf(tailicp::gev_quantile(u, p), p), u, 1e-9);
    }
}

TEST(Gev, ShapeNearZeroIsContinuous) {
  for (double x : {-1.0, 0.0, 1.5}) {
    const double g = tailicp::gev_cdf(x, {0, 1, 0});
    EXPECT_NEAR(tailicp::gev_cdf(x, {0, 1, 1e-9}), g, 1e-8);
    EXPECT_NEAR(tailicp::gev_cdf(x, {0, 1, -1e-7}), g, 1e-6);
  }
}

TEST(Gev, LogPdfIsDerivativeOfCdf) {
  for (const auto& c : kCases) {
    const GevParams p{c.mu, c.sigma, c.xi};
    for (double u : {0.05, 0.4, 0.8}) {
      const double x = tailicp::gev_quantile(u, p);
      const double h = 1e-5 * c.sigma;
      const double fd = (oracle_cdf(x + h, c.mu, c.sigma, c.xi) - oracle_cdf(x - h, c.mu, c.sigma, c.xi)) / (2 * h);
      EXPECT_NEAR(std::exp(tailicp::gev_logpdf(x, p)), fd, 1e-6 * (1.0 + fd));
    }
  }
}

TEST(Gev, OutsideSupport) {
  const GevParams p{0, 1, 0.5};  // lower endpoint -2
  EXPECT_EQ(tailicp::gev_cdf(-3.0, p), 0.0);
  EXPECT_TRUE(std::isinf(tailicp::gev_logpdf(-3.0, p)));
  const GevParams q{0, 1, -0.5};  // upper endpoint 2
  EXPECT_EQ(tailicp::gev_cdf(3.0, q), 1.0);
}

TEST(Gev, RejectsInvalidParameters) {
  EXPECT_THROW(tailicp::gev_cdf(0.0, {0, 0, 0}), tailicp::DomainError);
  EXPECT_THROW(tailicp::gev_cdf(0.0, {0, -1, 0}), tailicp::DomainError);
  EXPECT_THROW(tailicp::gev_quantile(0.0, {0, 1, 0}), tailicp::DomainError);
  EXPECT_THROW(tailicp::gev_quantile(1.0, {0, 1, 0}), tailicp::DomainError);
}

TEST(Frechet, TransformFromProbability) {
  EXPECT_NEAR(tailicp::frechet_from_probability(std::exp(-1.0)).value(), 1.0, 1e-14);
  EXPECT_NEAR(tailicp::frechet_from_probability(0.5).value(), 1.0 / std::log(2.0), 1e-14);
  EXPECT_THROW(tailicp::frechet_from_probability(1.0), tailicp::TransformError);
  EXPECT_THROW(tailicp::frechet_from_probability(0.0), tailicp::TransformError);
  try {
    tailicp::frechet_from_probability(1.0);
  } catch (const tailicp::TransformError& e) {
    EXPECT_EQ(e.value(), 1.0);
  }
}

TEST(Frechet, ThroughMarginCdf) {
  const GevParams p{3, 2, 0.1};
  const auto cdf = [&](double x) { return tailicp::gev_cdf(x, p); };
  const double x = tailicp::gev_quantile(std::exp(-1.0 / 4.0), p);
  EXPECT_NEAR(tailicp::to_unit_frechet(x, cdf).value(), 4.0, 1e-9);
  EXPECT_THROW(tailicp::FrechetValue(-1.0), tailicp::DomainError);
}

TEST(BlockMaxima, Examples) {
  const std::vector<double> s{1, 5, 2, 8, 3, 3, 9};
  EXPECT_EQ(tailicp::block_maxima(s, 2), (std::vector<double>{5, 8, 3}));
  EXPECT_EQ(tailicp::block_maxima(s, 7), (std::vector<double>{9}));
  EXPECT_TRUE(tailicp::block_maxima(s, 8).empty());
  EXPECT_THROW(tailicp::block_maxima(s, 0), tailicp::DomainError);
}

}  // namespace
