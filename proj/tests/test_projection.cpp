#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "tailicp/projection.hpp"
#include "tailicp/rng.hpp"
#include "tailicp/stats.hpp"

namespace {

using tailicp::BivariatePair;
using tailicp::CopulaSpec;
using tailicp::FrechetValue;

std::vector<BivariatePair> draw(const CopulaSpec& s, long n, std::uint64_t seed) {
  auto rng = tailicp::make_rng(seed);
  std::vector<BivariatePair> out;
  for (long i = 0; i < n; ++i) out.push_back(tailicp::sample_pair(s, rng));
  return out;
}

TEST(Projection, PointValues) {
  const BivariatePair p{FrechetValue(2.0), FrechetValue(5.0)};
  EXPECT_NEAR(tailicp::logmax(p), std::log(5.0) - 0.5772156649015329, 1e-15);
  EXPECT_NEAR(tailicp::minproj(p), 0.4, 1e-15);
  EXPECT_NEAR(tailicp::weighted_logmax(p, 0.5), std::log(2.5) - 0.5772156649015329, 1e-15);
  EXPECT_THROW(tailicp::weighted_logmax(p, 1.0), tailicp::DomainError);
}

TEST(Projection, LogMaxMeanIsLogTheta) {
  for (const auto& s : {CopulaSpec::logistic(0.4), CopulaSpec::husler_reiss(0.8)}) {
    const auto y = tailicp::logmax(draw(s, 20000, 3));
    double m = 0.0;
    for (double v : y) m += v;
    m /= static_cast<double>(y.size());
    EXPECT_NEAR(m, std::log(tailicp::extremal_coefficient(s)), 4.0 * 1.2825 / std::sqrt(20000.0));
  }
}

TEST(Projection, WeightedLogMaxMeanIsLogPickands) {
  const auto s = CopulaSpec::logistic(0.6);
  const auto pairs = draw(s, 20000, 4);
  for (double w : {0.2, 0.7}) {
    double m = 0.0;
    for (const auto& p : pairs) m += tailicp::weighted_logmax(p, w);
    m /= static_cast<double>(pairs.size());
    // max((1-w) Z1, w Z2) is Frechet with scale A(w, 1-w).
    EXPECT_NEAR(m, std::log(tailicp::pickands_at(s, w)), 4.0 * 1.2825 / std::sqrt(20000.0));
  }
}

TEST(Projection, MinProjIsExponential) {
  const auto s = CopulaSpec::logistic(0.5);
  const double rate = tailicp::extremal_coefficient(s) / 2.0;
  std::vector<double> v;
  for (const auto& p : draw(s, 5000, 8)) v.push_back(tailicp::minproj(p));
  const double d = tailicp::ks_statistic(v, [&](double x) { return 1.0 - std::exp(-rate * x); });
  EXPECT_GT(tailicp::ks_pvalue(d, v.size()), 0.01);
}

TEST(Projection, ChiDiagnostic) {
  const auto indep = draw(CopulaSpec::logistic(1.0), 20000, 5);
  EXPECT_NEAR(tailicp::chi_diagnostic(indep, 20.0), 2.0, 0.1);
  const auto dep = draw(CopulaSpec::logistic(0.2), 20000, 6);
  EXPECT_LT(tailicp::chi_diagnostic(dep), 1.4);
  EXPECT_THROW(tailicp::chi_diagnostic(std::vector<BivariatePair>(draw(CopulaSpec::logistic(0.5), 100, 1)), 1e6),
               tailicp::InsufficientDataError);
}

TEST(Stats, KolmogorovTail) {
  // Known values of the limiting distribution: P(K > 1.3581) = 0.05.
  EXPECT_NEAR(tailicp::ks_pvalue(1.3581 / std::sqrt(1e8), 100000000), 0.05, 1e-3);
  EXPECT_NEAR(tailicp::ks_pvalue(1.6276 / std::sqrt(1e8), 100000000), 0.01, 1e-3);
  EXPECT_EQ(tailicp::ks_pvalue(0.0, 10), 1.0);
}

TEST(Stats, QuantileAndMedian) {
  EXPECT_EQ(tailicp::median({3, 1, 2}), 2.0);
  EXPECT_EQ(tailicp::median({4, 1, 2, 3}), 2.5);
  EXPECT_EQ(tailicp::quantile_sorted({1, 2, 3, 4, 5}, 0.25), 2.0);
}

}  // namespace
