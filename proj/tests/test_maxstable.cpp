#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "tailicp/maxstable.hpp"
#include "tailicp/rng.hpp"

namespace {

using tailicp::CopulaSpec;

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Exponent functions written independently.
double v_logistic(double z1, double z2, double a) {
  return std::pow(std::pow(z1, -1.0 / a) + std::pow(z2, -1.0 / a), a);
}
double v_hr(double z1, double z2, double l) {
  return phi(l + std::log(z2 / z1) / (2 * l)) / z1 + phi(l + std::log(z1 / z2) / (2 * l)) / z2;
}
double oracle_joint(const CopulaSpec& s, double z1, double z2) {
  return std::exp(-(s.family == tailicp::CopulaFamily::Logistic ? v_logistic(z1, z2, s.param)
                                                                   : v_hr(z1, z2, s.param)));
}

const std::vector<CopulaSpec> kSpecs{CopulaSpec::logistic(0.3), CopulaSpec::logistic(0.5),
                                     CopulaSpec::logistic(0.8), CopulaSpec::husler_reiss(0.5),
                                     CopulaSpec::husler_reiss(1.0), CopulaSpec::husler_reiss(2.0)};

TEST(MaxStable, ExtremalCoefficientClosedForms) {
  for (double a : {0.1, 0.3, 0.5, 0.8, 1.0})
    EXPECT_NEAR(tailicp::extremal_coefficient(CopulaSpec::logistic(a)), std::pow(2.0, a), 1e-13);
  for (double l : {0.05, 0.5, 1.0, 2.0, 5.0})
    EXPECT_NEAR(tailicp::extremal_coefficient(CopulaSpec::husler_reiss(l)), 2.0 * phi(l), 1e-13);
}

TEST(MaxStable, JointCdfMatchesExponentFunction) {
  for (const auto& s : kSpecs)
    for (double z1 : {0.2, 1.0, 3.0})
      for (double z2 : {0.5, 1.0, 10.0}) EXPECT_NEAR(tailicp::joint_cdf(s, z1, z2), oracle_joint(s, z1, z2), 1e-13);
}

TEST(MaxStable, UnitFrechetMargins) {
  for (const auto& s : kSpecs)
    for (double z : {0.3, 1.0, 4.0}) EXPECT_NEAR(tailicp::joint_cdf(s, z, 1e12), std::exp(-1.0 / z), 1e-9);
}

TEST(MaxStable, PickandsBoundsAndConvexity) {
  for (const auto& s : kSpecs) {
    double prev2 = NAN, prev1 = NAN;
    for (double w = 0.01; w < 1.0; w += 0.01) {
      const double a = tailicp::pickands_at(s, w);
      EXPECT_GE(a, std::max(w, 1.0 - w) - 1e-12);
      EXPECT_LE(a, 1.0 + 1e-12);
      if (!std::isnan(prev2)) {
        EXPECT_GE(prev2 + a - 2 * prev1, -1e-10);
      }
      prev2 = prev1;
      prev1 = a;
    }
  }
}

TEST(MaxStable, IndependenceLimit) {
  EXPECT_NEAR(tailicp::extremal_coefficient(CopulaSpec::husler_reiss(40.0)), 2.0, 1e-12);
  EXPECT_NEAR(tailicp::joint_cdf(CopulaSpec::logistic(1.0), 2.0, 3.0), std::exp(-0.5 - 1.0 / 3.0), 1e-14);
}

TEST(MaxStable, ConditionalCdfIsScaledPartialDerivative) {
  for (const auto& s : kSpecs)
    for (double z1 : {0.4, 1.0, 5.0})
      for (double z2 : {0.3, 1.2, 8.0}) {
        const double h = 1e-5 * z1;
        const double d1 = (oracle_joint(s, z1 + h, z2) - oracle_joint(s, z1 - h, z2)) / (2 * h);
        const double dens = std::exp(-1.0 / z1) / (z1 * z1);
        EXPECT_NEAR(tailicp::conditional_cdf(s, z1, z2), d1 / dens, 1e-6);
      }
}

TEST(MaxStable, ConditionalQuantileInverts) {
  for (const auto& s : kSpecs)
    for (double z1 : {0.1, 1.0, 50.0})
      for (double u : {1e-6, 0.1, 0.5, 0.9, 1 - 1e-6}) {
        const double z2 = tailicp::conditional_quantile(s, z1, u);
        EXPECT_NEAR(tailicp::conditional_cdf(s, z1, z2), u, 1e-9);
      }
}

TEST(MaxStable, SamplerMatchesJointCdf) {
  const long n = 20000;
  for (const auto& s : {CopulaSpec::logistic(0.5), CopulaSpec::husler_reiss(1.0)}) {
    auto rng = tailicp::make_rng(99, {1});
    std::vector<tailicp::BivariatePair> pairs;
    for (long i = 0; i < n; ++i) pairs.push_back(tailicp::sample_pair(s, rng));
    for (double a : {0.5, 1.0, 3.0})
      for (double b : {0.5, 1.0, 3.0}) {
        long hit = 0;
        for (const auto& p : pairs) hit += p.z1.value() <= a && p.z2.value() <= b;
        EXPECT_NEAR(static_cast<double>(hit) / n, oracle_joint(s, a, b), 4.0 * std::sqrt(0.25 / n));
      }
  }
}

TEST(MaxStable, SamplerIsDeterministic) {
  auto r1 = tailicp::make_rng(5, {7});
  auto r2 = tailicp::make_rng(5, {7});
  for (int i = 0; i < 50; ++i) {
    const auto a = tailicp::sample_pair(CopulaSpec::husler_reiss(0.7), r1);
    const auto b = tailicp::sample_pair(CopulaSpec::husler_reiss(0.7), r2);
    EXPECT_EQ(a.z1.value(), b.z1.value());
    EXPECT_EQ(a.z2.value(), b.z2.value());
  }
}

TEST(MaxStable, InvalidParameters) {
  EXPECT_THROW(CopulaSpec::logistic(0.0), tailicp::DomainError);
  EXPECT_THROW(CopulaSpec::logistic(1.5), tailicp::DomainError);
  EXPECT_THROW(CopulaSpec::husler_reiss(-1.0), tailicp::DomainError);
  EXPECT_THROW(tailicp::joint_cdf(CopulaSpec::logistic(0.5), -1.0, 1.0), tailicp::DomainError);
}

TEST(Rng, DerivedSeedsDifferPerPath) {
  EXPECT_NE(tailicp::derive_seed(1, {1, 2}), tailicp::derive_seed(1, {2, 1}));
  EXPECT_NE(tailicp::derive_seed(1, {1}), tailicp::derive_seed(2, {1}));
  EXPECT_EQ(tailicp::derive_seed(3, {4, 5}), tailicp::derive_seed(3, {4, 5}));
}

}  // namespace
