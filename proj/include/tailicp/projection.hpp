#pragma once

// Projections of a bivariate max-stable pair onto a univariate response
// whose law is indexed by the Pickands function.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tailicp/errors.hpp"
#include "tailicp/maxstable.hpp"
#include "tailicp/special.hpp"

namespace tailicp {

// LogMax projection: log max(Z1, Z2) - gamma, distributed as
// log(theta) + Gumbel(-gamma, 1).
inline double logmax(const BivariatePair& p) {
  return std::log(std::max(p.z1.value(), p.z2.value())) - kEulerGamma;
}

// min(2/Z1, 2/Z2), exponential with rate A(1/2, 1/2) = theta / 2.
inline double minproj(const BivariatePair& p) {
  return std::min(2.0 / p.z1.value(), 2.0 / p.z2.value());
}

// log max((1 - omega) Z1, omega Z2) - gamma, with mean log A(omega, 1 - omega).
inline double weighted_logmax(const BivariatePair& p, double omega) {
  if (!(omega > 0.0 && omega < 1.0)) throw DomainError("weighted_logmax: omega must lie in (0,1)");
  return std::log(std::max((1.0 - omega) * p.z1.value(), omega * p.z2.value())) - kEulerGamma;
}

inline std::vector<double> logmax(std::span<const BivariatePair> pairs) {
  std::vector<double> y;
  y.reserve(pairs.size());
  for (const auto& p : pairs) y.push_back(logmax(p));
  return y;
}

inline constexpr std::size_t kChiMinExceedances = 50;

// Finite-threshold estimate 2 - P(Z1 > u | Z2 > u) of the extremal
// coefficient. Diagnostic only.
inline double chi_diagnostic(std::span<const BivariatePair> pairs, double u) {
  std::size_t exceed2 = 0, joint = 0;
  for (const auto& p : pairs) {
    if (p.z2.value() > u) {
      ++exceed2;
      if (p.z1.value() > u) ++joint;
    }
  }
  if (exceed2 < kChiMinExceedances)
    throw InsufficientDataError("chi_diagnostic: fewer than 50 exceedances of the threshold");
  return 2.0 - static_cast<double>(joint) / static_cast<double>(exceed2);
}

// Threshold defaults to the empirical 95th percentile of Z2.
inline double chi_diagnostic(std::span<const BivariatePair> pairs) {
  if (pairs.empty()) throw InsufficientDataError("chi_diagnostic: no pairs");
  std::vector<double> z2;
  z2.reserve(pairs.size());
  for (const auto& p : pairs) z2.push_back(p.z2.value());
  const std::size_t k = static_cast<std::size_t>(0.95 * static_cast<double>(z2.size() - 1));
  std::nth_element(z2.begin(), z2.begin() + static_cast<long>(k), z2.end());
  return chi_diagnostic(pairs, z2[k]);
}

}  // namespace tailicp
