#pragma once

// Bivariate simple max-stable models on unit Frechet margins: logistic and
// Husler-Reiss distribution functions, Pickands function, extremal
// coefficient, and an exact sampler by conditional inversion.

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <utility>

#include <boost/math/tools/toms748_solve.hpp>

#include "tailicp/errors.hpp"
#include "tailicp/evt.hpp"
#include "tailicp/rng.hpp"
#include "tailicp/special.hpp"

namespace tailicp {

enum class CopulaFamily { Logistic, HuslerReiss };

struct CopulaSpec {
  CopulaFamily family = CopulaFamily::Logistic;
  double param = 1.0;  // alpha for Logistic, lambda for HuslerReiss

  static CopulaSpec logistic(double alpha) {
    CopulaSpec s{CopulaFamily::Logistic, alpha};
    s.validate();
    return s;
  }
  static CopulaSpec husler_reiss(double lambda) {
    CopulaSpec s{CopulaFamily::HuslerReiss, lambda};
    s.validate();
    return s;
  }

  void validate() const {
    if (family == CopulaFamily::Logistic) {
      if (!(param > 0.0 && param <= 1.0))
        throw DomainError("logistic dependence parameter must lie in (0,1]");
    } else if (!(param > 0.0) || !std::isfinite(param)) {
      throw DomainError("Husler-Reiss parameter must be finite and > 0");
    }
  }
};

struct BivariatePair {
  FrechetValue z1;
  FrechetValue z2;
};

namespace detail {

inline void check_margin_arg(double z) {
  if (!(z > 0.0)) throw DomainError("max-stable cdf arguments must be > 0");
}

// Exponent function V(z1, z2) with G = exp(-V).
inline double logistic_exponent(double z1, double z2, double alpha) {
  const double ls = log_sum_exp(-std::log(z1) / alpha, -std::log(z2) / alpha);
  return std::exp(alpha * ls);
}

inline double hr_exponent(double z1, double z2, double lambda) {
  const double r = std::log(z2 / z1) / (2.0 * lambda);
  return normal_cdf(lambda + r) / z1 + normal_cdf(lambda - r) / z2;
}

}  // namespace detail

inline double logistic_cdf(double z1, double z2, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("logistic_cdf: alpha must lie in (0,1]");
  detail::check_margin_arg(z1);
  detail::check_margin_arg(z2);
  return std::exp(-detail::logistic_exponent(z1, z2, alpha));
}

inline double hr_cdf(double z1, double z2, double lambda) {
  if (!(lambda > 0.0)) throw DomainError("hr_cdf: lambda must be > 0");
  detail::check_margin_arg(z1);
  detail::check_margin_arg(z2);
  if (std::isinf(lambda)) return std::exp(-1.0 / z1 - 1.0 / z2);
  return std::exp(-detail::hr_exponent(z1, z2, lambda));
}

inline double joint_cdf(const CopulaSpec& spec, double z1, double z2) {
  spec.validate();
  return spec.family == CopulaFamily::Logistic ? logistic_cdf(z1, z2, spec.param)
                                               : hr_cdf(z1, z2, spec.param);
}

// Pickands dependence function A(omega, 1 - omega).
inline double pickands_at(const CopulaSpec& spec, double omega) {
  spec.validate();
  if (!(omega > 0.0 && omega < 1.0)) throw DomainError("pickands_at: omega must lie in (0,1)");
  const double w = 1.0 - omega;
  if (spec.family == CopulaFamily::Logistic) {
    const double a = spec.param;
    return std::exp(a * log_sum_exp(std::log(omega) / a, std::log(w) / a));
  }
  const double lam = spec.param;
  const double r = std::log(omega / w) / (2.0 * lam);
  return omega * normal_cdf(lam + r) + w * normal_cdf(lam - r);
}

inline double extremal_coefficient(const CopulaSpec& spec) { return 2.0 * pickands_at(spec, 0.5); }

// log P(Z2 <= exp(log_z2) | Z1 = z1).
inline double log_conditional_cdf(const CopulaSpec& spec, double z1, double log_z2) {
  const double lz1 = std::log(z1);
  if (spec.family == CopulaFamily::Logistic) {
    const double a = spec.param;
    const double sp = softplus((lz1 - log_z2) / a);
    return (a - 1.0) * sp - std::expm1(a * sp) / z1;
  }
  const double lam = spec.param;
  const double r = (log_z2 - lz1) / (2.0 * lam);
  const double pa = normal_cdf(lam + r);
  if (pa <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(pa) + normal_cdf(-(lam + r)) / z1 - normal_cdf(lam - r) * std::exp(-log_z2);
}

inline double conditional_cdf(const CopulaSpec& spec, double z1, double z2) {
  spec.validate();
  detail::check_margin_arg(z1);
  detail::check_margin_arg(z2);
  return std::exp(log_conditional_cdf(spec, z1, std::log(z2)));
}

inline constexpr double kSamplerProbTol = 1e-10;

// Solves P(Z2 <= z2 | Z1 = z1) = u for z2 with a bracketed root search in
// log z2. The bracket starts at [1e-8, 1e8] and widens by a factor 1e4 per
// side until it encloses the root.
inline double conditional_quantile(const CopulaSpec& spec, double z1, double u) {
  if (spec.family == CopulaFamily::Logistic && spec.param == 1.0) return -1.0 / std::log(u);
  auto f = [&](double t) { return std::exp(log_conditional_cdf(spec, z1, t)) - u; };
  double lo = std::log(1e-8), hi = std::log(1e8);
  const double widen = std::log(1e4);
  int expansions = 0;
  double flo = f(lo), fhi = f(hi);
  while ((flo > 0.0 || fhi < 0.0) && expansions < 15) {
    if (flo > 0.0) flo = f(lo -= widen);
    if (fhi < 0.0) fhi = f(hi += widen);
    ++expansions;
  }
  if (flo > 0.0 || fhi < 0.0) {
    std::ostringstream os;
    os << "conditional inversion: root not bracketed (z1=" << z1 << ", u=" << u
       << ", param=" << spec.param << ", f(lo)=" << flo << ", f(hi)=" << fhi << ")";
    throw NumericError(os.str());
  }
  if (flo == 0.0) return std::exp(lo);
  if (fhi == 0.0) return std::exp(hi);
  std::uintmax_t max_iter = 200;
  auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-13 * (1.0 + std::abs(a)); };
  const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, max_iter);
  const double fa = f(a), fb = f(b);
  const double t = std::abs(fa) <= std::abs(fb) ? a : b;
  if (std::min(std::abs(fa), std::abs(fb)) > kSamplerProbTol && !tol(a, b)) {
    std::ostringstream os;
    os << "conditional inversion did not converge (z1=" << z1 << ", u=" << u
       << ", bracket=[" << a << "," << b << "], residual=" << std::min(std::abs(fa), std::abs(fb))
       << ", iterations=" << max_iter << ")";
    throw NumericError(os.str());
  }
  return std::exp(t);
}

// Exact draw: Z1 from unit Frechet, then Z2 from the conditional law.
inline BivariatePair sample_pair(const CopulaSpec& spec, Rng& rng) {
  spec.validate();
  const double z1 = -1.0 / std::log(uniform_open(rng));
  const double u = uniform_open(rng);
  return {FrechetValue(z1), FrechetValue(conditional_quantile(spec, z1, u))};
}

}  // namespace tailicp
