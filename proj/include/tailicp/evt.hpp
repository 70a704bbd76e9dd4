#pragma once

// Univariate extreme-value primitives: GEV distribution functions, block
// maxima and the probability integral transform to unit Frechet margins.

#include <cmath>
#include <concepts>
#include <limits>
#include <span>
#include <sstream>
#include <vector>

#include "tailicp/errors.hpp"

namespace tailicp {

// |xi| below this uses the Gumbel (xi = 0) branch.
inline constexpr double kZeroShape = 1e-8;

struct GevParams {
  double mu = 0.0;
  double sigma = 1.0;
  double xi = 0.0;

  bool valid() const noexcept {
    return std::isfinite(mu) && std::isfinite(sigma) && std::isfinite(xi) && sigma > 0.0;
  }
  bool gumbel() const noexcept { return std::abs(xi) < kZeroShape; }

  // Finite endpoint of the support (lower for xi > 0, upper for xi < 0).
  double support_bound() const noexcept { return mu - sigma / xi; }

  void validate() const {
    if (!valid()) {
      std::ostringstream os;
      os << "invalid GEV parameters (mu=" << mu << ", sigma=" << sigma << ", xi=" << xi << ")";
      throw DomainError(os.str());
    }
  }
};

// Value on the unit Frechet scale, P(Z <= z) = exp(-1/z).
class FrechetValue {
 public:
  explicit FrechetValue(double z) : z_(z) {
    if (!(z > 0.0) || !std::isfinite(z)) throw DomainError("unit Frechet value must be finite and > 0");
  }
  double value() const noexcept { return z_; }
  operator double() const noexcept { return z_; }

 private:
  double z_;
};

inline double gev_cdf(double x, const GevParams& p) {
  p.validate();
  if (!std::isfinite(x)) throw DomainError("gev_cdf: non-finite argument");
  const double z = (x - p.mu) / p.sigma;
  if (p.gumbel()) return std::exp(-std::exp(-z));
  const double t = 1.0 + p.xi * z;
  if (t <= 0.0) return p.xi > 0.0 ? 0.0 : 1.0;
  return std::exp(-std::exp(-std::log1p(p.xi * z) / p.xi));
}

inline double gev_quantile(double u, const GevParams& p) {
  p.validate();
  if (!(u > 0.0 && u < 1.0)) throw DomainError("gev_quantile: probability must lie in (0,1)");
  const double y = -std::log(u);
  if (p.gumbel()) return p.mu - p.sigma * std::log(y);
  return p.mu + p.sigma * std::expm1(-p.xi * std::log(y)) / p.xi;
}

// Log-density. Points outside the support give -infinity.
inline double gev_logpdf(double x, const GevParams& p) {
  p.validate();
  if (!std::isfinite(x)) throw DomainError("gev_logpdf: non-finite argument");
  const double z = (x - p.mu) / p.sigma;
  if (p.gumbel()) return -std::log(p.sigma) - z - std::exp(-z);
  const double t = 1.0 + p.xi * z;
  if (t <= 0.0) return -std::numeric_limits<double>::infinity();
  const double lt = std::log1p(p.xi * z);
  return -std::log(p.sigma) - (1.0 + 1.0 / p.xi) * lt - std::exp(-lt / p.xi);
}

// Unit Frechet value for a margin probability strictly inside (0,1).
inline FrechetValue frechet_from_probability(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) {
    std::ostringstream os;
    os << "probability integral transform at boundary probability " << prob;
    throw TransformError(os.str(), prob);
  }
  return FrechetValue(-1.0 / std::log(prob));
}

template <class Cdf>
  requires std::invocable<Cdf, double>
FrechetValue to_unit_frechet(double z, Cdf&& margin_cdf) {
  return frechet_from_probability(static_cast<double>(margin_cdf(z)));
}

// Non-overlapping block maxima. A trailing partial block is dropped.
inline std::vector<double> block_maxima(std::span<const double> series, long tau) {
  if (tau <= 0) throw DomainError("block_maxima: block length must be positive");
  const std::size_t block = static_cast<std::size_t>(tau);
  std::vector<double> out;
  out.reserve(series.size() / block);
  for (std::size_t start = 0; start + block <= series.size(); start += block) {
    double m = series[start];
    for (std::size_t i = start + 1; i < start + block; ++i) m = std::max(m, series[i]);
    out.push_back(m);
  }
  return out;
}

}  // namespace tailicp
