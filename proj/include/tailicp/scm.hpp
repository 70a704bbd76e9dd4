#pragma once

// Structural causal model generators for the three simulation studies.
// Draws use inversion from uniform variates only, so datasets depend on the
// seed and nothing else.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tailicp/errors.hpp"
#include "tailicp/evt.hpp"
#include "tailicp/maxstable.hpp"
#include "tailicp/rng.hpp"
#include "tailicp/special.hpp"

namespace tailicp {

enum class Study { S41, S42, S43 };

inline std::string study_name(Study s) {
  switch (s) {
    case Study::S41: return "s41";
    case Study::S42: return "s42";
    case Study::S43: return "s43";
  }
  return "?";
}

inline Study parse_study(const std::string& s) {
  if (s == "s41" || s == "S41") return Study::S41;
  if (s == "s42" || s == "S42") return Study::S42;
  if (s == "s43" || s == "S43") return Study::S43;
  throw DomainError("unknown study '" + s + "' (expected s41, s42 or s43)");
}

inline int environment_count(Study s) {
  switch (s) {
    case Study::S41: return 4;
    case Study::S42: return 2;
    case Study::S43: return 3;
  }
  return 0;
}

// Generator parameters. S41 reads p, q, beta; S43 reads a, tau.
struct ScmParams {
  double p = 2.0;
  double q = 0.0;
  double beta = 1.0;
  double a = 0.0;
  long tau = 50;
};

struct ScmDataset {
  std::string env_id;
  Eigen::MatrixXd x;                 // n x d observed covariates
  std::vector<BivariatePair> pairs;  // S41, S42: simple max-stable pairs
  Eigen::MatrixXd premaxima;         // S43: (tau*n) x 2 raw series
  Eigen::MatrixXd maxima;            // S43: n x 2 block maxima of premaxima

  Eigen::Index rows() const { return x.rows(); }
};

inline double std_normal(Rng& rng) { return normal_quantile(uniform_open(rng)); }
inline double std_exponential(Rng& rng) { return -std::log(uniform_open(rng)); }

inline constexpr double kMinLogisticAlpha = 1e-9;

namespace detail {

inline double sigmoid(double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); }

inline ScmDataset gen_s41(int env, const ScmParams& c, long n, Rng& rng) {
  ScmDataset d;
  d.x.resize(n, 3);
  d.pairs.reserve(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    const double x1 = (env == 2 ? c.p : 0.0) + std_normal(rng);
    const double x2 = env == 3 ? -10.0 : c.q * x1 + std_exponential(rng);
    const double alpha = std::max(sigmoid(c.beta * x1), kMinLogisticAlpha);
    const auto pair = sample_pair(CopulaSpec::logistic(alpha), rng);
    const double y = std::log(std::max(pair.z1.value(), pair.z2.value())) - kEulerGamma;
    const double x3 = y + (env == 4 ? x1 : 0.0) + std_normal(rng);
    d.x(i, 0) = x1;
    d.x(i, 1) = x2;
    d.x(i, 2) = x3;
    d.pairs.push_back(pair);
  }
  return d;
}

inline constexpr double kMinHrLambda = 1e-9;

inline ScmDataset gen_s42(int env, long n, Rng& rng) {
  ScmDataset d;
  d.x.resize(n, 2);
  d.pairs.reserve(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    const double h = std_exponential(rng) - 1.0;
    const double x1 = std_normal(rng) + (env == 2 ? 5.0 : 0.0);
    const double x2 = x1 + h + std_normal(rng);
    const double lambda = std::max(std::abs(x2 + 3.0 * h) / 5.0, kMinHrLambda);
    d.x(i, 0) = x1;
    d.x(i, 1) = x2;
    d.pairs.push_back(sample_pair(CopulaSpec::husler_reiss(lambda), rng));
  }
  return d;
}

// Phi^{-1}(exp(-1/z)), using the upper tail for large z.
inline double frechet_to_normal(double z) {
  const double p = std::exp(-1.0 / z);
  return p < 0.5 ? normal_quantile(p) : -normal_quantile(-std::expm1(-1.0 / z));
}

inline ScmDataset gen_s43(int env, const ScmParams& c, long n, Rng& rng) {
  if (c.tau < 1) throw DomainError("S43: tau must be positive");
  if (c.a < 0.0) throw DomainError("S43: a must be non-negative");
  ScmDataset d;
  const long tau = c.tau;
  const double x1 = env == 2 ? 5.0 : 1.0;
  const auto spec = CopulaSpec::logistic(1.0 / x1);
  d.x.resize(n, 2);
  d.premaxima.resize(n * tau, 2);
  d.maxima.resize(n, 2);
  for (long b = 0; b < n; ++b) {
    const double x2 = env == 3 ? 1.0 : std_exponential(rng);
    d.x(b, 0) = x1;
    d.x(b, 1) = x2;
    for (long k = 0; k < tau; ++k) {
      const auto pair = sample_pair(spec, rng);
      // Gaussian margins through the unit-Frechet probability exp(-1/z).
      const double e1 = frechet_to_normal(pair.z1.value());
      const double e2 = frechet_to_normal(pair.z2.value());
      d.premaxima(b * tau + k, 0) = c.a * x2 + e1;
      d.premaxima(b * tau + k, 1) = c.a * x2 + e2;
    }
    d.maxima.row(b) = d.premaxima.middleRows(b * tau, tau).colwise().maxCoeff();
  }
  return d;
}

}  // namespace detail

// One environment of the given study; env_index is 1-based.
inline ScmDataset gen_environment(Study study, int env_index, const ScmParams& params, long n, Rng& rng) {
  if (n < 1) throw DomainError("gen_environment: n must be positive");
  if (env_index < 1 || env_index > environment_count(study))
    throw DomainError("gen_environment: study " + study_name(study) + " has no environment " +
                      std::to_string(env_index));
  ScmDataset d;
  switch (study) {
    case Study::S41: d = detail::gen_s41(env_index, params, n, rng); break;
    case Study::S42: d = detail::gen_s42(env_index, n, rng); break;
    case Study::S43: d = detail::gen_s43(env_index, params, n, rng); break;
  }
  d.env_id = "env" + std::to_string(env_index);
  return d;
}

}  // namespace tailicp
