#pragma once

// Rank-based equality-of-distribution tests: the two-sample Anderson-Darling
// discrepancy and the Scholz-Stephens k-sample statistic with tabulated
// p-values.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tailicp/errors.hpp"
#include "tailicp/rng.hpp"

namespace tailicp {

namespace detail {

// Pooled sample sorted by value, with the originating sample index.
struct PooledSample {
  std::vector<double> values;          // distinct values, ascending
  std::vector<double> multiplicity;    // l_j
  std::vector<std::vector<double>> at;  // at[i][j] = #obs of sample i equal to values[j]
  std::size_t total = 0;
};

inline PooledSample pool(std::span<const std::vector<double>> samples) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (double v : samples[i]) {
      if (!std::isfinite(v)) throw DomainError("Anderson-Darling: non-finite observation");
      all.emplace_back(v, i);
    }
  std::sort(all.begin(), all.end());
  PooledSample p;
  p.total = all.size();
  p.at.assign(samples.size(), {});
  for (std::size_t r = 0; r < all.size();) {
    std::size_t e = r;
    p.values.push_back(all[r].first);
    for (auto& col : p.at) col.push_back(0.0);
    while (e < all.size() && all[e].first == all[r].first) {
      p.at[all[e].second].back() += 1.0;
      ++e;
    }
    p.multiplicity.push_back(static_cast<double>(e - r));
    r = e;
  }
  return p;
}

// Order-independent sum: the terms are sorted before accumulation so that
// permuting the samples cannot change the last bits of the result.
inline double canonical_sum(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

}  // namespace detail

// Two-sample discrepancy
//   mn/(n+m) * integral (F_n - G_m)^2 / (H (1 - H)) dH
// evaluated exactly over the pooled empirical measure, skipping the pooled
// points where H = 1.
inline double ad_two_sample(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 2 || y.size() < 2)
    throw DomainError("ad_two_sample: each sample needs at least two observations");
  std::array<std::vector<double>, 2> s{std::vector<double>(x.begin(), x.end()),
                                       std::vector<double>(y.begin(), y.end())};
  const auto p = detail::pool(s);
  const double n = static_cast<double>(x.size()), m = static_cast<double>(y.size());
  const double N = n + m;
  double cx = 0.0, cy = 0.0, sum = 0.0;
  for (std::size_t j = 0; j < p.values.size(); ++j) {
    cx += p.at[0][j];
    cy += p.at[1][j];
    const double H = (cx + cy) / N;
    if (cx + cy >= N) break;
    const double d = cx / n - cy / m;
    sum += d * d / (H * (1.0 - H)) * (p.multiplicity[j] / N);
  }
  return n * m / N * sum;
}

enum class AdVersion { Midrank, Standard };
enum class PValueMethod { Table, Permutation };

struct AdOptions {
  AdVersion version = AdVersion::Midrank;
  PValueMethod method = PValueMethod::Table;
  std::size_t permutations = 999;
  std::uint64_t seed = 0;
  std::size_t min_sample_size = 5;
};

struct KSampleResult {
  double statistic = 0.0;  // standardised (A2 - (k - 1)) / sigma_N
  double a2 = 0.0;         // unstandardised A2
  double p_value = 1.0;
  std::vector<std::size_t> per_sample_sizes;
  bool p_capped = false;   // statistic below the table, p reported as 0.25 (true p >= 0.25)
  bool p_floored = false;  // statistic above the table, p reported as 0.001
};

namespace detail {

inline double ad_raw_statistic(const PooledSample& p, std::span<const std::vector<double>> samples,
                               AdVersion version) {
  const double N = static_cast<double>(p.total);
  const std::size_t L = p.values.size();
  std::vector<double> per_sample;
  per_sample.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double ni = static_cast<double>(samples[i].size());
    double B = 0.0, M = 0.0, inner = 0.0;
    for (std::size_t j = 0; j < L; ++j) {
      const double l = p.multiplicity[j];
      const double f = p.at[i][j];
      if (version == AdVersion::Midrank) {
        const double Ba = B + l / 2.0;
        const double Ma = M + f / 2.0;
        const double num = N * Ma - Ba * ni;
        inner += l / N * num * num / (Ba * (N - Ba) - N * l / 4.0);
      } else if (j + 1 < L) {
        const double Bj = B + l, Mj = M + f;
        const double num = N * Mj - Bj * ni;
        inner += l / N * num * num / (Bj * (N - Bj));
      }
      B += l;
      M += f;
    }
    per_sample.push_back(inner / ni);
  }
  double a2 = canonical_sum(std::move(per_sample));
  if (version == AdVersion::Midrank) a2 *= (N - 1.0) / N;
  return a2;
}

// Null variance of A2 for sample sizes n_i (Scholz & Stephens, 1987).
inline double ad_null_variance(std::span<const std::size_t> sizes) {
  const double k = static_cast<double>(sizes.size());
  std::size_t Nn = 0;
  std::vector<double> inv;
  for (auto s : sizes) {
    Nn += s;
    inv.push_back(1.0 / static_cast<double>(s));
  }
  const double N = static_cast<double>(Nn);
  const double H = canonical_sum(std::move(inv));
  // h = sum_{i=1}^{N-1} 1/i ; g = sum_{j=2}^{N-1} (1/j) sum_{i=1}^{j-1} 1/(N-i)
  double h = 0.0, g = 0.0, partial = 0.0;
  for (std::size_t i = 1; i < Nn; ++i) h += 1.0 / static_cast<double>(i);
  for (std::size_t j = 2; j < Nn; ++j) {
    partial += 1.0 / (N - static_cast<double>(j - 1));
    g += partial / static_cast<double>(j);
  }
  const double a = (4 * g - 6) * (k - 1) + (10 - 6 * g) * H;
  const double b = (2 * g - 4) * k * k + 8 * h * k + (2 * g - 14 * h - 4) * H - 8 * h + 4 * g - 6;
  const double c = (6 * h + 2 * g - 2) * k * k + (4 * h - 4 * g + 6) * k + (2 * h - 6) * H + 4 * h;
  const double d = (2 * h + 6) * k * k - 4 * h * k;
  return (a * N * N * N + b * N * N + c * N + d) / ((N - 1.0) * (N - 2.0) * (N - 3.0));
}

inline constexpr std::array<double, 7> kAdSignificance{0.25, 0.1, 0.05, 0.025, 0.01, 0.005, 0.001};

// Critical values of the standardised statistic for m = k - 1.
inline std::array<double, 7> ad_critical_values(double m) {
  constexpr std::array<double, 7> b0{0.675, 1.281, 1.645, 1.96, 2.326, 2.573, 3.085};
  constexpr std::array<double, 7> b1{-0.245, 0.25, 0.678, 1.149, 1.822, 2.364, 3.615};
  constexpr std::array<double, 7> b2{-0.105, -0.305, -0.362, -0.391, -0.396, -0.345, -0.154};
  std::array<double, 7> crit{};
  for (std::size_t i = 0; i < 7; ++i) crit[i] = b0[i] + b1[i] / std::sqrt(m) + b2[i] / m;
  return crit;
}

// Quadratic least-squares fit of log(significance) on the critical values,
// evaluated at the statistic; clamped to [0.001, 0.25] outside the table.
inline void ad_table_pvalue(KSampleResult& r, double m) {
  const auto crit = ad_critical_values(m);
  const auto [lo, hi] = std::minmax_element(crit.begin(), crit.end());
  if (r.statistic < *lo) {
    r.p_value = kAdSignificance.front();
    r.p_capped = true;
    return;
  }
  if (r.statistic > *hi) {
    r.p_value = kAdSignificance.back();
    r.p_floored = true;
    return;
  }
  Eigen::Matrix<double, 7, 3> V;
  Eigen::Matrix<double, 7, 1> y;
  for (int i = 0; i < 7; ++i) {
    V(i, 0) = crit[static_cast<std::size_t>(i)] * crit[static_cast<std::size_t>(i)];
    V(i, 1) = crit[static_cast<std::size_t>(i)];
    V(i, 2) = 1.0;
    y(i) = std::log(kAdSignificance[static_cast<std::size_t>(i)]);
  }
  const Eigen::Vector3d coef = V.colPivHouseholderQr().solve(y);
  const double t = r.statistic;
  r.p_value = std::exp(coef(0) * t * t + coef(1) * t + coef(2));
}

}  // namespace detail

// Scholz-Stephens k-sample Anderson-Darling test. `labels`, when given,
// names the samples in error messages.
inline KSampleResult ad_k_sample(std::span<const std::vector<double>> samples,
                                 const AdOptions& opt = {},
                                 std::span<const std::string> labels = {}) {
  if (samples.size() < 2) throw DomainError("ad_k_sample: need at least two samples");
  KSampleResult r;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() < opt.min_sample_size) {
      const std::string name = i < labels.size() ? labels[i] : "#" + std::to_string(i);
      throw DomainError("ad_k_sample: sample '" + name + "' has " +
                        std::to_string(samples[i].size()) + " observations, need at least " +
                        std::to_string(opt.min_sample_size));
    }
    r.per_sample_sizes.push_back(samples[i].size());
  }
  const auto pooled = detail::pool(samples);
  if (pooled.total < 4) throw DomainError("ad_k_sample: pooled sample too small");
  const double m = static_cast<double>(samples.size() - 1);
  const double sd = std::sqrt(detail::ad_null_variance(r.per_sample_sizes));
  r.a2 = detail::ad_raw_statistic(pooled, samples, opt.version);
  r.statistic = (r.a2 - m) / sd;

  if (opt.method == PValueMethod::Table) {
    detail::ad_table_pvalue(r, m);
    return r;
  }
  // Permutation fallback: reshuffle the pooled observations over samples.
  std::vector<double> all;
  for (const auto& s : samples) all.insert(all.end(), s.begin(), s.end());
  Rng rng(opt.seed);
  std::size_t hits = 0;
  std::vector<std::vector<double>> perm(samples.size());
  for (std::size_t b = 0; b < opt.permutations; ++b) {
    std::shuffle(all.begin(), all.end(), rng);
    std::size_t off = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      perm[i].assign(all.begin() + static_cast<long>(off),
                     all.begin() + static_cast<long>(off + samples[i].size()));
      off += samples[i].size();
    }
    const double a2 = detail::ad_raw_statistic(detail::pool(perm), perm, opt.version);
    if (a2 >= r.a2) ++hits;
  }
  r.p_value = static_cast<double>(hits + 1) / static_cast<double>(opt.permutations + 1);
  return r;
}

}  // namespace tailicp
