#pragma once

// Invariant causal prediction over covariate subsets with LogMax responses.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tailicp/adtest.hpp"
#include "tailicp/errors.hpp"
#include "tailicp/gam.hpp"
#include "tailicp/parallel.hpp"

namespace tailicp {

inline constexpr std::size_t kMaxScanCovariates = 20;
inline constexpr Eigen::Index kSmallEnvironment = 30;

struct Environment {
  std::string id;
  Eigen::MatrixXd x;  // n_e x d
  Eigen::VectorXd y;  // LogMax responses
};

using Subset = std::vector<std::size_t>;  // sorted 0-based covariate indices

inline std::vector<std::string> subset_labels(const Subset& s) {
  std::vector<std::string> out;
  for (auto i : s) out.push_back(std::to_string(i + 1));
  return out;
}

inline std::string subset_string(const Subset& s) {
  if (s.empty()) return "{}";
  std::string out = "{";
  for (std::size_t k = 0; k < s.size(); ++k) out += (k ? "," : "") + std::to_string(s[k] + 1);
  return out + "}";
}

inline bool is_strict_subset(const Subset& a, const Subset& b) {
  return a.size() < b.size() && std::includes(b.begin(), b.end(), a.begin(), a.end());
}

// Formula rule per subset: covariates with fewer than `min_distinct_for_smooth`
// distinct pooled values enter linearly, the rest as smooths with basis
// min(max_basis, distinct values).
struct FormulaPolicy {
  int max_basis = kDefaultBasisSize;
  int min_distinct_for_smooth = 4;
  SmoothingSpec smoothing = SmoothingSpec::gcv();

  SmoothFormula formula_for(const Subset& s, const Eigen::MatrixXd& pooled) const {
    SmoothFormula f;
    for (auto c : s) {
      const auto col = pooled.col(static_cast<Eigen::Index>(c));
      std::vector<double> v(col.data(), col.data() + col.size());
      std::sort(v.begin(), v.end());
      const auto distinct = static_cast<int>(std::unique(v.begin(), v.end()) - v.begin());
      if (distinct < min_distinct_for_smooth) f.linear_terms.push_back(c);
      else f.smooth_terms.push_back({c, std::min(max_basis, distinct)});
    }
    return f;
  }
};

enum class SubsetStatus { Accepted, Rejected, Pruned, Error };

inline std::string status_name(SubsetStatus s) {
  switch (s) {
    case SubsetStatus::Accepted: return "accepted";
    case SubsetStatus::Rejected: return "rejected";
    case SubsetStatus::Pruned: return "pruned";
    case SubsetStatus::Error: return "error";
  }
  return "?";
}

struct SubsetResult {
  Subset subset;
  SubsetStatus status = SubsetStatus::Rejected;
  double p_value = std::numeric_limits<double>::quiet_NaN();
  bool accepted = false;
  KSampleResult test;
  std::string error;
  std::shared_ptr<const SmoothModel> fitted;
};

struct IcpOptions {
  double alpha = 0.05;
  bool prune = true;
  FormulaPolicy policy;
  AdOptions test;
  int threads = 1;
  bool keep_models = false;
};

struct IcpResult {
  std::vector<SubsetResult> per_subset;
  Subset s_hat;
  double alpha = 0.05;
  bool all_rejected_flag = false;
  std::vector<std::string> warnings;

  const SubsetResult* find(const Subset& s) const {
    for (const auto& r : per_subset)
      if (r.subset == s) return &r;
    return nullptr;
  }
};

namespace detail {

struct PooledEnvironments {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<Eigen::Index> offsets;  // size |E| + 1
};

inline PooledEnvironments pool_environments(const std::vector<Environment>& envs) {
  if (envs.empty()) throw DomainError("ICP needs at least one environment");
  const auto d = envs.front().x.cols();
  PooledEnvironments p;
  Eigen::Index n = 0;
  p.offsets.push_back(0);
  for (const auto& e : envs) {
    if (e.x.cols() != d)
      throw DomainError("environment '" + e.id + "' has " + std::to_string(e.x.cols()) +
                        " covariates, expected " + std::to_string(d));
    if (e.x.rows() != e.y.size())
      throw DomainError("environment '" + e.id + "': covariate and response lengths differ");
    n += e.x.rows();
    p.offsets.push_back(n);
  }
  p.x.resize(n, d);
  p.y.resize(n);
  for (std::size_t k = 0; k < envs.size(); ++k) {
    p.x.middleRows(p.offsets[k], envs[k].x.rows()) = envs[k].x;
    p.y.segment(p.offsets[k], envs[k].y.size()) = envs[k].y;
  }
  return p;
}

inline SubsetResult test_pooled(const Subset& s, const std::vector<Environment>& envs,
                                const PooledEnvironments& pooled, const IcpOptions& opt) {
  SubsetResult r;
  r.subset = s;
  try {
    const auto formula = opt.policy.formula_for(s, pooled.x);
    auto model = fit_gumbel_location(pooled.y, pooled.x, formula, opt.policy.smoothing);
    const Eigen::VectorXd eta = residuals(model, pooled.y, pooled.x);
    std::vector<std::vector<double>> samples(envs.size());
    std::vector<std::string> labels;
    for (std::size_t k = 0; k < envs.size(); ++k) {
      const auto seg = eta.segment(pooled.offsets[k], pooled.offsets[k + 1] - pooled.offsets[k]);
      samples[k].assign(seg.data(), seg.data() + seg.size());
      labels.push_back(envs[k].id);
    }
    r.test = ad_k_sample(samples, opt.test, labels);
    r.p_value = r.test.p_value;
    r.accepted = r.p_value >= opt.alpha;
    r.status = r.accepted ? SubsetStatus::Accepted : SubsetStatus::Rejected;
    if (opt.keep_models) r.fitted = std::make_shared<const SmoothModel>(std::move(model));
  } catch (const Error& e) {
    r.status = SubsetStatus::Error;
    r.accepted = false;
    r.error = e.what();
  }
  return r;
}

}  // namespace detail

// Pools all environments, fits the Gumbel location model on X_S and tests
// equality of the per-environment residual distributions.
inline SubsetResult test_subset(const Subset& s, const std::vector<Environment>& envs,
                                const IcpOptions& opt = {}) {
  const auto pooled = detail::pool_environments(envs);
  for (auto c : s)
    if (c >= static_cast<std::size_t>(pooled.x.cols()))
      throw DomainError("subset " + subset_string(s) + " references a missing covariate");
  Subset sorted = s;
  std::sort(sorted.begin(), sorted.end());
  return detail::test_pooled(sorted, envs, pooled, opt);
}

inline std::vector<Subset> subsets_of_size(std::size_t d, std::size_t k) {
  std::vector<Subset> out;
  Subset cur;
  auto rec = [&](auto&& self, std::size_t start) -> void {
    if (cur.size() == k) {
      out.push_back(cur);
      return;
    }
    for (std::size_t i = start; i < d; ++i) {
      cur.push_back(i);
      self(self, i + 1);
      cur.pop_back();
    }
  };
  rec(rec, 0);
  return out;
}

// Scans subsets by increasing size. With pruning, strict supersets of an
// accepted set are recorded as pruned and not tested. The estimate is the
// intersection of accepted sets.
inline IcpResult icp_scan(const std::vector<Environment>& envs, const IcpOptions& opt = {}) {
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  const auto pooled = detail::pool_environments(envs);
  const auto d = static_cast<std::size_t>(pooled.x.cols());
  if (d > kMaxScanCovariates)
    throw ConfigError("ICP scan supports at most 20 covariates, got " + std::to_string(d));
  IcpResult res;
  res.alpha = opt.alpha;
  for (const auto& e : envs)
    if (e.x.rows() < kSmallEnvironment)
      res.warnings.push_back("environment '" + e.id + "' has only " + std::to_string(e.x.rows()) + " rows");

  std::vector<Subset> accepted;
  for (std::size_t k = 0; k <= d; ++k) {
    const auto level = subsets_of_size(d, k);
    std::vector<SubsetResult> out(level.size());
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < level.size(); ++i) {
      const bool pruned = opt.prune && std::any_of(accepted.begin(), accepted.end(), [&](const Subset& a) {
                            return is_strict_subset(a, level[i]);
                          });
      if (pruned) {
        out[i].subset = level[i];
        out[i].status = SubsetStatus::Pruned;
      } else {
        todo.push_back(i);
      }
    }
    parallel_for(todo.size(), opt.threads,
                 [&](std::size_t j) { out[todo[j]] = detail::test_pooled(level[todo[j]], envs, pooled, opt); });
    for (auto& r : out) {
      if (r.status == SubsetStatus::Accepted) accepted.push_back(r.subset);
      res.per_subset.push_back(std::move(r));
    }
  }
  if (accepted.empty()) {
    res.all_rejected_flag = true;
    return res;
  }
  Subset inter = accepted.front();
  for (const auto& a : accepted) {
    Subset tmp;
    std::set_intersection(inter.begin(), inter.end(), a.begin(), a.end(), std::back_inserter(tmp));
    inter = std::move(tmp);
  }
  res.s_hat = std::move(inter);
  return res;
}

inline nlohmann::json to_json(const IcpResult& r) {
  nlohmann::json j;
  j["alpha"] = r.alpha;
  j["s_hat"] = subset_labels(r.s_hat);
  j["all_rejected_flag"] = r.all_rejected_flag;
  j["warnings"] = r.warnings;
  j["subsets"] = nlohmann::json::array();
  for (const auto& s : r.per_subset) {
    nlohmann::json e;
    e["subset"] = subset_labels(s.subset);
    e["status"] = status_name(s.status);
    if (std::isfinite(s.p_value)) {
      e["p_value"] = s.p_value;
      e["statistic"] = s.test.statistic;
      e["p_capped"] = s.test.p_capped;
      e["p_floored"] = s.test.p_floored;
    } else {
      e["p_value"] = nullptr;
    }
    if (!s.error.empty()) e["error"] = s.error;
    j["subsets"].push_back(std::move(e));
  }
  return j;
}

}  // namespace tailicp
