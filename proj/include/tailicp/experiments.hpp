#pragma once

// Simulation-study harness: grids of generator parameters, repeated ICP
// scans with derived seeds, and per-cell tallies of the estimated set.

#include <bit>
#include <cstdint>
#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tailicp/config.hpp"
#include "tailicp/errors.hpp"
#include "tailicp/evt.hpp"
#include "tailicp/gev_fit.hpp"
#include "tailicp/icp.hpp"
#include "tailicp/io.hpp"
#include "tailicp/parallel.hpp"
#include "tailicp/projection.hpp"
#include "tailicp/rng.hpp"
#include "tailicp/scm.hpp"

namespace tailicp {

enum class MarginPolicy { WithX2, Constant };

inline std::string policy_name(MarginPolicy p) { return p == MarginPolicy::WithX2 ? "with_x2" : "constant"; }

struct StudyConfig {
  Study study = Study::S41;
  std::vector<double> p{0.5, 1.0, 2.0};
  std::vector<double> q{0.0, 0.25, 1.0};
  std::vector<double> beta{0.5, 1.0, 2.0};
  std::vector<long> n{500};
  std::vector<double> a{0.0, 1.0, 2.0};
  std::vector<long> tau{50, 100};
  std::vector<MarginPolicy> policies{MarginPolicy::WithX2, MarginPolicy::Constant};
  long reps = 20;
  std::uint64_t master_seed = 1;
  double alpha = 0.05;
  int threads = 1;

  static StudyConfig defaults(Study s) {
    StudyConfig c;
    c.study = s;
    if (s == Study::S42) c.n = {200, 500, 1000, 2000, 5000};
    if (s == Study::S43) c.n = {1000};
    return c;
  }

  // Keys: study, reps, master_seed, alpha, threads, n, and per study
  // p/q/beta (s41), a/tau/policies (s43).
  static StudyConfig from_config(const Config& cfg, std::optional<Study> forced = std::nullopt) {
    cfg.require_known({"study", "reps", "master_seed", "alpha", "threads", "n", "p", "q", "beta", "a", "tau",
                       "policies"});
    Study s = forced ? *forced : parse_study(cfg.get_string("study", "s41"));
    if (forced && cfg.has("study") && parse_study(cfg.get_string("study", "")) != *forced)
      throw ParseError(cfg.source(), cfg.line_of("study"), "key 'study' disagrees with --study");
    auto c = defaults(s);
    c.reps = cfg.get_long("reps", c.reps);
    c.master_seed = cfg.get_u64("master_seed", c.master_seed);
    c.alpha = cfg.get_double("alpha", c.alpha);
    c.threads = static_cast<int>(cfg.get_long("threads", c.threads));
    c.n = cfg.get_longs("n", c.n);
    c.p = cfg.get_doubles("p", c.p);
    c.q = cfg.get_doubles("q", c.q);
    c.beta = cfg.get_doubles("beta", c.beta);
    c.a = cfg.get_doubles("a", c.a);
    c.tau = cfg.get_longs("tau", c.tau);
    if (cfg.has("policies")) {
      c.policies.clear();
      const auto& e = cfg.entries().at("policies");
      for (const auto& v : e.items) {
        if (v == "with_x2") c.policies.push_back(MarginPolicy::WithX2);
        else if (v == "constant") c.policies.push_back(MarginPolicy::Constant);
        else throw ParseError(cfg.source(), e.line, "key 'policies': unknown policy '" + v + "'");
      }
    }
    c.validate();
    return c;
  }

  void validate() const {
    if (reps < 1) throw ConfigError("reps must be at least 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (threads < 1) throw ConfigError("threads must be at least 1");
    if (n.empty()) throw ConfigError("n grid is empty");
    for (long v : n)
      if (v < 10) throw ConfigError("n values must be at least 10");
    if (study == Study::S41 && (p.empty() || q.empty() || beta.empty()))
      throw ConfigError("s41 needs non-empty p, q and beta grids");
    if (study == Study::S43) {
      if (a.empty() || tau.empty() || policies.empty()) throw ConfigError("s43 needs non-empty a, tau and policies");
      for (double v : a)
        if (v < 0.0) throw ConfigError("a values must be non-negative");
      for (long v : tau)
        if (v < 1) throw ConfigError("tau values must be positive");
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["study"] = study_name(study);
    j["reps"] = reps;
    j["master_seed"] = master_seed;
    j["alpha"] = alpha;
    j["n"] = n;
    if (study == Study::S41) {
      j["p"] = p;
      j["q"] = q;
      j["beta"] = beta;
    }
    if (study == Study::S43) {
      j["a"] = a;
      j["tau"] = tau;
      std::vector<std::string> pol;
      for (auto x : policies) pol.push_back(policy_name(x));
      j["policies"] = pol;
    }
    return j;
  }
};

struct RepOutcome {
  Subset s_hat;
  bool all_rejected = false;
  bool error = false;
  std::string message;
};

struct CellOutcome {
  std::vector<std::pair<std::string, std::string>> params;
  long reps = 0;
  long correct = 0;
  long all_rejected = 0;
  long errors = 0;
  std::map<Subset, long> counts;  // estimated sets, excluding all-rejected runs and errors
  std::vector<std::string> error_messages;

  double fraction_correct() const { return reps ? static_cast<double>(correct) / static_cast<double>(reps) : 0.0; }
  long count(const Subset& s) const {
    const auto it = counts.find(s);
    return it == counts.end() ? 0 : it->second;
  }
  // The estimated set with the largest count; all-rejected runs count as the empty set.
  Subset modal() const {
    std::map<Subset, long> c = counts;
    c[Subset{}] += all_rejected;
    Subset best;
    long top = -1;
    for (const auto& [s, k] : c)
      if (k > top) {
        top = k;
        best = s;
      }
    return best;
  }
  std::string param(const std::string& name) const {
    for (const auto& [k, v] : params)
      if (k == name) return v;
    return {};
  }
};

struct StudyOutcome {
  Study study = Study::S41;
  std::size_t d = 0;  // number of observed covariates
  Subset expected;
  std::vector<CellOutcome> cells;

  std::string to_csv() const {
    std::vector<std::string> header;
    if (!cells.empty())
      for (const auto& [k, v] : cells.front().params) header.push_back(k);
    header.insert(header.end(), {"reps", "fraction_correct"});
    std::vector<Subset> all;
    for (std::size_t k = 0; k <= d; ++k)
      for (auto& s : subsets_of_size(d, k)) all.push_back(s);
    for (const auto& s : all) {
      std::string name = "shat_";
      if (s.empty()) name += "empty";
      for (std::size_t i = 0; i < s.size(); ++i) name += (i ? "_" : "") + std::to_string(s[i] + 1);
      header.push_back(name);
    }
    header.insert(header.end(), {"all_rejected", "errors"});
    CsvWriter w(header);
    for (const auto& c : cells) {
      std::vector<std::string> row;
      for (const auto& [k, v] : c.params) row.push_back(v);
      row.push_back(std::to_string(c.reps));
      row.push_back(format_double(c.fraction_correct()));
      for (const auto& s : all) row.push_back(std::to_string(c.count(s)));
      row.push_back(std::to_string(c.all_rejected));
      row.push_back(std::to_string(c.errors));
      w.row_strings(row);
    }
    return w.str();
  }
};

// Identifier of a grid cell from its parameter values, independent of the
// surrounding grid.
inline std::uint64_t cell_key(std::initializer_list<double> values) {
  std::uint64_t h = 0x5851F42D4C957F2DULL;
  for (double v : values) h = splitmix64(h ^ std::bit_cast<std::uint64_t>(v));
  return h;
}

inline std::uint64_t study_id(Study s) { return static_cast<std::uint64_t>(s) + 41; }

// LogMax environments for S41/S42 at one cell and repetition.
inline std::vector<Environment> simulate_environments(Study study, const ScmParams& params, long n,
                                                      std::uint64_t master, std::uint64_t cell, std::uint64_t rep) {
  std::vector<Environment> envs;
  for (int e = 1; e <= environment_count(study); ++e) {
    auto rng = make_rng(master, {study_id(study), cell, rep, static_cast<std::uint64_t>(e)});
    auto d = gen_environment(study, e, params, n, rng);
    Environment env{d.env_id, std::move(d.x), Eigen::VectorXd(n)};
    for (long i = 0; i < n; ++i) env.y(i) = logmax(d.pairs[static_cast<std::size_t>(i)]);
    envs.push_back(std::move(env));
  }
  return envs;
}

// Pooled per-margin GEV fits on S43 block maxima, unit-Frechet transform and
// LogMax projection.
inline std::vector<Environment> s43_logmax_environments(const std::vector<ScmDataset>& data, MarginPolicy policy) {
  Eigen::Index total = 0;
  for (const auto& d : data) total += d.maxima.rows();
  Eigen::MatrixXd X(total, 2), M(total, 2);
  Eigen::Index off = 0;
  for (const auto& d : data) {
    X.middleRows(off, d.x.rows()) = d.x;
    M.middleRows(off, d.maxima.rows()) = d.maxima;
    off += d.x.rows();
  }
  GevFormula f;
  if (policy == MarginPolicy::WithX2) {
    std::vector<double> v(X.col(1).data(), X.col(1).data() + total);
    std::sort(v.begin(), v.end());
    const auto distinct = static_cast<int>(std::unique(v.begin(), v.end()) - v.begin());
    if (distinct >= 4) {
      f.location.smooth_terms = {{1, std::min(kDefaultBasisSize, distinct)}};
      f.scale.smooth_terms = f.location.smooth_terms;
    } else if (distinct >= 2) {
      f.location.linear_terms = {1};
      f.scale.linear_terms = {1};
    }
  }
  Eigen::MatrixXd Z(total, 2);
  for (int j = 0; j < 2; ++j) {
    const Eigen::VectorXd mj = M.col(j);
    const auto model = fit_gev_margin(mj, X, f);
    for (Eigen::Index i = 0; i < total; ++i)
      Z(i, j) = frechet_from_probability(gev_margin_cdf(model, X.row(i), mj(i))).value();
  }
  std::vector<Environment> envs;
  off = 0;
  for (const auto& d : data) {
    const auto n = d.x.rows();
    Environment env{d.env_id, d.x, Eigen::VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i)
      env.y(i) = std::log(std::max(Z(off + i, 0), Z(off + i, 1))) - kEulerGamma;
    envs.push_back(std::move(env));
    off += n;
  }
  return envs;
}

inline std::vector<ScmDataset> simulate_s43(const ScmParams& params, long n, std::uint64_t master, std::uint64_t cell,
                                            std::uint64_t rep) {
  std::vector<ScmDataset> out;
  for (int e = 1; e <= 3; ++e) {
    auto rng = make_rng(master, {study_id(Study::S43), cell, rep, static_cast<std::uint64_t>(e)});
    out.push_back(gen_environment(Study::S43, e, params, n, rng));
  }
  return out;
}

namespace detail {

template <class Make>
RepOutcome scan_rep(Make&& make, double alpha) {
  RepOutcome r;
  try {
    IcpOptions opt;
    opt.alpha = alpha;
    const auto res = icp_scan(make(), opt);
    r.s_hat = res.s_hat;
    r.all_rejected = res.all_rejected_flag;
  } catch (const std::exception& e) {
    r.error = true;
    r.message = e.what();
  }
  return r;
}

inline void tally(CellOutcome& c, const RepOutcome& r, const Subset& expected) {
  ++c.reps;
  if (r.error) {
    ++c.errors;
    if (c.error_messages.size() < 5) c.error_messages.push_back(r.message);
    return;
  }
  if (r.all_rejected) {
    ++c.all_rejected;
    return;
  }
  ++c.counts[r.s_hat];
  if (r.s_hat == expected) ++c.correct;
}

}  // namespace detail

inline StudyOutcome run_s41(const StudyConfig& cfg) {
  cfg.validate();
  StudyOutcome out;
  out.study = Study::S41;
  out.d = 3;
  out.expected = {0};
  struct Cell {
    ScmParams params;
    long n;
  };
  std::vector<Cell> cells;
  for (long n : cfg.n)
    for (double q : cfg.q)
      for (double b : cfg.beta)
        for (double p : cfg.p) {
          ScmParams sp;
          sp.p = p;
          sp.q = q;
          sp.beta = b;
          cells.push_back({sp, n});
        }
  const auto reps = static_cast<std::size_t>(cfg.reps);
  std::vector<RepOutcome> results(cells.size() * reps);
  parallel_for(results.size(), cfg.threads, [&](std::size_t k) {
    const auto& c = cells[k / reps];
    const auto key = cell_key({c.params.p, c.params.q, c.params.beta, static_cast<double>(c.n)});
    results[k] = detail::scan_rep(
        [&] { return simulate_environments(Study::S41, c.params, c.n, cfg.master_seed, key, k % reps); }, cfg.alpha);
  });
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    CellOutcome co;
    co.params = {{"p", format_double(cells[ci].params.p)},
                 {"q", format_double(cells[ci].params.q)},
                 {"beta", format_double(cells[ci].params.beta)},
                 {"n", std::to_string(cells[ci].n)}};
    for (std::size_t r = 0; r < reps; ++r) detail::tally(co, results[ci * reps + r], out.expected);
    out.cells.push_back(std::move(co));
  }
  return out;
}

inline StudyOutcome run_s42(const StudyConfig& cfg) {
  cfg.validate();
  StudyOutcome out;
  out.study = Study::S42;
  out.d = 2;
  out.expected = {0};
  const auto reps = static_cast<std::size_t>(cfg.reps);
  std::vector<RepOutcome> results(cfg.n.size() * reps);
  parallel_for(results.size(), cfg.threads, [&](std::size_t k) {
    const long n = cfg.n[k / reps];
    const auto key = cell_key({static_cast<double>(n)});
    results[k] = detail::scan_rep(
        [&] { return simulate_environments(Study::S42, ScmParams{}, n, cfg.master_seed, key, k % reps); }, cfg.alpha);
  });
  for (std::size_t ci = 0; ci < cfg.n.size(); ++ci) {
    CellOutcome co;
    co.params = {{"n", std::to_string(cfg.n[ci])}};
    for (std::size_t r = 0; r < reps; ++r) detail::tally(co, results[ci * reps + r], out.expected);
    out.cells.push_back(std::move(co));
  }
  return out;
}

inline StudyOutcome run_s43(const StudyConfig& cfg) {
  cfg.validate();
  StudyOutcome out;
  out.study = Study::S43;
  out.d = 2;
  out.expected = {0};
  struct Cell {
    ScmParams params;
    long n;
  };
  std::vector<Cell> cells;
  for (long n : cfg.n)
    for (long tau : cfg.tau)
      for (double a : cfg.a) {
        ScmParams sp;
        sp.a = a;
        sp.tau = tau;
        cells.push_back({sp, n});
      }
  const auto reps = static_cast<std::size_t>(cfg.reps);
  const auto np = cfg.policies.size();
  // Both margin policies are applied to the same simulated data.
  std::vector<RepOutcome> results(cells.size() * reps * np);
  parallel_for(cells.size() * reps, cfg.threads, [&](std::size_t k) {
    const auto& c = cells[k / reps];
    const auto key = cell_key({c.params.a, static_cast<double>(c.params.tau), static_cast<double>(c.n)});
    std::vector<ScmDataset> data;
    std::string gen_error;
    try {
      data = simulate_s43(c.params, c.n, cfg.master_seed, key, k % reps);
    } catch (const std::exception& e) {
      gen_error = e.what();
    }
    for (std::size_t pi = 0; pi < np; ++pi) {
      auto& slot = results[k * np + pi];
      if (!gen_error.empty()) {
        slot.error = true;
        slot.message = gen_error;
        continue;
      }
      slot = detail::scan_rep([&] { return s43_logmax_environments(data, cfg.policies[pi]); }, cfg.alpha);
    }
  });
  for (std::size_t ci = 0; ci < cells.size(); ++ci)
    for (std::size_t pi = 0; pi < np; ++pi) {
      CellOutcome co;
      co.params = {{"n", std::to_string(cells[ci].n)},
                   {"tau", std::to_string(cells[ci].params.tau)},
                   {"a", format_double(cells[ci].params.a)},
                   {"policy", policy_name(cfg.policies[pi])}};
      for (std::size_t r = 0; r < reps; ++r) detail::tally(co, results[(ci * reps + r) * np + pi], out.expected);
      out.cells.push_back(std::move(co));
    }
  return out;
}

inline StudyOutcome run_study(const StudyConfig& cfg) {
  switch (cfg.study) {
    case Study::S41: return run_s41(cfg);
    case Study::S42: return run_s42(cfg);
    case Study::S43: return run_s43(cfg);
  }
  throw DomainError("unknown study");
}

struct LevelCheck {
  double coverage = 0.0;  // fraction of runs with s_hat inside the true set
  long runs = 0;
  long errors = 0;
};

// Fraction of S41 repetitions whose estimate is contained in the true set of
// causes ({1} when beta != 0, empty otherwise).
inline LevelCheck level_check(const ScmParams& params, long n, long reps, double alpha, std::uint64_t master,
                              int threads = 1) {
  if (reps < 1) throw ConfigError("reps must be at least 1");
  const Subset truth = params.beta != 0.0 ? Subset{0} : Subset{};
  const auto key = cell_key({params.p, params.q, params.beta, static_cast<double>(n)});
  std::vector<RepOutcome> results(static_cast<std::size_t>(reps));
  parallel_for(results.size(), threads, [&](std::size_t r) {
    results[r] = detail::scan_rep(
        [&] { return simulate_environments(Study::S41, params, n, master, key, r); }, alpha);
  });
  LevelCheck lc;
  long inside = 0;
  for (const auto& r : results) {
    ++lc.runs;
    if (r.error) {
      ++lc.errors;
      continue;
    }
    if (std::includes(truth.begin(), truth.end(), r.s_hat.begin(), r.s_hat.end())) ++inside;
  }
  lc.coverage = static_cast<double>(inside) / static_cast<double>(lc.runs);
  return lc;
}

}  // namespace tailicp
