#pragma once

// Command-line front end. Exit codes: 0 success, 1 invalid arguments,
// configuration or input files, 2 runtime failure (fits, I/O, infeasible
// pairing). Every file is written below --out-dir.

#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"

#include "tailicp/config.hpp"
#include "tailicp/errors.hpp"
#include "tailicp/experiments.hpp"
#include "tailicp/gev_fit.hpp"
#include "tailicp/icp.hpp"
#include "tailicp/io.hpp"
#include "tailicp/maxstable.hpp"
#include "tailicp/pipeline.hpp"

#ifndef TAILICP_VERSION
#define TAILICP_VERSION "0.0.0"
#endif

namespace tailicp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitRuntime = 2;

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

// Hash of the canonical (key-sorted, compact) JSON form.
inline std::string config_hash(const nlohmann::json& resolved) { return sha256_hex(resolved.dump()); }

// Output directory guard: only plain file names are accepted.
class OutDir {
 public:
  explicit OutDir(std::filesystem::path root) : root_(std::move(root)) {}

  void write(const std::string& name, const std::string& content) {
    if (name.empty() || name.find('/') != std::string::npos || name.find('\\') != std::string::npos ||
        name == "." || name == "..")
      throw Error("refusing to write '" + name + "': not a plain file name");
    atomic_write(root_ / name, content);
    outputs_.push_back(name);
  }
  const std::vector<std::string>& outputs() const noexcept { return outputs_; }
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
  std::vector<std::string> outputs_;
};

inline std::string safe_file_stem(const std::string& s) {
  std::string o;
  for (char c : s) o += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return o.empty() ? "_" : o;
}

struct RunContext {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::chrono::system_clock::time_point start = std::chrono::system_clock::now();
  std::vector<std::string> warnings;
};

inline nlohmann::json manifest_json(const RunContext& ctx, const OutDir& out,
                                    std::chrono::system_clock::time_point end) {
  nlohmann::json m;
  m["command"] = ctx.command;
  m["config"] = ctx.config;
  m["config_hash"] = config_hash(ctx.config);
  m["master_seed"] = ctx.seed;
  m["version"] = TAILICP_VERSION;
  m["start"] = iso_timestamp(ctx.start);
  m["end"] = iso_timestamp(end);
  m["wall_seconds"] = std::chrono::duration<double>(end - ctx.start).count();
  m["outputs"] = out.outputs();
  m["warnings"] = ctx.warnings;
  return m;
}

inline void emit_manifest(const RunContext& ctx, OutDir& out) {
  const auto j = manifest_json(ctx, out, std::chrono::system_clock::now());
  out.write("manifest.json", j.dump(2) + "\n");
}

// ------------------------------------------------------------ CSV tables

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;

  std::size_t column(const std::string& name, const std::string& source) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ParseError(source, 1, "missing column '" + name + "'");
  }
};

inline Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open input file '" + path + "'");
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path, 1, "empty file");
  t.header = split_csv_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.header.size())
      throw ParseError(path, lineno, "expected " + std::to_string(t.header.size()) + " columns, got " +
                                         std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
    t.lines.push_back(lineno);
  }
  if (t.rows.empty()) throw ParseError(path, lineno, "no data rows");
  return t;
}

inline double parse_number(const std::string& s, const std::string& source, std::size_t line) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    throw ParseError(source, line, "expected a number, got '" + s + "'");
  return v;
}

// ------------------------------------------------------------ options

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;  // copula parameter for simulate, test level elsewhere
  std::string out_dir = "out";
  int threads = 1;
};

// ------------------------------------------------------------ simulate

struct SimulateArgs {
  std::string family = "logistic";
  std::optional<double> lambda;
  long n = 1000;
};

inline int run_simulate(const GlobalOptions& g, const SimulateArgs& a, std::ostream& out) {
  RunContext ctx;
  ctx.command = "simulate";
  ctx.seed = g.seed.value_or(1);
  if (a.n < 1) throw ConfigError("--n must be positive");
  CopulaSpec spec;
  if (a.family == "logistic") {
    if (a.lambda) throw ConfigError("--lambda applies to husler_reiss only");
    spec = CopulaSpec::logistic(g.alpha.value_or(0.5));
  } else if (a.family == "husler_reiss") {
    if (g.alpha) throw ConfigError("--alpha applies to logistic only; use --lambda");
    spec = CopulaSpec::husler_reiss(a.lambda.value_or(1.0));
  } else {
    throw ConfigError("--family must be logistic or husler_reiss");
  }
  ctx.config = {{"family", a.family}, {"param", spec.param}, {"n", a.n}, {"seed", ctx.seed}};
  auto rng = make_rng(ctx.seed, {0x53494DULL});
  CsvWriter w({"z1", "z2"});
  for (long i = 0; i < a.n; ++i) {
    const auto p = sample_pair(spec, rng);
    w.row(p.z1.value(), p.z2.value());
  }
  OutDir dir(g.out_dir);
  dir.write("pairs.csv", w.str());
  emit_manifest(ctx, dir);
  out << "wrote " << a.n << " pairs to " << (dir.root() / "pairs.csv").string() << "\n";
  return kExitOk;
}

// ------------------------------------------------------------ experiment

struct ExperimentArgs {
  std::string study;
  std::string config;
  std::optional<long> reps;
};

inline int run_experiment(const GlobalOptions& g, const ExperimentArgs& a, std::ostream& out) {
  RunContext ctx;
  ctx.command = "experiment";
  const Study study = parse_study(a.study);
  auto cfg = a.config.empty() ? StudyConfig::defaults(study) : StudyConfig::from_config(Config::load(a.config), study);
  if (g.seed) cfg.master_seed = *g.seed;
  if (g.alpha) cfg.alpha = *g.alpha;
  if (a.reps) cfg.reps = *a.reps;
  cfg.threads = g.threads;
  cfg.validate();
  ctx.seed = cfg.master_seed;
  ctx.config = cfg.to_json();
  const auto outcome = run_study(cfg);
  OutDir dir(g.out_dir);
  dir.write(study_name(study) + ".csv", outcome.to_csv());
  emit_manifest(ctx, dir);
  for (const auto& c : outcome.cells) {
    std::string label;
    for (const auto& [k, v] : c.params) label += k + "=" + v + " ";
    out << label << "fraction_correct=" << c.fraction_correct() << " modal=" << subset_string(c.modal()) << "\n";
  }
  return kExitOk;
}

// ------------------------------------------------------------ margins fit

struct MarginsArgs {
  std::string input;
  std::string response = "value";
  bool constant = false;
  int max_basis = 8;
};

inline int run_margins_fit(const GlobalOptions& g, const MarginsArgs& a, std::ostream& out) {
  RunContext ctx;
  ctx.command = "margins fit";
  ctx.seed = g.seed.value_or(0);
  if (a.max_basis < 4) throw ConfigError("--max-basis must be at least 4");
  const auto t = read_table(a.input);
  const std::size_t yc = t.column(a.response, a.input);
  std::vector<std::size_t> xc;
  std::vector<std::string> names;
  if (!a.constant)
    for (std::size_t i = 0; i < t.header.size(); ++i)
      if (i != yc) {
        xc.push_back(i);
        names.push_back(t.header[i]);
      }
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  Eigen::VectorXd y(n);
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(xc.size()));
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = t.rows[static_cast<std::size_t>(r)];
    const auto line = t.lines[static_cast<std::size_t>(r)];
    y(r) = parse_number(row[yc], a.input, line);
    for (std::size_t j = 0; j < xc.size(); ++j) X(r, static_cast<Eigen::Index>(j)) = parse_number(row[xc[j]], a.input, line);
  }
  GevFormula f;
  for (std::size_t j = 0; j < xc.size(); ++j) {
    std::vector<double> v(X.col(static_cast<Eigen::Index>(j)).data(), X.col(static_cast<Eigen::Index>(j)).data() + n);
    std::sort(v.begin(), v.end());
    const auto distinct = static_cast<int>(std::unique(v.begin(), v.end()) - v.begin());
    if (distinct >= 4) f.location.smooth_terms.push_back({j, std::min(a.max_basis, distinct)});
    else if (distinct >= 2) f.location.linear_terms.push_back(j);
  }
  f.scale = f.location;
  ctx.config = {{"input", a.input}, {"response", a.response}, {"covariates", names}, {"max_basis", a.max_basis}};
  const auto model = fit_gev_margin(y, X, f, SmoothingSpec::gcv());
  for (const auto& w : model.warnings) ctx.warnings.push_back(w);
  CsvWriter tr({"row", "value", "pit", "frechet"});
  std::vector<double> z;
  for (Eigen::Index r = 0; r < n; ++r) {
    const double p = gev_margin_cdf(model, X.row(r), y(r));
    z.push_back(frechet_from_probability(p).value());
    tr.row(static_cast<long>(r + 1), y(r), p, z.back());
  }
  std::sort(z.begin(), z.end());
  CsvWriter qq({"empirical", "theoretical"});
  for (std::size_t i = 0; i < z.size(); ++i)
    qq.row(z[i], -1.0 / std::log((static_cast<double>(i) + 0.5) / static_cast<double>(z.size())));
  auto mj = to_json(model);
  mj["covariate_names"] = names;
  OutDir dir(g.out_dir);
  dir.write("margin_model.json", mj.dump(2) + "\n");
  dir.write("frechet.csv", tr.str());
  dir.write("qq.csv", qq.str());
  emit_manifest(ctx, dir);
  out << "shape " << model.shape << ", penalized log-likelihood " << model.penalized_loglik << "\n";
  for (const auto& w : ctx.warnings) out << "warning: " << w << "\n";
  return kExitOk;
}

// ------------------------------------------------------------ icp run

struct IcpArgs {
  std::string input;
  std::string env_column = "env";
  std::string response = "y";
  bool no_prune = false;
};

inline std::vector<Environment> environments_from_table(const Table& t, const std::string& source,
                                                        const std::string& env_col, const std::string& y_col,
                                                        std::vector<std::string>* names) {
  const std::size_t ec = t.column(env_col, source), yc = t.column(y_col, source);
  std::vector<std::size_t> xc;
  for (std::size_t i = 0; i < t.header.size(); ++i)
    if (i != ec && i != yc) {
      xc.push_back(i);
      if (names) names->push_back(t.header[i]);
    }
  if (xc.empty()) throw ParseError(source, 1, "no covariate columns");
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& id = t.rows[r][ec];
    if (!rows.count(id)) order.push_back(id);
    rows[id].push_back(r);
  }
  std::vector<Environment> envs;
  for (const auto& id : order) {
    const auto& idx = rows[id];
    Environment e{id, Eigen::MatrixXd(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(xc.size())),
                  Eigen::VectorXd(static_cast<Eigen::Index>(idx.size()))};
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& row = t.rows[idx[k]];
      const auto line = t.lines[idx[k]];
      e.y(static_cast<Eigen::Index>(k)) = parse_number(row[yc], source, line);
      for (std::size_t j = 0; j < xc.size(); ++j)
        e.x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = parse_number(row[xc[j]], source, line);
    }
    envs.push_back(std::move(e));
  }
  return envs;
}

inline int run_icp(const GlobalOptions& g, const IcpArgs& a, std::ostream& out) {
  RunContext ctx;
  ctx.command = "icp run";
  ctx.seed = g.seed.value_or(0);
  const auto t = read_table(a.input);
  std::vector<std::string> names;
  const auto envs = environments_from_table(t, a.input, a.env_column, a.response, &names);
  IcpOptions opt;
  opt.alpha = g.alpha.value_or(0.05);
  opt.prune = !a.no_prune;
  opt.threads = g.threads;
  ctx.config = {{"input", a.input}, {"alpha", opt.alpha}, {"prune", opt.prune}, {"covariates", names},
                {"environments", envs.size()}};
  const auto res = icp_scan(envs, opt);
  ctx.warnings = res.warnings;
  auto j = to_json(res);
  j["covariate_names"] = names;
  OutDir dir(g.out_dir);
  dir.write("icp_result.json", j.dump(2) + "\n");
  emit_manifest(ctx, dir);
  out << "S_hat = " << subset_string(res.s_hat) << (res.all_rejected_flag ? " (all subsets rejected)" : "") << "\n";
  return kExitOk;
}

// ------------------------------------------------------------ pipeline

struct PipelineSettings {
  std::string observations;
  std::string metadata;
  ApplicationOptions app;
  IngestOptions ingest;
  MarginSettings margins;
  int curve_grid = 50;

  static inline const std::set<std::string> kKeys{
      "observations", "metadata", "draws", "alpha", "seed", "threads", "min_common_weeks", "traffic_pairs",
      "background_pairs", "min_hourly_per_week", "min_week_coverage", "year_basis", "week_basis", "curve_grid"};

  static PipelineSettings from_config(const Config& c) {
    c.require_known(kKeys);
    PipelineSettings s;
    s.observations = c.get_string("observations", "");
    s.metadata = c.get_string("metadata", "");
    s.app.draws = static_cast<int>(c.get_long("draws", s.app.draws));
    s.app.alpha = c.get_double("alpha", s.app.alpha);
    s.app.seed = c.get_u64("seed", s.app.seed);
    s.app.threads = static_cast<int>(c.get_long("threads", s.app.threads));
    s.app.constraints.min_common_weeks = c.get_long("min_common_weeks", s.app.constraints.min_common_weeks);
    s.app.constraints.traffic_pairs = static_cast<int>(c.get_long("traffic_pairs", s.app.constraints.traffic_pairs));
    s.app.constraints.background_pairs =
        static_cast<int>(c.get_long("background_pairs", s.app.constraints.background_pairs));
    s.ingest.min_hourly_per_week = static_cast<int>(c.get_long("min_hourly_per_week", s.ingest.min_hourly_per_week));
    s.ingest.min_week_coverage = c.get_double("min_week_coverage", s.ingest.min_week_coverage);
    s.margins.year_basis = static_cast<int>(c.get_long("year_basis", s.margins.year_basis));
    s.margins.week_basis = static_cast<int>(c.get_long("week_basis", s.margins.week_basis));
    s.curve_grid = static_cast<int>(c.get_long("curve_grid", s.curve_grid));
    return s;
  }

  void validate() const {
    if (observations.empty()) throw ConfigError("observations file not given (key 'observations' or --observations)");
    if (metadata.empty()) throw ConfigError("metadata file not given (key 'metadata' or --metadata)");
    if (app.draws < 1) throw ConfigError("draws must be at least 1");
    if (!(app.alpha > 0.0 && app.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (app.threads < 1) throw ConfigError("threads must be at least 1");
    if (app.constraints.traffic_pairs < 0 || app.constraints.background_pairs < 0 ||
        app.constraints.traffic_pairs + app.constraints.background_pairs != kDistanceBins)
      throw ConfigError("traffic_pairs + background_pairs must equal 5 (one pair per distance bin)");
    if (app.constraints.min_common_weeks < 1) throw ConfigError("min_common_weeks must be positive");
    if (ingest.min_hourly_per_week < 1 || ingest.min_hourly_per_week > 168)
      throw ConfigError("min_hourly_per_week must lie in [1, 168]");
    if (!(ingest.min_week_coverage >= 0.0 && ingest.min_week_coverage <= 1.0))
      throw ConfigError("min_week_coverage must lie in [0, 1]");
    if (margins.year_basis < 4 || margins.week_basis < 4) throw ConfigError("year_basis and week_basis must be >= 4");
    if (curve_grid < 2) throw ConfigError("curve_grid must be at least 2");
  }

  nlohmann::json to_json() const {
    return {{"observations", observations},
            {"metadata", metadata},
            {"draws", app.draws},
            {"alpha", app.alpha},
            {"seed", app.seed},
            {"min_common_weeks", app.constraints.min_common_weeks},
            {"traffic_pairs", app.constraints.traffic_pairs},
            {"background_pairs", app.constraints.background_pairs},
            {"min_hourly_per_week", ingest.min_hourly_per_week},
            {"min_week_coverage", ingest.min_week_coverage},
            {"year_basis", margins.year_basis},
            {"week_basis", margins.week_basis},
            {"curve_grid", curve_grid}};
  }
};

struct PipelineArgs {
  std::string config;
  std::string observations;
  std::string metadata;
  std::optional<int> draws;
};

inline std::string environments_csv(const std::vector<PairEnvironment>& pairs) {
  CsvWriter w({"env", "y", "distance", "year", "type"});
  for (const auto& p : pairs) {
    const auto id = p.station_a + "~" + p.station_b;
    for (Eigen::Index i = 0; i < p.y.size(); ++i) w.row(id, p.y(i), p.x(i, 0), p.x(i, 1), p.x(i, 2));
  }
  return w.str();
}

inline int run_pipeline(const GlobalOptions& g, const PipelineArgs& a, std::ostream& out) {
  RunContext ctx;
  ctx.command = "pipeline run";
  auto s = a.config.empty() ? PipelineSettings{} : PipelineSettings::from_config(Config::load(a.config));
  if (!a.observations.empty()) s.observations = a.observations;
  if (!a.metadata.empty()) s.metadata = a.metadata;
  if (a.draws) s.app.draws = *a.draws;
  if (g.seed) s.app.seed = *g.seed;
  if (g.alpha) s.app.alpha = *g.alpha;
  s.app.threads = g.threads;
  s.validate();
  ctx.seed = s.app.seed;
  ctx.config = s.to_json();

  const auto table = ingest(s.observations, s.metadata, s.ingest);
  ctx.warnings = table.report;
  const auto margins = fit_all_margins(table, s.margins, s.app.threads);
  OutDir dir(g.out_dir);

  CsvWriter st({"station_id", "site_type", "retained_weeks", "spanned_weeks", "status", "pit_ks_pvalue", "error"});
  for (std::size_t i = 0; i < margins.size(); ++i) {
    const auto& m = margins[i];
    const auto& sd = table.stations[i];
    st.row(m.meta.station_id, site_type_name(m.meta.site_type), static_cast<long>(sd.weekly.size()), sd.spanned_weeks,
           m.ok ? "ok" : "margin_fit_failed", m.ok ? m.pit_ks_pvalue : std::nan(""), m.error);
    if (!m.ok) ctx.warnings.push_back("station " + m.meta.station_id + " excluded: " + m.error);
  }
  dir.write("stations.csv", st.str());
  std::set<std::string> stems;
  for (const auto& m : margins) {
    if (!m.ok) continue;
    auto stem = safe_file_stem(m.meta.station_id);
    while (!stems.insert(stem).second) stem += "_";
    CsvWriter qq({"empirical", "theoretical"});
    for (const auto& [e, th] : m.qq) qq.row(e, th);
    dir.write("qq_" + stem + ".csv", qq.str());
  }

  const auto res = run_application(margins, s.app);
  CsvWriter pv({"draw", "subset", "p"});
  CsvWriter pd({"draw", "bin", "station_a", "station_b", "site_type", "distance_km", "common_weeks", "first_year",
                "last_year"});
  long failed = 0;
  for (const auto& d : res.draws) {
    if (d.failed) {
      ++failed;
      ctx.warnings.push_back("draw " + std::to_string(d.index + 1) + " failed: " + d.error);
      continue;
    }
    for (const auto& r : d.scan.per_subset)
      if (std::isfinite(r.p_value)) pv.row(static_cast<long>(d.index + 1), subset_string(r.subset), r.p_value);
    for (std::size_t b = 0; b < d.pairs.size(); ++b) {
      const auto& p = d.pairs[b];
      pd.row(static_cast<long>(d.index + 1), bin_label(static_cast<int>(b)), p.station_a, p.station_b,
             site_type_name(p.site_type), p.distance_km, static_cast<long>(p.weeks.size()),
             static_cast<long>(p.first_year), static_cast<long>(p.last_year));
    }
  }
  dir.write("pvalues_boxplot.csv", pv.str());
  dir.write("pairs_draws.csv", pd.str());
  CsvWriter tally({"s_hat", "count"});
  for (const auto& [sub, c] : res.shat_tally()) tally.row(subset_string(sub), c);
  tally.row("all_rejected", res.all_rejected());
  tally.row("failed_draws", failed);
  dir.write("shat_tally.csv", tally.str());
  for (const auto& d : res.draws)
    if (!d.failed) {
      dir.write("environments.csv", environments_csv(d.pairs));
      break;
    }

  try {
    const auto curve = distance_effect_curve(curve_pairs(margins, s.app.constraints), s.curve_grid);
    CsvWriter cw({"distance", "theta_hat", "lo", "hi"});
    for (const auto& c : curve) cw.row(c.distance_km, c.theta_hat, c.lo, c.hi);
    dir.write("distance_effect.csv", cw.str());
  } catch (const InsufficientDataError& e) {
    ctx.warnings.push_back(std::string("distance effect skipped: ") + e.what());
  }
  emit_manifest(ctx, dir);
  for (const auto& [sub, c] : res.shat_tally()) out << "S_hat " << subset_string(sub) << ": " << c << "\n";
  for (const auto& w : ctx.warnings) out << "warning: " << w << "\n";
  return kExitOk;
}

struct FixtureArgs {
  std::string dependence = "distance";
  int weeks = 400;
};

inline int run_fixture(const GlobalOptions& g, const FixtureArgs& a, std::ostream& out) {
  RunContext ctx;
  ctx.command = "pipeline fixture";
  FixtureOptions o;
  if (a.dependence == "constant") o.dependence = FixtureOptions::Dependence::Constant;
  else if (a.dependence != "distance") throw ConfigError("--dependence must be distance or constant");
  o.weeks = a.weeks;
  o.seed = g.seed.value_or(1);
  ctx.seed = o.seed;
  ctx.config = {{"dependence", a.dependence}, {"weeks", o.weeks}, {"seed", o.seed}};
  const auto fx = make_fixture(o);
  OutDir dir(g.out_dir);
  dir.write("observations.csv", fixture_observations_csv(fx));
  dir.write("metadata.csv", fixture_metadata_csv(fx));
  emit_manifest(ctx, dir);
  out << "wrote fixture with " << fx.meta.size() << " stations and " << o.weeks << " weeks\n";
  return kExitOk;
}

// ------------------------------------------------------------ dispatch

inline int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                              std::ostream& err = std::cerr) {
  CLI::App app{"Causal covariates of tail dependence via LogMax projections and invariant prediction"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--alpha", g.alpha, "test level; logistic dependence parameter for simulate");
  app.add_option("--out-dir", g.out_dir, "output directory")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.set_version_flag("--version", std::string(TAILICP_VERSION));

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "draw bivariate max-stable pairs to CSV");
  c_sim->add_option("--family", sim.family, "logistic or husler_reiss")->capture_default_str();
  c_sim->add_option("--lambda", sim.lambda, "Husler-Reiss parameter");
  c_sim->add_option("--n", sim.n, "number of pairs")->capture_default_str();

  ExperimentArgs exp;
  auto* c_exp = app.add_subcommand("experiment", "run a simulation study");
  c_exp->add_option("--study", exp.study, "s41, s42 or s43")->required();
  c_exp->add_option("--config", exp.config, "study config file");
  c_exp->add_option("--reps", exp.reps, "repetitions per cell");

  auto* c_margins = app.add_subcommand("margins", "marginal GEV models");
  c_margins->require_subcommand(1);
  MarginsArgs mar;
  auto* c_mfit = c_margins->add_subcommand("fit", "fit a covariate-dependent GEV to block maxima");
  c_mfit->add_option("--input", mar.input, "CSV with a response column and numeric covariates")->required();
  c_mfit->add_option("--response", mar.response, "response column")->capture_default_str();
  c_mfit->add_flag("--constant", mar.constant, "ignore covariates");
  c_mfit->add_option("--max-basis", mar.max_basis, "largest spline basis per covariate")->capture_default_str();

  auto* c_icp = app.add_subcommand("icp", "invariant causal prediction");
  c_icp->require_subcommand(1);
  IcpArgs icp;
  auto* c_irun = c_icp->add_subcommand("run", "scan covariate subsets over environments");
  c_irun->add_option("--input", icp.input, "CSV with env, response and covariate columns")->required();
  c_irun->add_option("--env-column", icp.env_column)->capture_default_str();
  c_irun->add_option("--response", icp.response)->capture_default_str();
  c_irun->add_flag("--no-prune", icp.no_prune, "test supersets of accepted subsets too");

  auto* c_pipe = app.add_subcommand("pipeline", "station workflow");
  c_pipe->require_subcommand(1);
  PipelineArgs pipe;
  auto* c_prun = c_pipe->add_subcommand("run", "ingest, fit margins, pair stations and scan");
  c_prun->add_option("--config", pipe.config, "pipeline config file");
  c_prun->add_option("--observations", pipe.observations, "hourly observations CSV");
  c_prun->add_option("--metadata", pipe.metadata, "station metadata CSV");
  c_prun->add_option("--draws", pipe.draws, "pairing draws");
  FixtureArgs fix;
  auto* c_pfix = c_pipe->add_subcommand("fixture", "write a synthetic station data set");
  c_pfix->add_option("--dependence", fix.dependence, "distance or constant")->capture_default_str();
  c_pfix->add_option("--weeks", fix.weeks)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitInvalid;
  }
  try {
    if (c_sim->parsed()) return run_simulate(g, sim, out);
    if (c_exp->parsed()) return run_experiment(g, exp, out);
    if (c_mfit->parsed()) return run_margins_fit(g, mar, out);
    if (c_irun->parsed()) return run_icp(g, icp, out);
    if (c_prun->parsed()) return run_pipeline(g, pipe, out);
    if (c_pfix->parsed()) return run_fixture(g, fix, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const FitError& e) {
    err << "error: " << e.what() << "\n";
    if (!e.trace().empty()) err << e.trace() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  err << "error: no command\n";
  return kExitInvalid;
}

}  // namespace tailicp::cli
