#pragma once

// Station workflow: hourly observations -> ISO-week maxima -> covariate
// dependent GEV margins -> unit Frechet -> same-type station pairs ->
// repeated ICP scans, plus a pooled distance-effect curve.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tailicp/errors.hpp"
#include "tailicp/evt.hpp"
#include "tailicp/gam.hpp"
#include "tailicp/gev_fit.hpp"
#include "tailicp/icp.hpp"
#include "tailicp/io.hpp"
#include "tailicp/parallel.hpp"
#include "tailicp/rng.hpp"
#include "tailicp/special.hpp"
#include "tailicp/stats.hpp"

namespace tailicp {

enum class SiteType { Traffic, Background };

inline std::string site_type_name(SiteType t) { return t == SiteType::Traffic ? "traffic" : "background"; }

inline SiteType parse_site_type(const std::string& s) {
  if (s == "traffic") return SiteType::Traffic;
  if (s == "background") return SiteType::Background;
  throw DomainError("unknown site type '" + s + "' (expected traffic or background)");
}

struct StationMeta {
  std::string station_id;
  SiteType site_type = SiteType::Background;
  double latitude = 0.0;
  double longitude = 0.0;
};

struct HourlyRecord {
  std::int64_t hour = 0;  // hours since 1970-01-01T00:00Z
  double value = 0.0;
  bool missing = false;
};

struct WeekKey {
  int year = 0;  // ISO week-numbering year
  int week = 0;  // 1..53
  int key() const { return year * 100 + week; }
  friend auto operator<=>(const WeekKey&, const WeekKey&) = default;
};

struct WeeklyMaximum {
  WeekKey week;
  double maximum = 0.0;
  int count = 0;
};

struct StationData {
  StationMeta meta;
  std::vector<HourlyRecord> hours;
  std::vector<WeeklyMaximum> weekly;  // retained weeks only, sorted
  long spanned_weeks = 0;
};

struct IngestOptions {
  int min_hourly_per_week = 24;
  double min_week_coverage = 0.8;
};

struct StationTable {
  std::vector<StationData> stations;  // retained stations, in metadata order
  std::vector<std::string> report;    // exclusions and notes
};

// ------------------------------------------------------------ calendar

inline WeekKey iso_week(std::chrono::sys_days d) {
  using namespace std::chrono;
  const unsigned wd = weekday{d}.iso_encoding();
  const sys_days thursday = d + days{4 - static_cast<int>(wd)};
  const year_month_day ymd{thursday};
  const sys_days jan1{ymd.year() / January / 1};
  return {static_cast<int>(ymd.year()), static_cast<int>((thursday - jan1).count() / 7 + 1)};
}

inline WeekKey iso_week_of_hour(std::int64_t hour) {
  using namespace std::chrono;
  return iso_week(floor<days>(sys_seconds{hours{hour}}));
}

// Accepts YYYY-MM-DDTHH[:MM[:SS]] with an optional trailing Z; a space may
// replace the T. Minutes and seconds must be zero.
inline std::optional<std::int64_t> parse_hour_timestamp(const std::string& s) {
  using namespace std::chrono;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
  char sep = 0;
  std::string rest = s;
  if (!rest.empty() && rest.back() == 'Z') rest.pop_back();
  int consumed = 0;
  const int got = std::sscanf(rest.c_str(), "%4d-%2d-%2d%c%2d%n", &y, &mo, &d, &sep, &h, &consumed);
  if (got != 5 || (sep != 'T' && sep != ' ')) return std::nullopt;
  std::string tail = rest.substr(static_cast<std::size_t>(consumed));
  if (!tail.empty()) {
    int c2 = 0;
    if (std::sscanf(tail.c_str(), ":%2d%n", &mi, &c2) != 1) return std::nullopt;
    tail = tail.substr(static_cast<std::size_t>(c2));
    if (!tail.empty()) {
      int c3 = 0;
      if (std::sscanf(tail.c_str(), ":%2d%n", &se, &c3) != 1) return std::nullopt;
      if (static_cast<std::size_t>(c3) != tail.size()) return std::nullopt;
    }
  }
  if (mi != 0 || se != 0 || h < 0 || h > 23) return std::nullopt;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return duration_cast<hours>(sys_days{ymd}.time_since_epoch()).count() + h;
}

inline std::string format_hour_timestamp(std::int64_t hour) {
  using namespace std::chrono;
  const sys_seconds t{hours{hour}};
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const auto hh = duration_cast<hours>(t - day).count();
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:00:00Z", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<long long>(hh));
  return buf;
}

inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kEarthRadiusKm = 6371.0;
  const double rad = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * rad, dlon = (lon2 - lon1) * rad;
  const double a = std::pow(std::sin(dlat / 2), 2) + std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::pow(std::sin(dlon / 2), 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

inline double station_distance_km(const StationMeta& a, const StationMeta& b) {
  return haversine_km(a.latitude, a.longitude, b.latitude, b.longitude);
}

// ------------------------------------------------------------ ingest

// ISO-week maxima of non-missing values; weeks with fewer than
// min_hourly_per_week values are dropped. Also sets spanned_weeks, the
// number of ISO weeks from the first to the last record.
inline void aggregate_weeks(StationData& s, const IngestOptions& opt) {
  s.weekly.clear();
  s.spanned_weeks = 0;
  if (s.hours.empty()) return;
  std::map<WeekKey, WeeklyMaximum> acc;
  std::int64_t first = std::numeric_limits<std::int64_t>::max(), last = std::numeric_limits<std::int64_t>::min();
  for (const auto& h : s.hours) {
    first = std::min(first, h.hour);
    last = std::max(last, h.hour);
    if (h.missing) continue;
    auto& w = acc[iso_week_of_hour(h.hour)];
    if (w.count == 0 || h.value > w.maximum) w.maximum = h.value;
    ++w.count;
  }
  for (auto& [k, w] : acc) {
    w.week = k;
    if (w.count >= opt.min_hourly_per_week) s.weekly.push_back(w);
  }
  using namespace std::chrono;
  const auto monday = [](std::int64_t hour) {
    const auto d = floor<days>(sys_seconds{hours{hour}});
    return d - days{weekday{d}.iso_encoding() - 1};
  };
  s.spanned_weeks = (monday(last) - monday(first)).count() / 7 + 1;
}

// Validates metadata and records, aggregates weeks and applies the
// coverage rule. Records are (metadata index, hourly record).
inline StationTable build_station_table(const std::vector<StationMeta>& meta,
                                        std::vector<std::vector<HourlyRecord>> records,
                                        const IngestOptions& opt = {}) {
  if (records.size() != meta.size()) throw DomainError("one record list per station is required");
  StationTable t;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    StationData s;
    s.meta = meta[i];
    s.hours = std::move(records[i]);
    std::sort(s.hours.begin(), s.hours.end(), [](const auto& a, const auto& b) { return a.hour < b.hour; });
    aggregate_weeks(s, opt);
    if (s.weekly.empty()) {
      t.report.push_back("excluded " + s.meta.station_id + ": no week with at least " +
                         std::to_string(opt.min_hourly_per_week) + " hourly values");
      continue;
    }
    const double coverage = static_cast<double>(s.weekly.size()) / static_cast<double>(s.spanned_weeks);
    if (coverage < opt.min_week_coverage) {
      std::ostringstream os;
      os << "excluded " << s.meta.station_id << ": " << s.weekly.size() << " of " << s.spanned_weeks
         << " weeks complete (coverage " << coverage << " < " << opt.min_week_coverage << ")";
      t.report.push_back(os.str());
      continue;
    }
    t.stations.push_back(std::move(s));
  }
  return t;
}

inline std::vector<StationMeta> read_metadata_csv(std::istream& in, const std::string& name) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError(name, 1, "empty metadata file");
  const auto header = split_csv_line(line);
  const std::vector<std::string> expected{"station_id", "site_type", "lat", "lon"};
  if (header != expected) throw ParseError(name, 1, "expected header station_id,site_type,lat,lon");
  std::vector<StationMeta> out;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto c = split_csv_line(line);
    if (c.size() != 4) throw ParseError(name, lineno, "expected 4 columns");
    StationMeta m;
    m.station_id = c[0];
    if (m.station_id.empty()) throw ParseError(name, lineno, "empty station_id");
    if (!seen.insert(m.station_id).second) throw ParseError(name, lineno, "duplicate station_id '" + m.station_id + "'");
    try {
      m.site_type = parse_site_type(c[1]);
      std::size_t pos = 0;
      m.latitude = std::stod(c[2], &pos);
      if (pos != c[2].size()) throw DomainError("bad latitude");
      m.longitude = std::stod(c[3], &pos);
      if (pos != c[3].size()) throw DomainError("bad longitude");
    } catch (const DomainError& e) {
      throw ParseError(name, lineno, e.what());
    } catch (const std::exception&) {
      throw ParseError(name, lineno, "malformed coordinates");
    }
    if (!(std::abs(m.latitude) <= 90.0) || !(std::abs(m.longitude) <= 180.0))
      throw ParseError(name, lineno, "coordinates out of range");
    out.push_back(std::move(m));
  }
  return out;
}

inline std::vector<std::vector<HourlyRecord>> read_observations_csv(std::istream& in, const std::string& name,
                                                                    const std::vector<StationMeta>& meta) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < meta.size(); ++i) index[meta[i].station_id] = i;
  std::vector<std::vector<HourlyRecord>> out(meta.size());
  std::vector<std::set<std::int64_t>> seen(meta.size());
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError(name, 1, "empty observations file");
  const std::vector<std::string> expected{"timestamp", "station_id", "value"};
  if (split_csv_line(line) != expected) throw ParseError(name, 1, "expected header timestamp,station_id,value");
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto c = split_csv_line(line);
    if (c.size() != 3) throw ParseError(name, lineno, "expected 3 columns");
    const auto hour = parse_hour_timestamp(c[0]);
    if (!hour) throw ParseError(name, lineno, "malformed hourly timestamp '" + c[0] + "'");
    const auto it = index.find(c[1]);
    if (it == index.end()) throw ParseError(name, lineno, "unknown station id '" + c[1] + "'");
    HourlyRecord r;
    r.hour = *hour;
    if (c[2].empty()) {
      r.missing = true;
    } else {
      std::size_t pos = 0;
      try {
        r.value = std::stod(c[2], &pos);
      } catch (const std::exception&) {
        throw ParseError(name, lineno, "malformed value '" + c[2] + "'");
      }
      if (pos != c[2].size() || !std::isfinite(r.value)) throw ParseError(name, lineno, "malformed value '" + c[2] + "'");
      if (r.value < 0.0) throw ParseError(name, lineno, "negative concentration " + c[2]);
    }
    if (!seen[it->second].insert(r.hour).second)
      throw ParseError(name, lineno, "duplicate observation for station '" + c[1] + "' at " + c[0]);
    out[it->second].push_back(r);
  }
  return out;
}

inline StationTable ingest(const std::string& observations_csv, const std::string& metadata_csv,
                           const IngestOptions& opt = {}) {
  std::ifstream meta_in(metadata_csv);
  if (!meta_in) throw ConfigError("cannot open metadata file '" + metadata_csv + "'");
  const auto meta = read_metadata_csv(meta_in, metadata_csv);
  std::ifstream obs_in(observations_csv);
  if (!obs_in) throw ConfigError("cannot open observations file '" + observations_csv + "'");
  auto records = read_observations_csv(obs_in, observations_csv, meta);
  return build_station_table(meta, std::move(records), opt);
}

struct WeeklyRow {
  std::string station_id;
  WeekKey week;
  double maximum;
};

inline std::vector<WeeklyRow> weekly_maxima_table(const StationTable& t) {
  std::vector<WeeklyRow> rows;
  for (const auto& s : t.stations)
    for (const auto& w : s.weekly) rows.push_back({s.meta.station_id, w.week, w.maximum});
  return rows;
}

// ------------------------------------------------------------ margins

struct MarginSettings {
  int year_basis = 6;
  int week_basis = 8;
  SmoothingSpec smoothing = SmoothingSpec::gcv();
};

struct StationMargins {
  StationMeta meta;
  bool ok = false;
  std::string error;
  std::vector<WeekKey> weeks;
  std::vector<double> frechet;  // unit-Frechet value per retained week
  std::vector<std::pair<double, double>> qq;  // (empirical, theoretical)
  double pit_ks = 0.0;
  double pit_ks_pvalue = 0.0;
  std::optional<SmoothModel> model;
};

inline GevFormula station_margin_formula(const Eigen::MatrixXd& X, const MarginSettings& s) {
  GevFormula f;
  const int caps[2] = {s.year_basis, s.week_basis};
  for (int c = 0; c < 2; ++c) {
    std::vector<double> v(X.col(c).data(), X.col(c).data() + X.rows());
    std::sort(v.begin(), v.end());
    const auto distinct = static_cast<int>(std::unique(v.begin(), v.end()) - v.begin());
    if (distinct >= 4) {
      f.location.smooth_terms.push_back({static_cast<std::size_t>(c), std::min(caps[c], distinct)});
    } else if (distinct >= 2) {
      f.location.linear_terms.push_back(static_cast<std::size_t>(c));
    }
  }
  f.scale = f.location;
  return f;
}

// GEV fit with mu and log sigma additive in (ISO year, ISO week), then the
// probability integral transform to unit Frechet.
inline StationMargins fit_and_transform(const StationData& s, const MarginSettings& settings = {}) {
  StationMargins m;
  m.meta = s.meta;
  try {
    if (s.weekly.empty()) throw InsufficientDataError("station has no retained weeks");
    const auto n = static_cast<Eigen::Index>(s.weekly.size());
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& w = s.weekly[static_cast<std::size_t>(i)];
      X(i, 0) = w.week.year;
      X(i, 1) = w.week.week;
      y(i) = w.maximum;
    }
    auto model = fit_gev_margin(y, X, station_margin_formula(X, settings), settings.smoothing);
    std::vector<double> pit;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = gev_margin_cdf(model, X.row(i), y(i));
      pit.push_back(p);
      m.weeks.push_back(s.weekly[static_cast<std::size_t>(i)].week);
      m.frechet.push_back(frechet_from_probability(p).value());
    }
    m.pit_ks = ks_statistic(pit, [](double u) { return std::clamp(u, 0.0, 1.0); });
    m.pit_ks_pvalue = ks_pvalue(m.pit_ks, pit.size());
    std::vector<double> sorted = m.frechet;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const double prob = (static_cast<double>(i) + 0.5) / static_cast<double>(sorted.size());
      m.qq.emplace_back(sorted[i], -1.0 / std::log(prob));
    }
    m.model = std::move(model);
    m.ok = true;
  } catch (const Error& e) {
    m.ok = false;
    m.error = e.what();
    m.weeks.clear();
    m.frechet.clear();
    m.qq.clear();
  }
  return m;
}

inline std::vector<StationMargins> fit_all_margins(const StationTable& t, const MarginSettings& settings = {},
                                                   int threads = 1) {
  std::vector<StationMargins> out(t.stations.size());
  parallel_for(out.size(), threads, [&](std::size_t i) { out[i] = fit_and_transform(t.stations[i], settings); });
  return out;
}

// ------------------------------------------------------------ pairs

inline constexpr int kDistanceBins = 5;
inline constexpr std::array<double, kDistanceBins + 1> kBinEdgesKm{
    0.0, 10.0, 20.0, 50.0, 100.0, std::numeric_limits<double>::infinity()};

inline int distance_bin(double km) {
  for (int b = 0; b < kDistanceBins; ++b)
    if (km < kBinEdgesKm[static_cast<std::size_t>(b) + 1]) return b;
  return kDistanceBins - 1;
}

inline std::string bin_label(int b) {
  static const std::array<const char*, kDistanceBins> labels{"<10 km", "10-20 km", "20-50 km", "50-100 km",
                                                             ">100 km"};
  return labels[static_cast<std::size_t>(b)];
}

struct PairEnvironment {
  std::string station_a, station_b;
  double distance_km = 0.0;
  SiteType site_type = SiteType::Background;
  int first_year = 0, last_year = 0;
  std::vector<WeekKey> weeks;
  Eigen::VectorXd y;  // LogMax over common weeks
  Eigen::MatrixXd x;  // columns: distance, year, type (traffic = 1)

  Environment environment() const { return {station_a + "~" + station_b, x, y}; }
};

// LogMax pair over the intersection of the two stations' retained weeks.
inline PairEnvironment make_pair_environment(const StationMargins& a, const StationMargins& b) {
  if (a.meta.site_type != b.meta.site_type) throw DomainError("pairs must share the site type");
  PairEnvironment p;
  p.station_a = a.meta.station_id;
  p.station_b = b.meta.station_id;
  p.distance_km = station_distance_km(a.meta, b.meta);
  p.site_type = a.meta.site_type;
  std::vector<std::pair<double, double>> z;
  std::size_t i = 0, j = 0;
  while (i < a.weeks.size() && j < b.weeks.size()) {
    if (a.weeks[i] < b.weeks[j]) ++i;
    else if (b.weeks[j] < a.weeks[i]) ++j;
    else {
      p.weeks.push_back(a.weeks[i]);
      z.emplace_back(a.frechet[i], b.frechet[j]);
      ++i;
      ++j;
    }
  }
  const auto n = static_cast<Eigen::Index>(p.weeks.size());
  p.y.resize(n);
  p.x.resize(n, 3);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& [z1, z2] = z[static_cast<std::size_t>(k)];
    p.y(k) = std::log(std::max(z1, z2)) - kEulerGamma;
    p.x(k, 0) = p.distance_km;
    p.x(k, 1) = p.weeks[static_cast<std::size_t>(k)].year;
    p.x(k, 2) = p.site_type == SiteType::Traffic ? 1.0 : 0.0;
  }
  if (n > 0) {
    p.first_year = p.weeks.front().year;
    p.last_year = p.weeks.back().year;
  }
  return p;
}

struct PairingConstraints {
  int traffic_pairs = 3;
  int background_pairs = 2;
  long min_common_weeks = 52;
  double enumeration_cap = 2e6;      // enumerate when the product of bin sizes is below this
  long max_rejection_draws = 20'000'000;
};

class PairingInfeasible : public Error {
 public:
  using Error::Error;
};

struct CandidatePair {
  std::size_t a = 0, b = 0;  // indices into the margins list
  double distance_km = 0.0;
  SiteType type = SiteType::Background;
  int bin = 0;
};

inline std::vector<CandidatePair> candidate_pairs(const std::vector<StationMargins>& margins,
                                                  const PairingConstraints& c) {
  std::vector<CandidatePair> out;
  for (std::size_t i = 0; i < margins.size(); ++i) {
    if (!margins[i].ok) continue;
    for (std::size_t j = i + 1; j < margins.size(); ++j) {
      if (!margins[j].ok || margins[i].meta.site_type != margins[j].meta.site_type) continue;
      std::size_t common = 0, p = 0, q = 0;
      const auto& wa = margins[i].weeks;
      const auto& wb = margins[j].weeks;
      while (p < wa.size() && q < wb.size()) {
        if (wa[p] < wb[q]) ++p;
        else if (wb[q] < wa[p]) ++q;
        else {
          ++common;
          ++p;
          ++q;
        }
      }
      if (static_cast<long>(common) < c.min_common_weeks) continue;
      const double d = station_distance_km(margins[i].meta, margins[j].meta);
      out.push_back({i, j, d, margins[i].meta.site_type, distance_bin(d)});
    }
  }
  return out;
}

struct PairSelection {
  std::array<CandidatePair, kDistanceBins> pairs;  // one per distance bin
};

inline std::string infeasibility_report(const std::vector<CandidatePair>& cands, const std::vector<StationMargins>& margins,
                                        const PairingConstraints& c) {
  std::ostringstream os;
  std::size_t eligible = 0;
  for (const auto& m : margins) eligible += m.ok;
  os << "no pair selection satisfies the constraints (" << eligible << " eligible stations; need one pair per "
     << "distance bin, " << c.traffic_pairs << " traffic and " << c.background_pairs
     << " background, all stations distinct)";
  for (int b = 0; b < kDistanceBins; ++b) {
    int tr = 0, bg = 0;
    for (const auto& p : cands)
      if (p.bin == b) (p.type == SiteType::Traffic ? tr : bg)++;
    os << "\n  bin " << bin_label(b) << ": traffic " << tr << ", background " << bg;
    if (tr + bg == 0) os << "  <- no candidate pair";
  }
  return os.str();
}

// Uniformly random selection among all constraint-satisfying selections.
inline PairSelection select_pairs(const std::vector<CandidatePair>& cands, const std::vector<StationMargins>& margins,
                                  const PairingConstraints& c, Rng& rng) {
  std::array<std::vector<std::size_t>, kDistanceBins> by_bin;
  for (std::size_t i = 0; i < cands.size(); ++i) by_bin[static_cast<std::size_t>(cands[i].bin)].push_back(i);
  double product = 1.0;
  for (const auto& b : by_bin) product *= static_cast<double>(b.size());
  if (product == 0.0) throw PairingInfeasible(infeasibility_report(cands, margins, c));

  auto valid = [&](const std::array<std::size_t, kDistanceBins>& pick) {
    std::set<std::size_t> used;
    int tr = 0, bg = 0;
    for (auto k : pick) {
      const auto& p = cands[k];
      if (!used.insert(p.a).second || !used.insert(p.b).second) return false;
      (p.type == SiteType::Traffic ? tr : bg)++;
    }
    return tr == c.traffic_pairs && bg == c.background_pairs;
  };
  auto to_selection = [&](const std::array<std::size_t, kDistanceBins>& pick) {
    PairSelection s;
    for (int b = 0; b < kDistanceBins; ++b) s.pairs[static_cast<std::size_t>(b)] = cands[pick[static_cast<std::size_t>(b)]];
    return s;
  };

  if (product <= c.enumeration_cap) {
    // Count, draw a rank, then enumerate again to that rank.
    std::array<std::size_t, kDistanceBins> pick{};
    std::uint64_t count = 0, target = 0;
    bool counting = true;
    std::optional<PairSelection> chosen;
    auto rec = [&](auto&& self, int b, std::set<std::size_t>& used, int tr, int bg) -> void {
      if (chosen) return;
      if (b == kDistanceBins) {
        if (tr != c.traffic_pairs || bg != c.background_pairs) return;
        if (!counting && count == target) chosen = to_selection(pick);
        ++count;
        return;
      }
      for (auto k : by_bin[static_cast<std::size_t>(b)]) {
        const auto& p = cands[k];
        const int ntr = tr + (p.type == SiteType::Traffic), nbg = bg + (p.type == SiteType::Background);
        if (ntr > c.traffic_pairs || nbg > c.background_pairs) continue;
        if (used.count(p.a) || used.count(p.b)) continue;
        used.insert(p.a);
        used.insert(p.b);
        pick[static_cast<std::size_t>(b)] = k;
        self(self, b + 1, used, ntr, nbg);
        used.erase(p.a);
        used.erase(p.b);
        if (chosen) return;
      }
    };
    std::set<std::size_t> used;
    rec(rec, 0, used, 0, 0);
    if (count == 0) throw PairingInfeasible(infeasibility_report(cands, margins, c));
    target = std::uniform_int_distribution<std::uint64_t>(0, count - 1)(rng);
    counting = false;
    count = 0;
    rec(rec, 0, used, 0, 0);
    return *chosen;
  }
  for (long t = 0; t < c.max_rejection_draws; ++t) {
    std::array<std::size_t, kDistanceBins> pick{};
    for (int b = 0; b < kDistanceBins; ++b) {
      const auto& v = by_bin[static_cast<std::size_t>(b)];
      pick[static_cast<std::size_t>(b)] = v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
    }
    if (valid(pick)) return to_selection(pick);
  }
  throw PairingInfeasible(infeasibility_report(cands, margins, c) + "\n  (rejection sampling found no selection)");
}

// Exact post-hoc check of a selection; throws on violation.
inline void verify_selection(const PairSelection& s, const std::vector<StationMargins>& margins,
                             const PairingConstraints& c) {
  std::set<std::size_t> used;
  int tr = 0, bg = 0;
  for (int b = 0; b < kDistanceBins; ++b) {
    const auto& p = s.pairs[static_cast<std::size_t>(b)];
    if (p.bin != b || distance_bin(p.distance_km) != b) throw Error("pair in wrong distance bin");
    if (margins[p.a].meta.site_type != margins[p.b].meta.site_type) throw Error("pair mixes site types");
    if (!used.insert(p.a).second || !used.insert(p.b).second) throw Error("station used twice");
    (p.type == SiteType::Traffic ? tr : bg)++;
  }
  if (tr != c.traffic_pairs || bg != c.background_pairs) throw Error("wrong number of pairs per site type");
}

inline std::vector<PairEnvironment> build_pairs(const std::vector<StationMargins>& margins,
                                                const PairingConstraints& c, Rng& rng) {
  std::size_t eligible = 0;
  for (const auto& m : margins) eligible += m.ok;
  const auto need = static_cast<std::size_t>(2 * (c.traffic_pairs + c.background_pairs));
  if (eligible < need)
    throw PairingInfeasible("pairing needs at least " + std::to_string(need) + " eligible stations, have " +
                            std::to_string(eligible));
  const auto cands = candidate_pairs(margins, c);
  const auto sel = select_pairs(cands, margins, c, rng);
  verify_selection(sel, margins, c);
  std::vector<PairEnvironment> out;
  for (const auto& p : sel.pairs) out.push_back(make_pair_environment(margins[p.a], margins[p.b]));
  return out;
}

// ------------------------------------------------------------ application

struct ApplicationOptions {
  int draws = 50;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  int threads = 1;
  bool prune = false;  // every subset gets a p-value for the boxplot data
  PairingConstraints constraints;
};

struct ApplicationDraw {
  int index = 0;
  bool failed = false;
  std::string error;
  std::vector<PairEnvironment> pairs;
  IcpResult scan;
};

struct ApplicationResult {
  std::vector<ApplicationDraw> draws;

  std::map<Subset, long> shat_tally() const {
    std::map<Subset, long> t;
    for (const auto& d : draws)
      if (!d.failed) ++t[d.scan.s_hat];
    return t;
  }
  long all_rejected() const {
    long k = 0;
    for (const auto& d : draws) k += !d.failed && d.scan.all_rejected_flag;
    return k;
  }
  std::map<Subset, std::vector<double>> pvalues() const {
    std::map<Subset, std::vector<double>> out;
    for (const auto& d : draws)
      if (!d.failed)
        for (const auto& s : d.scan.per_subset)
          if (std::isfinite(s.p_value)) out[s.subset].push_back(s.p_value);
    return out;
  }
};

inline const std::array<std::string, 3> kApplicationCovariates{"distance", "year", "type"};

inline ApplicationResult run_application(const std::vector<StationMargins>& margins, const ApplicationOptions& opt) {
  if (opt.draws < 1) throw ConfigError("draws must be at least 1");
  ApplicationResult res;
  res.draws.resize(static_cast<std::size_t>(opt.draws));
  // Fail early with the infeasibility report when no draw can succeed.
  {
    auto rng = make_rng(opt.seed, {0x50414952ULL, 0});
    (void)build_pairs(margins, opt.constraints, rng);
  }
  parallel_for(res.draws.size(), opt.threads, [&](std::size_t k) {
    auto& d = res.draws[k];
    d.index = static_cast<int>(k);
    try {
      auto rng = make_rng(opt.seed, {0x50414952ULL, k});
      d.pairs = build_pairs(margins, opt.constraints, rng);
      std::vector<Environment> envs;
      for (const auto& p : d.pairs) envs.push_back(p.environment());
      IcpOptions io;
      io.alpha = opt.alpha;
      io.prune = opt.prune;
      d.scan = icp_scan(envs, io);
    } catch (const Error& e) {
      d.failed = true;
      d.error = e.what();
    }
  });
  return res;
}

// ------------------------------------------------------------ distance effect

inline constexpr double kNearStationKm = 5.0;
inline constexpr std::size_t kMinCurvePairs = 20;

// All same-type pairs with enough common weeks. Stations closer than 5 km
// are grouped; between two groups (and within a group) only the first pair
// in station order is kept.
inline std::vector<PairEnvironment> curve_pairs(const std::vector<StationMargins>& margins,
                                                const PairingConstraints& c) {
  const auto n = margins.size();
  std::vector<std::size_t> group(n);
  for (std::size_t i = 0; i < n; ++i) group[i] = i;
  auto find = [&](std::size_t i) {
    while (group[i] != i) i = group[i] = group[group[i]];
    return i;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (margins[i].meta.site_type == margins[j].meta.site_type &&
          station_distance_km(margins[i].meta, margins[j].meta) < kNearStationKm)
        group[find(j)] = find(i);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<PairEnvironment> out;
  for (const auto& p : candidate_pairs(margins, c)) {
    auto ga = find(p.a), gb = find(p.b);
    if (ga > gb) std::swap(ga, gb);
    if (!seen.insert({ga, gb}).second) continue;
    out.push_back(make_pair_environment(margins[p.a], margins[p.b]));
  }
  return out;
}

struct CurvePoint {
  double distance_km, theta_hat, lo, hi;
};

inline std::vector<CurvePoint> distance_effect_curve(const std::vector<PairEnvironment>& pairs, int grid_points = 50) {
  if (pairs.size() < kMinCurvePairs)
    throw InsufficientDataError("distance effect needs at least 20 pairs, have " + std::to_string(pairs.size()));
  Eigen::Index total = 0;
  for (const auto& p : pairs) total += p.y.size();
  Eigen::MatrixXd X(total, 1);
  Eigen::VectorXd y(total);
  Eigen::Index off = 0;
  std::set<double> distinct;
  for (const auto& p : pairs) {
    X.middleRows(off, p.y.size()).setConstant(p.distance_km);
    y.segment(off, p.y.size()) = p.y;
    off += p.y.size();
    distinct.insert(p.distance_km);
  }
  SmoothFormula f;
  if (distinct.size() >= 4) f.smooth_terms = {{0, std::min<int>(kDefaultBasisSize, static_cast<int>(distinct.size()))}};
  else f.linear_terms = {0};
  const auto model = fit_gumbel_location(y, X, f);
  const double lo = *distinct.begin(), hi = *distinct.rbegin();
  std::vector<CurvePoint> out;
  Eigen::RowVectorXd r(model.location.n_coef());
  Eigen::RowVectorXd xr(1);
  for (int g = 0; g < grid_points; ++g) {
    const double d = grid_points == 1 ? lo : lo + (hi - lo) * g / (grid_points - 1);
    xr(0) = d;
    model.location.design_row(xr, r);
    const double mu = r.dot(model.location.coef);
    const double se = std::sqrt(std::max(0.0, (r * model.covariance * r.transpose())(0, 0)));
    out.push_back({d, theta_for_display(mu + kEulerGamma), theta_for_display(mu - 1.96 * se + kEulerGamma),
                   theta_for_display(mu + 1.96 * se + kEulerGamma)});
  }
  return out;
}

// ------------------------------------------------------------ fixture

// Synthetic stations on a meridian. Weekly unit-Frechet fields come from a
// discrete max-linear model: Z(s) = max_k a_k(s) F_k with Gaussian kernel
// weights normalised to sum to one, so theta(d) ~ 2 Phi(d / (2 h)). With
// constant dependence, Z(s) = max(c F_0, (1 - c) F_s) and theta = 2 - c.
struct FixtureOptions {
  enum class Dependence { Distance, Constant };
  Dependence dependence = Dependence::Distance;
  double kernel_km = 40.0;
  double source_spacing_km = 1.0;
  double common_weight = 0.5;
  int weeks = 400;
  int start_year = 2010;  // fixture starts on the Monday of ISO week 1
  std::vector<double> traffic_km{0, 4, 31, 46, 92, 173, 262, 301};
  std::vector<double> background_km{11, 18, 63, 77, 141, 232, 281, 296};
  double origin_lat = 51.0;
  double lon = -1.5;
  double missing_fraction = 0.03;
  double mu0 = 60.0, mu_trend = 1.5, mu_season = 8.0;
  double log_sigma0 = std::log(12.0), log_sigma_season = 0.15;
  double xi = 0.05;
  std::uint64_t seed = 1;
};

struct Fixture {
  std::vector<StationMeta> meta;
  std::vector<std::vector<HourlyRecord>> records;
  std::vector<double> position_km;

  double theta(std::size_t i, std::size_t j, const FixtureOptions& o) const {
    if (o.dependence == FixtureOptions::Dependence::Constant) return 2.0 - o.common_weight;
    return 2.0 * normal_cdf(std::abs(position_km[i] - position_km[j]) / (2.0 * o.kernel_km));
  }
};

inline Fixture make_fixture(const FixtureOptions& o) {
  using namespace std::chrono;
  if (o.weeks < 1) throw ConfigError("fixture weeks must be positive");
  if (!(o.kernel_km > 0.0) || !(o.source_spacing_km > 0.0)) throw ConfigError("fixture kernel and spacing must be positive");
  if (!(o.common_weight > 0.0 && o.common_weight < 1.0)) throw ConfigError("fixture common weight must lie in (0, 1)");
  Fixture fx;
  constexpr double kKmPerDegree = 6371.0 * std::numbers::pi / 180.0;
  auto add = [&](const std::vector<double>& pos, SiteType t, const char* prefix) {
    for (std::size_t i = 0; i < pos.size(); ++i) {
      StationMeta m;
      m.station_id = std::string(prefix) + std::to_string(i + 1);
      m.site_type = t;
      m.latitude = o.origin_lat + pos[i] / kKmPerDegree;
      m.longitude = o.lon;
      fx.meta.push_back(m);
      fx.position_km.push_back(pos[i]);
    }
  };
  add(o.traffic_km, SiteType::Traffic, "T");
  add(o.background_km, SiteType::Background, "B");
  const std::size_t S = fx.meta.size();
  fx.records.resize(S);

  // Kernel weights per station over sources on [min - 5h, max + 5h].
  const auto [pmin, pmax] = std::minmax_element(fx.position_km.begin(), fx.position_km.end());
  std::vector<double> sources;
  for (double c = *pmin - 5 * o.kernel_km; c <= *pmax + 5 * o.kernel_km; c += o.source_spacing_km) sources.push_back(c);
  std::vector<std::vector<std::pair<std::size_t, double>>> weights(S);
  for (std::size_t s = 0; s < S; ++s) {
    double total = 0.0;
    for (std::size_t k = 0; k < sources.size(); ++k) {
      const double u = (fx.position_km[s] - sources[k]) / o.kernel_km;
      if (std::abs(u) > 5.0) continue;
      const double w = std::exp(-0.5 * u * u);
      weights[s].emplace_back(k, w);
      total += w;
    }
    for (auto& [k, w] : weights[s]) w /= total;
  }

  Rng field_rng = make_rng(o.seed, {0x4649454C44ULL});
  Rng hour_rng = make_rng(o.seed, {0x484F555253ULL});
  const sys_days start = [&] {
    const sys_days jan4{year{o.start_year} / January / 4};
    return jan4 - days{weekday{jan4}.iso_encoding() - 1};
  }();
  const std::int64_t start_hour = duration_cast<hours>(start.time_since_epoch()).count();
  std::vector<double> F(sources.size());
  for (int w = 0; w < o.weeks; ++w) {
    std::vector<double> z(S);
    if (o.dependence == FixtureOptions::Dependence::Distance) {
      for (auto& f : F) f = -1.0 / std::log(uniform_open(field_rng));
      for (std::size_t s = 0; s < S; ++s) {
        double m = 0.0;
        for (const auto& [k, a] : weights[s]) m = std::max(m, a * F[k]);
        z[s] = m;
      }
    } else {
      const double f0 = -1.0 / std::log(uniform_open(field_rng));
      for (std::size_t s = 0; s < S; ++s) {
        const double fs = -1.0 / std::log(uniform_open(field_rng));
        z[s] = std::max(o.common_weight * f0, (1.0 - o.common_weight) * fs);
      }
    }
    const std::int64_t week_start = start_hour + 168LL * w;
    const auto wk = iso_week_of_hour(week_start);
    const double years = static_cast<double>(w) / 52.1775;
    const double phase = 2.0 * std::numbers::pi * (wk.week - 1) / 52.0;
    for (std::size_t s = 0; s < S; ++s) {
      const GevParams gp{o.mu0 + o.mu_trend * years + o.mu_season * std::cos(phase),
                         std::exp(o.log_sigma0 + o.log_sigma_season * std::sin(phase)), o.xi};
      const double maximum = std::max(0.0, gev_quantile(std::exp(-1.0 / z[s]), gp));
      const int peak = static_cast<int>(std::floor(uniform_open(hour_rng) * 168.0));
      for (int h = 0; h < 168; ++h) {
        HourlyRecord r;
        r.hour = week_start + h;
        if (h == peak) {
          r.value = maximum;
        } else if (uniform_open(hour_rng) < o.missing_fraction) {
          r.missing = true;
        } else {
          r.value = maximum * uniform_open(hour_rng);
        }
        fx.records[s].push_back(r);
      }
    }
  }
  return fx;
}

inline std::string fixture_metadata_csv(const Fixture& fx) {
  CsvWriter w({"station_id", "site_type", "lat", "lon"});
  for (const auto& m : fx.meta) w.row(m.station_id, site_type_name(m.site_type), m.latitude, m.longitude);
  return w.str();
}

inline std::string fixture_observations_csv(const Fixture& fx) {
  std::string out = "timestamp,station_id,value\n";
  char buf[64];
  for (std::size_t s = 0; s < fx.meta.size(); ++s)
    for (const auto& r : fx.records[s]) {
      out += format_hour_timestamp(r.hour);
      out += ',';
      out += fx.meta[s].station_id;
      out += ',';
      if (!r.missing) {
        std::snprintf(buf, sizeof buf, "%.6f", r.value);
        out += buf;
      }
      out += '\n';
    }
  return out;
}

}  // namespace tailicp
