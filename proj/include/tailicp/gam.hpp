#pragma once

// Penalised additive models: linear predictors built from linear and cubic
// B-spline smooth terms, and the Gumbel fixed-scale location regression used
// for LogMax responses.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tailicp/bspline.hpp"
#include "tailicp/errors.hpp"
#include "tailicp/evt.hpp"
#include "tailicp/special.hpp"

namespace tailicp {

inline constexpr int kDefaultBasisSize = 10;

struct SmoothTerm {
  std::size_t covariate = 0;
  int basis_size = kDefaultBasisSize;
  friend bool operator==(const SmoothTerm&, const SmoothTerm&) = default;
};

struct SmoothFormula {
  std::vector<std::size_t> linear_terms;
  std::vector<SmoothTerm> smooth_terms;

  static SmoothFormula constant() { return {}; }
  bool empty() const noexcept { return linear_terms.empty() && smooth_terms.empty(); }

  void validate(std::size_t n_covariates) const {
    std::set<std::size_t> seen;
    auto claim = [&](std::size_t c) {
      if (c >= n_covariates)
        throw DomainError("formula references covariate " + std::to_string(c) + " but only " +
                          std::to_string(n_covariates) + " are available");
      if (!seen.insert(c).second)
        throw DomainError("covariate " + std::to_string(c) + " appears in more than one term");
    };
    for (auto c : linear_terms) claim(c);
    for (const auto& s : smooth_terms) {
      claim(s.covariate);
      if (s.basis_size < BSplineBasis::kOrder) throw DomainError("smooth basis size must be >= 4");
    }
  }
  friend bool operator==(const SmoothFormula&, const SmoothFormula&) = default;
};

struct LinearComponent {
  std::size_t covariate = 0;
  double center = 0.0;
  double scale = 1.0;
};

struct SmoothComponent {
  std::size_t covariate = 0;
  BSplineBasis basis;
  Eigen::MatrixXd constraint;  // k x (k-1): sum-to-zero reparametrisation
  Eigen::MatrixXd penalty;     // (k-1) x (k-1): integrated squared 2nd derivative, normalised
  double lambda = 0.0;
  int width() const { return static_cast<int>(constraint.cols()); }
};

// eta(x) = b0 + sum_j b_j (x_j - c_j)/s_j + sum_k h_k(x_k).
// Coefficient layout: [intercept | linear terms | smooth blocks].
class LinearPredictor {
 public:
  std::vector<LinearComponent> linear;
  std::vector<SmoothComponent> smooths;
  Eigen::VectorXd coef;

  static LinearPredictor build(const SmoothFormula& f, const Eigen::MatrixXd& X) {
    f.validate(static_cast<std::size_t>(X.cols()));
    if (X.rows() < 2) throw InsufficientDataError("model needs at least two rows");
    LinearPredictor lp;
    for (auto c : f.linear_terms) {
      const auto col = X.col(static_cast<Eigen::Index>(c));
      const double mean = col.mean();
      const double sd = std::sqrt((col.array() - mean).square().mean());
      if (!(sd > 0.0))
        throw FitError("rank-deficient design: linear term x" + std::to_string(c + 1) +
                       " is constant and collinear with the intercept");
      lp.linear.push_back({c, mean, sd});
    }
    for (const auto& s : f.smooth_terms) {
      const auto col = X.col(static_cast<Eigen::Index>(s.covariate));
      std::vector<double> xs(col.data(), col.data() + col.size());
      SmoothComponent sc;
      sc.covariate = s.covariate;
      sc.basis = BSplineBasis::from_data(xs, s.basis_size);
      const int k = sc.basis.size();
      Eigen::MatrixXd B(X.rows(), k);
      std::vector<double> row(static_cast<std::size_t>(k));
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        sc.basis.eval(xs[static_cast<std::size_t>(i)], row);
        for (int j = 0; j < k; ++j) B(i, j) = row[static_cast<std::size_t>(j)];
      }
      const Eigen::VectorXd csum = B.colwise().sum().transpose();
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(csum);
      const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(k, k);
      sc.constraint = Q.rightCols(k - 1);
      const Eigen::MatrixXd BZ = B * sc.constraint;
      Eigen::MatrixXd P = sc.constraint.transpose() * sc.basis.second_derivative_gram() * sc.constraint;
      const double pn = P.norm();
      if (pn > 0.0) P *= (BZ.transpose() * BZ).norm() / pn;
      sc.penalty = 0.5 * (P + P.transpose());
      lp.smooths.push_back(std::move(sc));
    }
    lp.coef = Eigen::VectorXd::Zero(lp.n_coef());
    return lp;
  }

  Eigen::Index n_coef() const {
    Eigen::Index p = 1 + static_cast<Eigen::Index>(linear.size());
    for (const auto& s : smooths) p += s.width();
    return p;
  }

  Eigen::Index smooth_offset(std::size_t k) const {
    Eigen::Index off = 1 + static_cast<Eigen::Index>(linear.size());
    for (std::size_t i = 0; i < k; ++i) off += smooths[i].width();
    return off;
  }

  std::string term_name(Eigen::Index col) const {
    if (col == 0) return "intercept";
    if (col <= static_cast<Eigen::Index>(linear.size()))
      return "x" + std::to_string(linear[static_cast<std::size_t>(col - 1)].covariate + 1);
    for (std::size_t k = 0; k < smooths.size(); ++k) {
      const auto off = smooth_offset(k);
      if (col >= off && col < off + smooths[k].width())
        return "s(x" + std::to_string(smooths[k].covariate + 1) + ")";
    }
    return "?";
  }

  // Design row for one covariate vector. Returns true when some smooth was
  // evaluated outside its knot range (linear extrapolation).
  template <class Row, class Out>
  bool design_row(const Row& x, Out&& out) const {
    bool extrapolated = false;
    out(0) = 1.0;
    Eigen::Index c = 1;
    for (const auto& l : linear) out(c++) = (x(static_cast<Eigen::Index>(l.covariate)) - l.center) / l.scale;
    std::vector<double> raw;
    for (const auto& s : smooths) {
      const int k = s.basis.size();
      raw.assign(static_cast<std::size_t>(k), 0.0);
      const double v = x(static_cast<Eigen::Index>(s.covariate));
      if (!s.basis.inside(v)) extrapolated = true;
      s.basis.eval(v, raw);
      const Eigen::Map<const Eigen::RowVectorXd> r(raw.data(), k);
      out.segment(c, s.width()) = r * s.constraint;
      c += s.width();
    }
    return extrapolated;
  }

  Eigen::MatrixXd design(const Eigen::MatrixXd& X, std::vector<char>* extrapolated = nullptr) const {
    Eigen::MatrixXd D(X.rows(), n_coef());
    if (extrapolated) extrapolated->assign(static_cast<std::size_t>(X.rows()), 0);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const bool e = design_row(X.row(i), D.row(i));
      if (extrapolated) (*extrapolated)[static_cast<std::size_t>(i)] = e;
    }
    return D;
  }

  template <class Row>
  double eval(const Row& x, bool* extrapolated = nullptr) const {
    Eigen::RowVectorXd r(n_coef());
    const bool e = design_row(x, r);
    if (extrapolated) *extrapolated = e;
    return r.dot(coef);
  }

  Eigen::VectorXd eval(const Eigen::MatrixXd& X) const { return design(X) * coef; }

  std::vector<double> lambdas() const {
    std::vector<double> l;
    for (const auto& s : smooths) l.push_back(s.lambda);
    return l;
  }

  // Block-diagonal total penalty sum_k lambda_k S_k embedded at full size.
  Eigen::MatrixXd penalty(const std::vector<double>& lambda) const {
    const auto p = n_coef();
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t k = 0; k < smooths.size(); ++k) {
      const auto off = smooth_offset(k);
      S.block(off, off, smooths[k].width(), smooths[k].width()) += lambda[k] * smooths[k].penalty;
    }
    return S;
  }
  Eigen::MatrixXd penalty() const { return penalty(lambdas()); }

  // Sum of all smooth penalties with unit weights; used for identifiability.
  Eigen::MatrixXd unit_penalty() const { return penalty(std::vector<double>(smooths.size(), 1.0)); }
};

// Throws FitError naming the terms involved when the penalised design
// [X; S] does not identify every coefficient.
inline void check_identifiable(const LinearPredictor& lp, const Eigen::MatrixXd& D) {
  Eigen::MatrixXd M = D.transpose() * D + lp.unit_penalty();
  const Eigen::VectorXd scale = M.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  M = scale.asDiagonal() * M * scale.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  const auto& ev = es.eigenvalues();
  if (ev(0) > 1e-10 * ev(ev.size() - 1)) return;
  const Eigen::VectorXd v = es.eigenvectors().col(0);
  std::set<std::string> terms;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v(i)) > 0.05) terms.insert(lp.term_name(i));
  std::string names;
  for (const auto& t : terms) names += (names.empty() ? "" : ", ") + t;
  throw FitError("rank-deficient design: collinear terms {" + names + "}");
}

// Penalised Gumbel location log-likelihood
//   sum_i [mu_i - y_i - exp(mu_i - y_i)] - beta' S beta,  mu = X beta.
class GumbelObjective {
 public:
  GumbelObjective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Eigen::MatrixXd S)
      : X_(X), y_(y), S_(std::move(S)) {}

  double value(const Eigen::VectorXd& beta) const {
    const Eigen::ArrayXd r = (X_ * beta - y_).array();
    return (r - r.exp()).sum() - beta.dot(S_ * beta);
  }
  Eigen::VectorXd gradient(const Eigen::VectorXd& beta) const {
    const Eigen::ArrayXd e = (X_ * beta - y_).array().exp();
    return X_.transpose() * (1.0 - e).matrix() - 2.0 * S_ * beta;
  }
  // Negative Hessian, X' W X + 2 S with W = diag(exp(mu - y)).
  Eigen::MatrixXd neg_hessian(const Eigen::VectorXd& beta) const {
    const Eigen::ArrayXd e = (X_ * beta - y_).array().exp();
    return weighted_gram(e) + 2.0 * S_;
  }
  Eigen::MatrixXd weighted_gram(const Eigen::ArrayXd& w) const {
    const Eigen::MatrixXd Xw = X_.array().colwise() * w.sqrt();
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(X_.cols(), X_.cols());
    G.selfadjointView<Eigen::Lower>().rankUpdate(Xw.transpose());
    return G.selfadjointView<Eigen::Lower>();
  }
  const Eigen::MatrixXd& design() const noexcept { return X_; }
  const Eigen::VectorXd& response() const noexcept { return y_; }
  const Eigen::MatrixXd& penalty() const noexcept { return S_; }

 private:
  const Eigen::MatrixXd& X_;
  const Eigen::VectorXd& y_;
  Eigen::MatrixXd S_;
};

inline constexpr int kMaxNewtonIterations = 100;
inline constexpr int kMaxStepHalvings = 30;
inline constexpr double kObjectiveTolerance = 1e-8;

struct PenalizedFit {
  Eigen::VectorXd beta;
  double objective = 0.0;
  double deviance = 0.0;
  double edf = 0.0;
  double gcv = 0.0;
  int iterations = 0;
  Eigen::MatrixXd neg_hessian;  // X'WX + 2S at the optimum
};

// Newton iterations with step halving. The objective is strictly concave for
// fixed smoothing parameters, so the optimum is unique.
inline PenalizedFit newton_gumbel(const GumbelObjective& obj, Eigen::VectorXd beta) {
  const auto& X = obj.design();
  const auto& y = obj.response();
  const double n = static_cast<double>(y.size());
  std::ostringstream trace;
  double f = obj.value(beta);
  if (!std::isfinite(f)) throw FitError("Gumbel fit: non-finite objective at the starting point");
  double prev = f;
  for (int it = 1; it <= kMaxNewtonIterations; ++it) {
    const Eigen::ArrayXd e = (X * beta - y).array().exp();
    const Eigen::VectorXd g = X.transpose() * (1.0 - e).matrix() - 2.0 * obj.penalty() * beta;
    const double gnorm = g.norm();
    trace << "iter " << it << " objective " << f << " |grad| " << gnorm << '\n';
    const bool small_grad = gnorm <= 1e-6 * n;
    if ((it > 1 && std::abs(f - prev) <= kObjectiveTolerance && small_grad) || gnorm <= 1e-12 * n) {
      PenalizedFit r;
      r.beta = std::move(beta);
      r.objective = f;
      r.iterations = it - 1;
      const Eigen::MatrixXd G = obj.weighted_gram(e);
      r.neg_hessian = G + 2.0 * obj.penalty();
      Eigen::LDLT<Eigen::MatrixXd> ldlt(r.neg_hessian);
      r.edf = ldlt.solve(G).trace();
      const Eigen::ArrayXd d = (X * r.beta - y).array();
      r.deviance = 2.0 * (d.exp() - d - 1.0).sum();
      r.gcv = n * r.deviance / std::pow(std::max(n - r.edf, 1e-8), 2);
      return r;
    }
    const Eigen::MatrixXd H = obj.weighted_gram(e) + 2.0 * obj.penalty();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    Eigen::VectorXd step = ldlt.solve(g);
    if (ldlt.info() != Eigen::Success || !step.allFinite())
      throw FitError("Gumbel fit: Newton system could not be solved", trace.str());
    double fn = -std::numeric_limits<double>::infinity();
    int halvings = 0;
    Eigen::VectorXd cand;
    for (; halvings <= kMaxStepHalvings; ++halvings) {
      cand = beta + step;
      fn = obj.value(cand);
      if (std::isfinite(fn) && fn >= f - 1e-12 * std::abs(f)) break;
      step *= 0.5;
    }
    if (halvings > kMaxStepHalvings) {
      if (small_grad) {
        prev = f;  // at the floating-point floor; accept the current point
        continue;
      }
      throw FitError("Gumbel fit: step halving failed", trace.str());
    }
    prev = f;
    f = fn;
    beta = std::move(cand);
  }
  throw FitError("Gumbel fit: no convergence after 100 iterations", trace.str());
}

enum class ModelFamily { GumbelLocation, Gev };

struct SmoothingSpec {
  enum class Mode { Fixed, Gcv };
  Mode mode = Mode::Gcv;
  std::vector<double> lambdas;  // Fixed: one per smooth term, or a single value for all
  std::vector<double> log10_grid{-4, -3, -2, -1, 0, 1, 2, 3, 4, 5, 6};

  static SmoothingSpec fixed(std::vector<double> l) {
    SmoothingSpec s;
    s.mode = Mode::Fixed;
    s.lambdas = std::move(l);
    return s;
  }
  static SmoothingSpec gcv() { return {}; }

  std::vector<double> resolve(std::size_t n_smooth) const {
    if (lambdas.size() == n_smooth) return lambdas;
    if (lambdas.size() == 1) return std::vector<double>(n_smooth, lambdas.front());
    if (n_smooth == 0) return {};
    throw DomainError("fixed smoothing needs one lambda per smooth term or a single value");
  }
};

struct SmoothModel {
  ModelFamily family = ModelFamily::GumbelLocation;
  SmoothFormula formula;            // location formula
  std::optional<SmoothFormula> scale_formula;  // GEV only (log link)
  LinearPredictor location;
  LinearPredictor log_scale;        // GEV only
  double shape = 0.0;               // GEV only
  Eigen::MatrixXd covariance;       // posterior covariance of the location coefficients
  double penalized_loglik = 0.0;
  double edf = 0.0;
  double gcv = 0.0;
  int iterations = 0;
  std::vector<std::string> warnings;

  template <class Row>
  double linear_predictor(const Row& x, bool* extrapolated = nullptr) const {
    return location.eval(x, extrapolated);
  }
  Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& X) const { return location.eval(X); }

  template <class Row>
  GevParams gev_params(const Row& x) const {
    return {location.eval(x), std::exp(log_scale.eval(x)), shape};
  }
};

namespace detail {

inline double constant_gumbel_location(const Eigen::VectorXd& y) {
  // -log(mean(exp(-y))) computed stably
  const double m = (-y).maxCoeff();
  const double s = (-y.array() - m).exp().sum();
  return -(m + std::log(s / static_cast<double>(y.size())));
}

inline void check_response(const Eigen::VectorXd& y, const Eigen::MatrixXd& X) {
  if (y.size() != X.rows())
    throw DomainError("response length " + std::to_string(y.size()) + " does not match " +
                      std::to_string(X.rows()) + " covariate rows");
  if (!y.allFinite()) throw DomainError("response contains non-finite values");
  if (!X.allFinite()) throw DomainError("covariates contain non-finite values");
}

}  // namespace detail

// Penalised Gumbel location regression of y on the additive predictor.
// With GCV, a common smoothing parameter is first chosen on the grid, then
// each smooth is refined in turn on the same grid with the others held fixed.
inline SmoothModel fit_gumbel_location(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                       const SmoothFormula& formula,
                                       const SmoothingSpec& smoothing = SmoothingSpec::gcv()) {
  detail::check_response(y, X);
  SmoothModel model;
  model.family = ModelFamily::GumbelLocation;
  model.formula = formula;
  model.location = LinearPredictor::build(formula, X);
  auto& lp = model.location;
  const Eigen::MatrixXd D = lp.design(X);
  check_identifiable(lp, D);

  Eigen::VectorXd start = Eigen::VectorXd::Zero(lp.n_coef());
  start(0) = detail::constant_gumbel_location(y);
  const std::size_t K = lp.smooths.size();

  auto run = [&](const std::vector<double>& lam, const Eigen::VectorXd& init) {
    GumbelObjective obj(D, y, lp.penalty(lam));
    return newton_gumbel(obj, init);
  };

  std::vector<double> lambda;
  PenalizedFit best;
  if (smoothing.mode == SmoothingSpec::Mode::Fixed || K == 0) {
    lambda = smoothing.mode == SmoothingSpec::Mode::Fixed ? smoothing.resolve(K)
                                                          : std::vector<double>{};
    best = run(lambda, start);
  } else {
    std::vector<double> grid;
    for (double g : smoothing.log10_grid) grid.push_back(std::pow(10.0, g));
    // Start from the heaviest penalty, the closest to the constant fit.
    std::sort(grid.rbegin(), grid.rend());
    Eigen::VectorXd warm = start;
    bool have = false;
    for (double g : grid) {
      std::vector<double> lam(K, g);
      auto f = run(lam, warm);
      warm = f.beta;
      if (!have || f.gcv < best.gcv) {
        best = std::move(f);
        lambda = lam;
        have = true;
      }
    }
    if (K > 1) {
      for (std::size_t k = 0; k < K; ++k) {
        warm = best.beta;
        for (double g : grid) {
          if (g == lambda[k]) continue;
          auto lam = lambda;
          lam[k] = g;
          auto f = run(lam, warm);
          warm = f.beta;
          if (f.gcv < best.gcv) {
            best = std::move(f);
            lambda = lam;
          }
        }
      }
    }
  }
  for (std::size_t k = 0; k < K; ++k) lp.smooths[k].lambda = lambda[k];
  lp.coef = best.beta;
  model.penalized_loglik = best.objective;
  model.edf = best.edf;
  model.gcv = best.gcv;
  model.iterations = best.iterations;
  model.covariance = best.neg_hessian.ldlt().solve(
      Eigen::MatrixXd::Identity(best.neg_hessian.rows(), best.neg_hessian.cols()));
  return model;
}

struct LogThetaPrediction {
  double log_theta = 0.0;
  bool extrapolated = false;
};

// log theta(x) = mu(x) + gamma for a Gumbel location model.
template <class Row>
LogThetaPrediction predict_log_theta(const SmoothModel& m, const Row& x) {
  if (m.family != ModelFamily::GumbelLocation)
    throw DomainError("predict_log_theta requires a Gumbel location model");
  LogThetaPrediction p;
  p.log_theta = m.linear_predictor(x, &p.extrapolated) + kEulerGamma;
  return p;
}

// Extremal coefficient for display: exp(log theta) clamped to [1, 2].
inline double theta_for_display(double log_theta) { return std::clamp(std::exp(log_theta), 1.0, 2.0); }

// eta_i = y_i - mu(x_i).
inline Eigen::VectorXd residuals(const SmoothModel& m, const Eigen::VectorXd& y, const Eigen::MatrixXd& X) {
  if (m.family != ModelFamily::GumbelLocation)
    throw DomainError("residuals require a Gumbel location model");
  if (y.size() != X.rows()) throw DomainError("residuals: response and covariate rows differ");
  return y - m.linear_predictor(X);
}

// ---------------------------------------------------------------- JSON

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& M) {
  auto j = nlohmann::json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    j.push_back(row);
  }
  return j;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      M(r, c) = j.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
  return M;
}

inline nlohmann::json formula_to_json(const SmoothFormula& f) {
  nlohmann::json j;
  j["linear"] = f.linear_terms;
  j["smooth"] = nlohmann::json::array();
  for (const auto& s : f.smooth_terms) j["smooth"].push_back({{"covariate", s.covariate}, {"basis_size", s.basis_size}});
  return j;
}

inline SmoothFormula formula_from_json(const nlohmann::json& j) {
  SmoothFormula f;
  f.linear_terms = j.at("linear").get<std::vector<std::size_t>>();
  for (const auto& s : j.at("smooth"))
    f.smooth_terms.push_back({s.at("covariate").get<std::size_t>(), s.at("basis_size").get<int>()});
  return f;
}

inline nlohmann::json predictor_to_json(const LinearPredictor& lp) {
  nlohmann::json j;
  j["linear"] = nlohmann::json::array();
  for (const auto& l : lp.linear)
    j["linear"].push_back({{"covariate", l.covariate}, {"center", l.center}, {"scale", l.scale}});
  j["smooths"] = nlohmann::json::array();
  for (const auto& s : lp.smooths)
    j["smooths"].push_back({{"covariate", s.covariate},
                            {"knots", s.basis.knots()},
                            {"constraint", matrix_to_json(s.constraint)},
                            {"penalty", matrix_to_json(s.penalty)},
                            {"lambda", s.lambda}});
  j["coefficients"] = std::vector<double>(lp.coef.data(), lp.coef.data() + lp.coef.size());
  return j;
}

inline LinearPredictor predictor_from_json(const nlohmann::json& j) {
  LinearPredictor lp;
  for (const auto& l : j.at("linear"))
    lp.linear.push_back({l.at("covariate").get<std::size_t>(), l.at("center").get<double>(),
                         l.at("scale").get<double>()});
  for (const auto& s : j.at("smooths")) {
    SmoothComponent sc;
    sc.covariate = s.at("covariate").get<std::size_t>();
    sc.basis = BSplineBasis(s.at("knots").get<std::vector<double>>());
    sc.constraint = matrix_from_json(s.at("constraint"));
    sc.penalty = matrix_from_json(s.at("penalty"));
    sc.lambda = s.at("lambda").get<double>();
    lp.smooths.push_back(std::move(sc));
  }
  const auto c = j.at("coefficients").get<std::vector<double>>();
  lp.coef = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
  if (lp.coef.size() != lp.n_coef()) throw ParseError("model", 0, "coefficient count does not match terms");
  return lp;
}

inline nlohmann::json to_json(const SmoothModel& m) {
  nlohmann::json j;
  j["family"] = m.family == ModelFamily::GumbelLocation ? "gumbel_location" : "gev";
  j["formula"] = formula_to_json(m.formula);
  j["location"] = predictor_to_json(m.location);
  if (m.family == ModelFamily::Gev) {
    j["scale_formula"] = formula_to_json(m.scale_formula.value_or(SmoothFormula{}));
    j["log_scale"] = predictor_to_json(m.log_scale);
    j["shape"] = m.shape;
  }
  j["covariance"] = matrix_to_json(m.covariance);
  j["penalized_loglik"] = m.penalized_loglik;
  j["edf"] = m.edf;
  j["gcv"] = m.gcv;
  j["iterations"] = m.iterations;
  j["warnings"] = m.warnings;
  return j;
}

inline SmoothModel model_from_json(const nlohmann::json& j) {
  SmoothModel m;
  const auto fam = j.at("family").get<std::string>();
  if (fam == "gumbel_location") m.family = ModelFamily::GumbelLocation;
  else if (fam == "gev") m.family = ModelFamily::Gev;
  else throw ParseError("model", 0, "unknown family '" + fam + "'");
  m.formula = formula_from_json(j.at("formula"));
  m.location = predictor_from_json(j.at("location"));
  if (m.family == ModelFamily::Gev) {
    m.scale_formula = formula_from_json(j.at("scale_formula"));
    m.log_scale = predictor_from_json(j.at("log_scale"));
    m.shape = j.at("shape").get<double>();
  }
  m.covariance = matrix_from_json(j.at("covariance"));
  m.penalized_loglik = j.at("penalized_loglik").get<double>();
  m.edf = j.at("edf").get<double>();
  m.gcv = j.at("gcv").get<double>();
  m.iterations = j.at("iterations").get<int>();
  m.warnings = j.at("warnings").get<std::vector<std::string>>();
  return m;
}

}  // namespace tailicp
