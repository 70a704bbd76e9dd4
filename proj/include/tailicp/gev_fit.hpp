#pragma once

// Covariate-dependent GEV margins: mu(x) and log sigma(x) additive with
// penalised smooths, xi constant. Fitted by BFGS on the penalised negative
// log-likelihood; the common smoothing parameter is chosen by AIC with
// effective degrees of freedom.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tailicp/errors.hpp"
#include "tailicp/evt.hpp"
#include "tailicp/gam.hpp"
#include "tailicp/optim.hpp"
#include "tailicp/special.hpp"

namespace tailicp {

struct GevFormula {
  SmoothFormula location;
  SmoothFormula scale;  // applied to log sigma
  static GevFormula constant() { return {}; }
};

inline constexpr double kIrregularShape = -0.5;
inline constexpr std::size_t kRecommendedMaxima = 200;

namespace detail {

struct GevObservationGrad {
  double loglik, d_mu, d_logsigma, d_xi;
};

// Log-density and its derivatives in (mu, log sigma, xi); loglik = -inf
// outside the support.
inline GevObservationGrad gev_obs(double x, double mu, double log_sigma, double xi) {
  const double sigma = std::exp(log_sigma);
  const double z = (x - mu) / sigma;
  if (std::abs(xi) < kZeroShape) {
    const double ez = std::exp(-z);
    return {-log_sigma - z - ez, (1.0 - ez) / sigma, -1.0 + z * (1.0 - ez), -z + 0.5 * z * z * (1.0 - ez)};
  }
  const double t = 1.0 + xi * z;
  if (!(t > 0.0)) return {-std::numeric_limits<double>::infinity(), 0.0, 0.0, 0.0};
  const double L = std::log1p(xi * z);
  const double tp = std::exp(-L / xi);
  const double a = (1.0 + xi) - tp;
  double dxi;
  if (std::abs(xi) < 1e-6) {
    dxi = -z + 0.5 * z * z * (1.0 - std::exp(-z));
  } else {
    dxi = -z / t + (tp - 1.0) * (z / (xi * t) - L / (xi * xi));
  }
  return {-log_sigma - (1.0 + 1.0 / xi) * L - tp, a / (sigma * t), -1.0 + z * a / t, dxi};
}

class GevObjective {
 public:
  GevObjective(const Eigen::VectorXd& y, const Eigen::MatrixXd& Dm, const Eigen::MatrixXd& Ds,
               Eigen::MatrixXd Sm, Eigen::MatrixXd Ss)
      : y_(y), Dm_(Dm), Ds_(Ds), Sm_(std::move(Sm)), Ss_(std::move(Ss)) {}

  Eigen::Index pm() const { return Dm_.cols(); }
  Eigen::Index ps() const { return Ds_.cols(); }
  Eigen::Index size() const { return pm() + ps() + 1; }

  // Negative log-likelihood (unpenalised); gradient written when requested.
  double negloglik(const Eigen::VectorXd& th, Eigen::VectorXd* grad) const {
    const Eigen::VectorXd mu = Dm_ * th.head(pm());
    const Eigen::VectorXd ls = Ds_ * th.segment(pm(), ps());
    const double xi = th(size() - 1);
    Eigen::VectorXd gm(y_.size()), gs(y_.size());
    double gx = 0.0, ll = 0.0;
    for (Eigen::Index i = 0; i < y_.size(); ++i) {
      const auto o = gev_obs(y_(i), mu(i), ls(i), xi);
      if (!std::isfinite(o.loglik)) return std::numeric_limits<double>::infinity();
      ll += o.loglik;
      gm(i) = o.d_mu;
      gs(i) = o.d_logsigma;
      gx += o.d_xi;
    }
    if (grad) {
      grad->resize(size());
      grad->head(pm()) = -(Dm_.transpose() * gm);
      grad->segment(pm(), ps()) = -(Ds_.transpose() * gs);
      (*grad)(size() - 1) = -gx;
    }
    return -ll;
  }

  double penalty(const Eigen::VectorXd& th, double lambda, Eigen::VectorXd* grad) const {
    const auto bm = th.head(pm());
    const auto bs = th.segment(pm(), ps());
    if (grad) {
      grad->resize(size());
      grad->head(pm()) = 2.0 * lambda * (Sm_ * bm);
      grad->segment(pm(), ps()) = 2.0 * lambda * (Ss_ * bs);
      (*grad)(size() - 1) = 0.0;
    }
    return lambda * (bm.dot(Sm_ * bm) + bs.dot(Ss_ * bs));
  }

  Eigen::MatrixXd penalty_matrix() const {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(size(), size());
    P.topLeftCorner(pm(), pm()) = Sm_;
    P.block(pm(), pm(), ps(), ps()) = Ss_;
    return P;
  }

  // Hessian of the negative log-likelihood by central differences of the
  // analytic gradient. Steps shrink near the support boundary; a one-sided
  // difference is used when only one side stays inside.
  Eigen::MatrixXd negloglik_hessian(const Eigen::VectorXd& th) const {
    const auto p = size();
    Eigen::MatrixXd H(p, p);
    Eigen::VectorXd g0, gp, gmn;
    const double f0 = negloglik(th, &g0);
    if (!std::isfinite(f0)) throw NumericError("GEV Hessian requested outside the support");
    for (Eigen::Index j = 0; j < p; ++j) {
      const double h0 = 1e-5 * std::max(1.0, std::abs(th(j)));
      auto step = [&](double h, Eigen::VectorXd& g) {
        Eigen::VectorXd t = th;
        t(j) += h;
        return std::isfinite(negloglik(t, &g));
      };
      bool done = false;
      for (double h = h0; h > h0 * 1e-5 && !done; h *= 0.1) {
        if (step(h, gp) && step(-h, gmn)) {
          H.col(j) = (gp - gmn) / (2.0 * h);
          done = true;
        }
      }
      for (double h = h0; h > h0 * 1e-5 && !done; h *= 0.1) {
        if (step(h, gp)) {
          H.col(j) = (gp - g0) / h;
          done = true;
        } else if (step(-h, gmn)) {
          H.col(j) = (g0 - gmn) / h;
          done = true;
        }
      }
      if (!done) throw NumericError("GEV Hessian step left the support");
    }
    return 0.5 * (H + H.transpose());
  }

 private:
  const Eigen::VectorXd& y_;
  const Eigen::MatrixXd& Dm_;
  const Eigen::MatrixXd& Ds_;
  Eigen::MatrixXd Sm_, Ss_;
};

}  // namespace detail

// Fitted distribution function of the margin at one covariate row.
template <class Row>
double gev_margin_cdf(const SmoothModel& m, const Row& x, double value) {
  if (m.family != ModelFamily::Gev) throw DomainError("gev_margin_cdf requires a GEV model");
  return gev_cdf(value, m.gev_params(x));
}

inline SmoothModel fit_gev_margin(const Eigen::VectorXd& maxima, const Eigen::MatrixXd& X,
                                  const GevFormula& formula,
                                  const SmoothingSpec& smoothing = SmoothingSpec::gcv()) {
  detail::check_response(maxima, X);
  const auto n = maxima.size();
  if (n < 10) throw InsufficientDataError("GEV margin fit needs at least 10 maxima, got " + std::to_string(n));
  SmoothModel model;
  model.family = ModelFamily::Gev;
  model.formula = formula.location;
  model.scale_formula = formula.scale;
  model.location = LinearPredictor::build(formula.location, X);
  model.log_scale = LinearPredictor::build(formula.scale, X);
  if (static_cast<std::size_t>(n) < kRecommendedMaxima)
    model.warnings.push_back("only " + std::to_string(n) + " maxima; at least 200 recommended");
  const Eigen::MatrixXd Dm = model.location.design(X);
  const Eigen::MatrixXd Ds = model.log_scale.design(X);
  check_identifiable(model.location, Dm);
  check_identifiable(model.log_scale, Ds);

  detail::GevObjective obj(maxima, Dm, Ds, model.location.unit_penalty(), model.log_scale.unit_penalty());
  const double nn = static_cast<double>(n);

  // Gumbel moment start for the intercepts, xi = 0.
  const double mean = maxima.mean();
  const double sd = std::sqrt((maxima.array() - mean).square().sum() / (nn - 1.0));
  if (!(sd > 0.0)) throw FitError("GEV margin fit: maxima are constant");
  const double s0 = std::sqrt(6.0) * sd / std::numbers::pi;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(obj.size());
  theta(0) = mean - kEulerGamma * s0;
  theta(obj.pm()) = std::log(s0);

  auto fit = [&](double lambda, const Eigen::VectorXd& start) {
    auto f = [&](const Eigen::VectorXd& th, Eigen::VectorXd* g) {
      Eigen::VectorXd g1, g2;
      const double v = obj.negloglik(th, g ? &g1 : nullptr);
      if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
      const double pen = obj.penalty(th, lambda, g ? &g2 : nullptr);
      if (g) *g = (g1 + g2) / nn;
      return (v + pen) / nn;
    };
    return bfgs_minimize(f, start);
  };

  const bool has_smooth = !model.location.smooths.empty() || !model.log_scale.smooths.empty();
  std::vector<double> grid;
  if (!has_smooth) {
    grid = {0.0};
  } else if (smoothing.mode == SmoothingSpec::Mode::Fixed) {
    grid = {smoothing.resolve(1).front()};
  } else {
    for (double g : smoothing.log10_grid) grid.push_back(std::pow(10.0, g));
    std::sort(grid.rbegin(), grid.rend());
  }

  const Eigen::MatrixXd P = obj.penalty_matrix();
  double best_aic = std::numeric_limits<double>::infinity();
  double best_lambda = grid.front();
  BfgsResult best;
  double best_edf = 0.0;
  Eigen::VectorXd warm = theta;
  std::string trace;
  for (double lambda : grid) {
    auto r = fit(lambda, warm);
    trace += r.trace;
    if (!std::isfinite(r.value)) continue;
    warm = r.x;
    Eigen::MatrixXd H;
    try {
      H = obj.negloglik_hessian(r.x);
    } catch (const NumericError& e) {
      trace += "lambda " + std::to_string(lambda) + ": " + e.what() + "\n";
      continue;
    }
    const Eigen::MatrixXd Hp = H + 2.0 * lambda * P;
    const double edf = Hp.ldlt().solve(H).trace();
    const double nll = obj.negloglik(r.x, nullptr);
    const double aic = 2.0 * nll + 2.0 * edf;
    if (aic < best_aic) {
      best_aic = aic;
      best_lambda = lambda;
      best = std::move(r);
      best_edf = edf;
    }
  }
  if (!std::isfinite(best_aic)) throw FitError("GEV margin fit failed for every smoothing value", trace);
  if (!best.converged && best.gradient.lpNorm<Eigen::Infinity>() > 1e-3)
    throw FitError("GEV margin fit did not converge", best.trace);

  model.location.coef = best.x.head(obj.pm());
  model.log_scale.coef = best.x.segment(obj.pm(), obj.ps());
  model.shape = best.x(obj.size() - 1);
  for (auto& s : model.location.smooths) s.lambda = best_lambda;
  for (auto& s : model.log_scale.smooths) s.lambda = best_lambda;
  model.penalized_loglik = -best.value * nn;
  model.edf = best_edf;
  model.gcv = best_aic;  // selection criterion value (AIC for this family)
  model.iterations = best.iterations;
  if (model.shape < kIrregularShape)
    model.warnings.push_back("shape estimate " + std::to_string(model.shape) +
                             " below -0.5: irregular maximum-likelihood regime");
  return model;
}

}  // namespace tailicp
