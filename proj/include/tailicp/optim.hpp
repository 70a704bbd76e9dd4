#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>

#include <Eigen/Dense>

namespace tailicp {

struct BfgsOptions {
  int max_iterations = 2000;
  double gradient_tolerance = 1e-6;  // on the max-norm of the gradient
  double value_tolerance = 1e-12;    // relative change over one iteration
  int max_backtracks = 60;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  bool converged = false;
  std::string trace;
};

// Minimises f by BFGS with an Armijo backtracking line search. f may return
// +inf (or NaN) outside its domain; such trial points are treated as failed
// steps and the step is halved.
inline BfgsResult bfgs_minimize(const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>& f,
                                Eigen::VectorXd x, const BfgsOptions& opt = {}) {
  const auto p = x.size();
  BfgsResult r;
  std::ostringstream trace;
  Eigen::VectorXd g(p), gn(p);
  double fx = f(x, &g);
  if (!std::isfinite(fx)) {
    r.x = std::move(x);
    r.value = fx;
    r.trace = "non-finite objective at the starting point\n";
    return r;
  }
  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(p, p);
  bool scaled = false;
  int stalls = 0;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    r.iterations = it;
    if (g.lpNorm<Eigen::Infinity>() <= opt.gradient_tolerance) {
      r.converged = true;
      break;
    }
    Eigen::VectorXd d = -Hinv * g;
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      Hinv.setIdentity();
      d = -g;
      slope = -g.squaredNorm();
    }
    double step = 1.0;
    double fn = std::numeric_limits<double>::infinity();
    Eigen::VectorXd xn;
    int k = 0;
    for (; k < opt.max_backtracks; ++k) {
      xn = x + step * d;
      fn = f(xn, &gn);
      if (std::isfinite(fn) && fn <= fx + 1e-4 * step * slope) break;
      step *= 0.5;
    }
    if (k == opt.max_backtracks) {
      if (Hinv.isIdentity()) {
        trace << "line search failed at iteration " << it << '\n';
        break;
      }
      Hinv.setIdentity();
      continue;
    }
    const Eigen::VectorXd s = xn - x;
    const Eigen::VectorXd yv = gn - g;
    const double sy = s.dot(yv);
    const double change = std::abs(fx - fn);
    x = std::move(xn);
    g = gn;
    const double prev = fx;
    fx = fn;
    trace << "iter " << it << " f " << fx << " |g|inf " << g.lpNorm<Eigen::Infinity>() << '\n';
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (!scaled) {
        Hinv *= sy / yv.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = Hinv * yv;
      Hinv += (rho * rho * yv.dot(Hy) + rho) * s * s.transpose() - rho * (Hy * s.transpose() + s * Hy.transpose());
    }
    stalls = change <= opt.value_tolerance * (std::abs(prev) + 1.0) ? stalls + 1 : 0;
    if (stalls >= 3) {
      r.converged = true;
      break;
    }
  }
  r.x = std::move(x);
  r.value = fx;
  r.gradient = std::move(g);
  r.trace = trace.str();
  return r;
}

}  // namespace tailicp
