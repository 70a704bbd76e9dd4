#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tailicp/errors.hpp"

namespace tailicp {

// Clamped cubic B-spline basis on [lo, hi] with interior knots at empirical
// quantiles of the distinct covariate values. Outside [lo, hi] the basis is
// continued linearly from the boundary.
class BSplineBasis {
 public:
  static constexpr int kOrder = 4;
  static constexpr int kDegree = 3;

  BSplineBasis() = default;

  explicit BSplineBasis(std::vector<double> knots) : knots_(std::move(knots)) {
    if (knots_.size() < 2 * kOrder) throw DomainError("B-spline: knot vector too short");
    if (!std::is_sorted(knots_.begin(), knots_.end())) throw DomainError("B-spline: knots not sorted");
    if (!(hi() > lo())) throw DomainError("B-spline: degenerate knot range");
  }

  static BSplineBasis from_data(std::span<const double> x, int size) {
    if (size < kOrder) throw DomainError("B-spline: basis size must be at least 4");
    std::vector<double> u(x.begin(), x.end());
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    if (u.size() < 2) throw DomainError("B-spline: covariate has fewer than two distinct values");
    const int interior = size - kOrder;
    std::vector<double> knots(kOrder, u.front());
    for (int i = 1; i <= interior; ++i) {
      const double pos = static_cast<double>(i) / (interior + 1) * static_cast<double>(u.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const double frac = pos - static_cast<double>(lo);
      const double v = lo + 1 < u.size() ? u[lo] + frac * (u[lo + 1] - u[lo]) : u.back();
      knots.push_back(v);
    }
    knots.insert(knots.end(), kOrder, u.back());
    return BSplineBasis(std::move(knots));
  }

  int size() const noexcept { return static_cast<int>(knots_.size()) - kOrder; }
  double lo() const noexcept { return knots_[kDegree]; }
  double hi() const noexcept { return knots_[knots_.size() - kOrder]; }
  const std::vector<double>& knots() const noexcept { return knots_; }
  bool inside(double x) const noexcept { return x >= lo() && x <= hi(); }

  // Writes all basis functions at x into out (length size()).
  void eval(double x, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    if (x < lo() || x > hi()) {
      const double b = x < lo() ? lo() : hi();
      std::array<std::array<double, kOrder>, 3> d{};
      const int span = find_span(b);
      derivatives(span, b, 1, d);
      for (int j = 0; j < kOrder; ++j)
        out[static_cast<std::size_t>(span - kDegree + j)] = d[0][j] + (x - b) * d[1][j];
      return;
    }
    std::array<std::array<double, kOrder>, 3> d{};
    const int span = find_span(x);
    derivatives(span, x, 0, d);
    for (int j = 0; j < kOrder; ++j) out[static_cast<std::size_t>(span - kDegree + j)] = d[0][j];
  }

  // Gram matrix of second derivatives, integral B_i''(x) B_j''(x) dx over [lo, hi].
  Eigen::MatrixXd second_derivative_gram() const {
    const int k = size();
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(k, k);
    // B'' is piecewise linear, so two-point Gauss-Legendre is exact.
    const double g = 1.0 / std::sqrt(3.0);
    for (int s = kDegree; s < static_cast<int>(knots_.size()) - kOrder; ++s) {
      const double a = knots_[static_cast<std::size_t>(s)], b = knots_[static_cast<std::size_t>(s) + 1];
      if (!(b > a)) continue;
      for (double node : {-g, g}) {
        const double x = 0.5 * (a + b) + 0.5 * (b - a) * node;
        std::array<std::array<double, kOrder>, 3> d{};
        derivatives(s, x, 2, d);
        for (int i = 0; i < kOrder; ++i)
          for (int j = 0; j < kOrder; ++j)
            G(s - kDegree + i, s - kDegree + j) += 0.5 * (b - a) * d[2][i] * d[2][j];
      }
    }
    return G;
  }

 private:
  int find_span(double x) const {
    const int last = static_cast<int>(knots_.size()) - kOrder - 1;
    if (x >= knots_[static_cast<std::size_t>(last) + 1]) {
      int s = last;
      while (s > kDegree && !(knots_[static_cast<std::size_t>(s) + 1] > knots_[static_cast<std::size_t>(s)])) --s;
      return s;
    }
    const auto it = std::upper_bound(knots_.begin() + kDegree, knots_.begin() + last + 1, x);
    return static_cast<int>(it - knots_.begin()) - 1;
  }

  // Nonzero basis functions and derivatives up to order nd at x in knot span
  // `span` (Piegl & Tiller, algorithm A2.3).
  void derivatives(int span, double x, int nd, std::array<std::array<double, kOrder>, 3>& ders) const {
    const auto& U = knots_;
    std::array<std::array<double, kOrder>, kOrder> ndu{};
    std::array<double, kOrder> left{}, right{};
    ndu[0][0] = 1.0;
    for (int j = 1; j <= kDegree; ++j) {
      left[j] = x - U[static_cast<std::size_t>(span + 1 - j)];
      right[j] = U[static_cast<std::size_t>(span + j)] - x;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        ndu[j][r] = right[r + 1] + left[j - r];
        const double tmp = ndu[r][j - 1] / ndu[j][r];
        ndu[r][j] = saved + right[r + 1] * tmp;
        saved = left[j - r] * tmp;
      }
      ndu[j][j] = saved;
    }
    for (int j = 0; j <= kDegree; ++j) ders[0][j] = ndu[j][kDegree];
    std::array<std::array<double, kOrder>, 2> a{};
    for (int r = 0; r <= kDegree; ++r) {
      int s1 = 0, s2 = 1;
      a[0][0] = 1.0;
      for (int k = 1; k <= nd; ++k) {
        double d = 0.0;
        const int rk = r - k, pk = kDegree - k;
        if (r >= k) {
          a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
          d = a[s2][0] * ndu[rk][pk];
        }
        const int j1 = rk >= -1 ? 1 : -rk;
        const int j2 = (r - 1 <= pk) ? k - 1 : kDegree - r;
        for (int j = j1; j <= j2; ++j) {
          a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
          d += a[s2][j] * ndu[rk + j][pk];
        }
        if (r <= pk) {
          a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
          d += a[s2][k] * ndu[r][pk];
        }
        ders[static_cast<std::size_t>(k)][static_cast<std::size_t>(r)] = d;
        std::swap(s1, s2);
      }
    }
    double f = kDegree;
    for (int k = 1; k <= nd; ++k) {
      for (int j = 0; j <= kDegree; ++j) ders[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] *= f;
      f *= (kDegree - k);
    }
  }

  std::vector<double> knots_;
};

}  // namespace tailicp
