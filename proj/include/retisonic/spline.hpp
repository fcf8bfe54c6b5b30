#pragma once

// Confidence-weighted smoothing of layer boundaries with a penalized cubic
// B-spline: minimize sum_i c_i (y(x_i) - y_i)^2 + lambda * integral(y'')^2.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "retisonic/core.hpp"

namespace retisonic::anatomy {

struct LayerSample {
  double x = 0.0;
  double y = 0.0;
  double conf = 0.0;
};

/// Inclusive integer column range.
struct ColumnRange {
  int begin = 0;
  int end = 0;

  int size() const { return end - begin + 1; }
  bool contains(double x) const { return x >= begin && x <= end; }
};

/// A layer boundary defined on every column of its domain.
struct LayerCurve {
  ColumnRange domain;
  std::vector<double> y;     // one value per domain column
  std::vector<double> conf;  // per-column evidence confidence, 0 in gaps
  double lambda = 0.0;

  bool empty() const { return y.empty(); }
  double at_column(int x) const { return y[static_cast<std::size_t>(x - domain.begin)]; }
  double conf_at_column(int x) const { return conf[static_cast<std::size_t>(x - domain.begin)]; }

  /// Linear interpolation between columns; clamped at the domain edges.
  double at(double x) const {
    const double xc = std::clamp(x, static_cast<double>(domain.begin), static_cast<double>(domain.end));
    const double u = xc - domain.begin;
    const auto i0 = static_cast<std::size_t>(std::floor(u));
    const auto i1 = std::min(i0 + 1, y.size() - 1);
    const double f = u - static_cast<double>(i0);
    return y[i0] + f * (y[i1] - y[i0]);
  }
};

struct SplineOptions {
  int knot_spacing = 8;
  double conf_threshold = 0.3;  // samples below this are suppressed
};

namespace detail {

/// Symmetric positive-definite band matrix with half-bandwidth 3, stored as
/// lower band rows: band[i][k] = A(i, i - k).
class Band3 {
 public:
  static constexpr int kWidth = 3;

  explicit Band3(std::size_t n) : n_(n), a_(n) { for (auto& r : a_) r.fill(0.0); }

  std::size_t size() const { return n_; }
  double& at(std::size_t i, std::size_t j) { return a_[i][i - j]; }  // requires i >= j, i - j <= 3

  /// In-place Cholesky; throws InsufficientEvidence on a non-positive pivot.
  void factor() {
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n_; ++i) max_diag = std::max(max_diag, a_[i][0]);
    const double tol = 1e-13 * std::max(max_diag, 1e-300);
    for (std::size_t j = 0; j < n_; ++j) {
      double s = a_[j][0];
      for (std::size_t k = (j >= kWidth ? j - kWidth : 0); k < j; ++k) s -= sq(a_[j][j - k]);
      if (!(s > tol)) throw InsufficientEvidence("spline system is rank-deficient (too little evidence)");
      const double ljj = std::sqrt(s);
      a_[j][0] = ljj;
      for (std::size_t i = j + 1; i < std::min(n_, j + kWidth + 1); ++i) {
        double v = a_[i][i - j];
        for (std::size_t k = (i >= kWidth ? i - kWidth : 0); k < j; ++k) v -= a_[i][i - k] * a_[j][j - k];
        a_[i][i - j] = v / ljj;
      }
    }
  }

  void solve(std::vector<double>& b) const {
    for (std::size_t i = 0; i < n_; ++i) {
      double v = b[i];
      for (std::size_t k = (i >= kWidth ? i - kWidth : 0); k < i; ++k) v -= a_[i][i - k] * b[k];
      b[i] = v / a_[i][0];
    }
    for (std::size_t ii = n_; ii-- > 0;) {
      double v = b[ii];
      for (std::size_t k = ii + 1; k < std::min(n_, ii + kWidth + 1); ++k) v -= a_[k][k - ii] * b[k];
      b[ii] = v / a_[ii][0];
    }
  }

 private:
  static double sq(double v) { return v * v; }
  std::size_t n_;
  std::vector<std::array<double, kWidth + 1>> a_;
};

/// Uniform cubic B-spline basis over [x0, x0 + h * intervals].
struct UniformCubicBasis {
  double x0 = 0.0;
  double h = 1.0;
  int intervals = 1;

  int size() const { return intervals + 3; }

  /// First coefficient index and the four basis weights at x. Outside the
  /// knot range the boundary polynomial is extended.
  std::pair<int, std::array<double, 4>> eval(double x) const {
    const double u = (x - x0) / h;
    const int i = std::clamp(static_cast<int>(std::floor(u)), 0, intervals - 1);
    const double t = u - i, s = 1.0 - t;
    return {i, {s * s * s / 6.0, (3.0 * t * t * t - 6.0 * t * t + 4.0) / 6.0,
                (-3.0 * t * t * t + 3.0 * t * t + 3.0 * t + 1.0) / 6.0, t * t * t / 6.0}};
  }

  /// Exact integral over one interval of B_a'' B_b'' (the four local basis
  /// second derivatives are linear in t, so Simpson's rule is exact).
  static std::array<std::array<double, 4>, 4> local_penalty(double h) {
    const auto d2 = [](double t) { return std::array<double, 4>{1.0 - t, 3.0 * t - 2.0, -3.0 * t + 1.0, t}; };
    const auto p0 = d2(0.0), pm = d2(0.5), p1 = d2(1.0);
    std::array<std::array<double, 4>, 4> m{};
    const double scale = 1.0 / (h * h * h);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        m[a][b] = scale * (p0[a] * p0[b] + 4.0 * pm[a] * pm[b] + p1[a] * p1[b]) / 6.0;
    return m;
  }
};

}  // namespace detail

/// Fits a layer boundary. Samples with conf below the suppression threshold
/// (in particular conf = 0) never enter the system. Throws InsufficientEvidence
/// when fewer than four usable samples remain.
inline LayerCurve fit_layer_spline(std::span<const LayerSample> samples, double lambda, ColumnRange domain,
                                   const SplineOptions& opts = {}) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("spline lambda must be finite and >= 0");
  if (domain.end < domain.begin) throw ValidationError("empty spline domain");
  if (opts.knot_spacing < 1) throw ValidationError("knot spacing must be >= 1");

  std::vector<LayerSample> usable;
  usable.reserve(samples.size());
  for (const auto& s : samples)
    if (s.conf >= opts.conf_threshold && s.conf > 0.0 && std::isfinite(s.x) && std::isfinite(s.y))
      usable.push_back(s);
  if (usable.size() < 4)
    throw InsufficientEvidence("need at least 4 usable samples, have " + std::to_string(usable.size()));

  detail::UniformCubicBasis basis;
  basis.x0 = domain.begin;
  basis.h = opts.knot_spacing;
  basis.intervals = std::max(1, (domain.end - domain.begin + opts.knot_spacing - 1) / opts.knot_spacing);
  const auto n = static_cast<std::size_t>(basis.size());

  detail::Band3 system(n);
  std::vector<double> rhs(n, 0.0);
  for (const auto& s : usable) {
    const auto [i0, b] = basis.eval(s.x);
    for (int a = 0; a < 4; ++a) {
      rhs[static_cast<std::size_t>(i0 + a)] += s.conf * b[a] * s.y;
      for (int c = 0; c <= a; ++c) system.at(static_cast<std::size_t>(i0 + a), static_cast<std::size_t>(i0 + c)) += s.conf * b[a] * b[c];
    }
  }
  if (lambda > 0.0) {
    const auto local = detail::UniformCubicBasis::local_penalty(basis.h);
    for (int iv = 0; iv < basis.intervals; ++iv)
      for (int a = 0; a < 4; ++a)
        for (int c = 0; c <= a; ++c)
          system.at(static_cast<std::size_t>(iv + a), static_cast<std::size_t>(iv + c)) += lambda * local[a][c];
  }
  system.factor();
  system.solve(rhs);

  LayerCurve curve;
  curve.domain = domain;
  curve.lambda = lambda;
  const auto cols = static_cast<std::size_t>(domain.size());
  curve.y.resize(cols);
  curve.conf.assign(cols, 0.0);
  for (std::size_t k = 0; k < cols; ++k) {
    const auto [i0, b] = basis.eval(domain.begin + static_cast<double>(k));
    double v = 0.0;
    for (int a = 0; a < 4; ++a) v += b[a] * rhs[static_cast<std::size_t>(i0 + a)];
    curve.y[k] = v;
  }
  for (const auto& s : usable) {
    const long col = std::lround(s.x);
    if (col < domain.begin || col > domain.end) continue;
    double& c = curve.conf[static_cast<std::size_t>(col - domain.begin)];
    c = std::max(c, std::min(s.conf, 1.0));
  }
  return curve;
}

}  // namespace retisonic::anatomy
