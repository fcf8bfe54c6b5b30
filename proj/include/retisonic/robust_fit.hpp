#pragma once

// Straight-line regression of y on x: ordinary least squares and a Huber
// M-estimator solved by iteratively reweighted least squares.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "retisonic/core.hpp"

namespace retisonic::anatomy {

/// y = intercept + slope * x
struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  std::vector<double> weights;  // final IRLS weights (all 1 for OLS)
  int iterations = 0;
  bool converged = true;

  double eval(double x) const { return intercept + slope * x; }
  double residual(Vec2 p) const { return p.y - eval(p.x); }
};

struct HuberOptions {
  double delta = 3.0;  // px
  int max_iterations = 20;
  double tolerance = 1e-6;  // on coefficients
};

namespace detail {

inline bool weighted_line(std::span<const Vec2> pts, std::span<const double> w, double& intercept, double& slope) {
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    sw += w[i];
    sx += w[i] * pts[i].x;
    sy += w[i] * pts[i].y;
  }
  if (!(sw > 0.0)) return false;
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double dx = pts[i].x - mx;
    sxx += w[i] * dx * dx;
    sxy += w[i] * dx * (pts[i].y - my);
  }
  if (!(sxx > 1e-12 * sw)) return false;
  slope = sxy / sxx;
  intercept = my - slope * mx;
  return true;
}

}  // namespace detail

inline LineFit ols_fit(std::span<const Vec2> pts) {
  LineFit fit;
  fit.weights.assign(pts.size(), 1.0);
  if (pts.size() < 2 || !detail::weighted_line(pts, fit.weights, fit.intercept, fit.slope))
    throw DegenerateOrientation("least-squares line is undefined for this point set");
  return fit;
}

inline LineFit huber_fit(std::span<const Vec2> pts, const HuberOptions& opts = {}) {
  LineFit fit = ols_fit(pts);
  fit.converged = false;
  for (int it = 0; it < opts.max_iterations; ++it) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double r = std::abs(fit.residual(pts[i]));
      fit.weights[i] = r <= opts.delta ? 1.0 : opts.delta / r;
    }
    double a = fit.intercept, b = fit.slope;
    if (!detail::weighted_line(pts, fit.weights, a, b)) break;
    const double change = std::max(std::abs(a - fit.intercept), std::abs(b - fit.slope));
    fit.intercept = a;
    fit.slope = b;
    fit.iterations = it + 1;
    if (change < opts.tolerance) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

}  // namespace retisonic::anatomy
