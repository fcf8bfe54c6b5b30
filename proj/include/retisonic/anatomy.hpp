#pragma once

// Geometry derived from one segmentation frame: tissue rotation, needle line
// and tip, and the tool-aligned region of interest. Everything downstream of
// the rotation works in the tissue-aligned ("rotated") frame.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "retisonic/core.hpp"
#include "retisonic/ingest.hpp"
#include "retisonic/robust_fit.hpp"
#include "retisonic/spline.hpp"

namespace retisonic::anatomy {

inline constexpr double kMaxTissueRotationDeg = 45.0;

// ---- tissue rotation ----

/// Principal-axis angle (degrees, atan(dy/dx) convention) of a Huber-weighted
/// line through `pts`, clamped to +/-45 degrees.
inline double estimate_rotation_from_points(std::span<const Vec2> pts, const HuberOptions& opts = {}) {
  if (pts.size() < 2) throw InsufficientEvidence("rotation needs at least two boundary points");
  const LineFit fit = huber_fit(pts, opts);
  double sw = 0.0, mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    sw += fit.weights[i];
    mx += fit.weights[i] * pts[i].x;
    my += fit.weights[i] * pts[i].y;
  }
  mx /= sw;
  my /= sw;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double dx = pts[i].x - mx, dy = pts[i].y - my;
    sxx += fit.weights[i] * dx * dx;
    syy += fit.weights[i] * dy * dy;
    sxy += fit.weights[i] * dx * dy;
  }
  const double theta = rad2deg(0.5 * std::atan2(2.0 * sxy, sxx - syy));
  return std::clamp(theta, -kMaxTissueRotationDeg, kMaxTissueRotationDeg);
}

/// Dominant retinal orientation from the ILM evidence of one frame.
inline double estimate_tissue_rotation(const ingest::SegFrame& seg, double conf_threshold = 0.3,
                                       const HuberOptions& opts = {}) {
  std::vector<Vec2> pts;
  pts.reserve(seg.ilm.size());
  for (std::size_t x = 0; x < seg.ilm.size(); ++x)
    if (seg.ilm[x] && seg.conf_ilm[x] >= conf_threshold) pts.push_back({static_cast<double>(x), *seg.ilm[x]});
  if (pts.size() * 4 < static_cast<std::size_t>(seg.width))
    throw InsufficientEvidence("ILM defined on fewer than 25% of columns");
  return estimate_rotation_from_points(pts, opts);
}

// ---- needle ----

struct NeedleEstimate {
  Vec2 point{};      // on the line
  Vec2 direction{};  // unit, pointing toward the retina (non-negative axial component)
  Vec2 tip{};
  double conf = 0.0;  // inlier fraction
  LineFit line;

  /// Signed distance along the direction from `point`.
  double along(Vec2 p) const { return dot(p - point, direction); }
  Vec2 project(Vec2 p) const { return point + along(p) * direction; }
};

struct FrameBounds {
  double width = 0.0;
  double height = 0.0;
};

inline constexpr std::size_t kMinNeedlePixels = 10;
inline constexpr double kMinNeedleLateralExtent = 5.0;

inline NeedleEstimate fit_needle_line(std::span<const Vec2> pixels, const HuberOptions& opts = {},
                                      std::optional<FrameBounds> bounds = std::nullopt) {
  if (pixels.size() < kMinNeedlePixels)
    throw InsufficientEvidence("needle fit needs at least 10 pixels, have " + std::to_string(pixels.size()));
  const auto [lo, hi] = std::minmax_element(pixels.begin(), pixels.end(),
                                            [](Vec2 a, Vec2 b) { return a.x < b.x; });
  if (hi->x - lo->x < kMinNeedleLateralExtent)
    throw DegenerateOrientation("needle pixels span fewer than 5 columns (near-vertical)");

  NeedleEstimate est;
  est.line = huber_fit(pixels, opts);
  const double n = std::hypot(1.0, est.line.slope);
  est.direction = Vec2{1.0 / n, est.line.slope / n};
  if (est.direction.y < 0.0) est.direction = -1.0 * est.direction;
  double mean_x = 0.0;
  std::size_t inliers = 0;
  for (Vec2 p : pixels) {
    mean_x += p.x;
    if (std::abs(est.line.residual(p)) <= opts.delta) ++inliers;
  }
  mean_x /= static_cast<double>(pixels.size());
  est.point = Vec2{mean_x, est.line.eval(mean_x)};
  est.conf = static_cast<double>(inliers) / static_cast<double>(pixels.size());

  const Vec2 deepest = *std::max_element(pixels.begin(), pixels.end(),
                                         [&](Vec2 a, Vec2 b) { return est.along(a) < est.along(b); });
  est.tip = est.project(deepest);
  if (bounds) {
    est.tip.x = std::clamp(est.tip.x, 0.0, bounds->width - 1.0);
    est.tip.y = std::clamp(est.tip.y, 0.0, bounds->height - 1.0);
  }
  return est;
}

/// Exponential moving average of the projected tip. Lives in the per-session
/// analysis context.
class TipTracker {
 public:
  explicit TipTracker(double alpha = 0.6) : alpha_(alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("tip EMA alpha must be in (0, 1]");
  }

  Vec2 update(Vec2 raw) {
    smoothed_ = smoothed_ ? alpha_ * raw + (1.0 - alpha_) * *smoothed_ : raw;
    return *smoothed_;
  }
  std::optional<Vec2> current() const { return smoothed_; }
  void reset() { smoothed_.reset(); }

 private:
  double alpha_;
  std::optional<Vec2> smoothed_;
};

/// Deepest needle evidence (pixels and the segmenter's tip, if any) projected
/// onto the fitted line, then smoothed.
inline Vec2 needle_tip(const NeedleEstimate& est, std::span<const Vec2> pixels, std::optional<Vec2> seg_tip,
                       TipTracker& tracker) {
  double best = -std::numeric_limits<double>::infinity();
  Vec2 deepest = est.tip;
  for (Vec2 p : pixels)
    if (est.along(p) > best) best = est.along(p), deepest = p;
  if (seg_tip && est.along(*seg_tip) > best) deepest = *seg_tip;
  return tracker.update(est.project(deepest));
}

// ---- region of interest ----

enum class RoiProvenance { DirectIntersection, NeighborhoodSearch, TrajectoryOnly };

constexpr const char* to_string(RoiProvenance p) {
  switch (p) {
    case RoiProvenance::DirectIntersection: return "direct-intersection";
    case RoiProvenance::NeighborhoodSearch: return "neighborhood-search";
    case RoiProvenance::TrajectoryOnly: return "trajectory-only";
  }
  return "?";
}

struct RoiSpec {
  double theta_deg = 0.0;
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;  // rotated frame
  Vec2 center{};
  RoiProvenance provenance = RoiProvenance::TrajectoryOnly;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
};

struct RoiOptions {
  double width = 256.0;
  double height = 128.0;
  double search_radius = 50.0;
  double vitreous_fraction = 0.2;
  double intersection_tolerance = 2.0;  // px past the tip still counted as reached
  bool include_sub_rpe = false;         // keep rows below the deepest RPE point
};

namespace detail {

/// First crossing of the line with the curve, scanning forward along the
/// direction starting at `s_begin`. Returns the arc parameter.
inline std::optional<double> line_curve_crossing(const NeedleEstimate& line, const LayerCurve& curve,
                                                 double s_begin, double s_end) {
  const auto g = [&](double s) {
    const Vec2 p = line.point + s * line.direction;
    return p.y - curve.at(p.x);
  };
  const auto inside = [&](double s) { return curve.domain.contains((line.point + s * line.direction).x); };
  double prev_s = s_begin;
  double prev_g = g(prev_s);
  if (inside(prev_s) && prev_g >= 0.0) return prev_s;
  for (double s = s_begin + 0.5; s <= s_end; s += 0.5) {
    const double gs = g(s);
    if (inside(s) && inside(prev_s) && prev_g < 0.0 && gs >= 0.0) {
      double a = prev_s, b = s;
      for (int it = 0; it < 60; ++it) {
        const double m = 0.5 * (a + b);
        (g(m) < 0.0 ? a : b) = m;
      }
      return 0.5 * (a + b);
    }
    prev_s = s;
    prev_g = gs;
  }
  return std::nullopt;
}

}  // namespace detail

/// Tool-aligned ROI in the rotated frame. All inputs are already rotated.
/// Fallback chain: direct intersection of the needle with the ILM, then the
/// needle pixel nearest the ILM within the search radius, then the
/// extrapolated trajectory.
inline RoiSpec extract_roi(const LayerCurve& ilm, const LayerCurve* rpe, double theta_deg,
                           const NeedleEstimate* line, std::span<const Vec2> needle_pixels, FrameBounds frame,
                           const RoiOptions& opts = {}) {
  if (ilm.empty()) throw InsufficientEvidence("ROI extraction needs an ILM curve");
  if (!(opts.width > 0.0 && opts.height > 0.0)) throw ConfigError("ROI size must be positive");

  RoiSpec roi;
  roi.theta_deg = theta_deg;
  const double mid_x = 0.5 * (ilm.domain.begin + ilm.domain.end);
  roi.center = {mid_x, ilm.at(mid_x)};
  roi.provenance = RoiProvenance::TrajectoryOnly;

  if (line) {
    double s_back = line->along(line->tip);
    for (Vec2 p : needle_pixels) s_back = std::min(s_back, line->along(p));
    const double s_tip = line->along(line->tip);
    const double reach = 2.0 * (frame.width + frame.height);
    const auto crossing = detail::line_curve_crossing(*line, ilm, s_back, s_tip + reach);

    std::optional<Vec2> nearest;
    double nearest_dist = std::numeric_limits<double>::infinity();
    for (Vec2 p : needle_pixels) {
      if (!ilm.domain.contains(p.x)) continue;
      const double d = std::abs(p.y - ilm.at(p.x));
      if (d < nearest_dist) nearest_dist = d, nearest = p;
    }

    if (crossing && *crossing <= s_tip + opts.intersection_tolerance) {
      roi.center = line->point + *crossing * line->direction;
      roi.provenance = RoiProvenance::DirectIntersection;
    } else if (nearest && nearest_dist <= opts.search_radius) {
      roi.center = *nearest;
      roi.provenance = RoiProvenance::NeighborhoodSearch;
    } else if (crossing) {
      roi.center = line->point + *crossing * line->direction;
    } else {
      roi.center = {line->tip.x, ilm.at(line->tip.x)};
    }
  }

  const double half_w = 0.5 * opts.width;
  roi.x_min = std::max(0.0, roi.center.x - half_w);
  roi.x_max = std::min(frame.width - 1.0, roi.center.x + half_w);
  if (roi.x_max - roi.x_min < 1.0) throw InsufficientEvidence("ROI collapses at the frame edge");

  double top_ilm = std::numeric_limits<double>::infinity();
  double bottom_rpe = -std::numeric_limits<double>::infinity();
  for (int x = static_cast<int>(std::ceil(roi.x_min)); x <= static_cast<int>(std::floor(roi.x_max)); ++x) {
    top_ilm = std::min(top_ilm, ilm.at(x));
    if (rpe && !rpe->empty()) bottom_rpe = std::max(bottom_rpe, rpe->at(x));
  }
  roi.y_min = top_ilm - opts.vitreous_fraction * opts.height;
  roi.y_max = roi.y_min + opts.height;
  if (!opts.include_sub_rpe && std::isfinite(bottom_rpe)) roi.y_max = std::min(roi.y_max, bottom_rpe + 2.0);
  roi.y_min = std::max(0.0, roi.y_min);
  roi.y_max = std::min(frame.height - 1.0, roi.y_max);
  if (roi.y_max - roi.y_min < 1.0) throw InsufficientEvidence("ROI collapses vertically");
  return roi;
}

// ---- frame-level helpers ----

/// Layer samples of one boundary, mapped into the rotated frame.
inline std::vector<LayerSample> rotated_layer_samples(const std::vector<std::optional<double>>& ys,
                                                      const std::vector<double>& conf, const FrameRotation& rot) {
  std::vector<LayerSample> out;
  out.reserve(ys.size());
  for (std::size_t x = 0; x < ys.size(); ++x) {
    if (!ys[x]) continue;
    const Vec2 p = rot.to_rotated({static_cast<double>(x), *ys[x]});
    out.push_back({p.x, p.y, conf[x]});
  }
  return out;
}

/// Column range covered by the rotated image of the frame's lateral extent.
inline ColumnRange rotated_domain(int width, int height, const FrameRotation& rot) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  // The boundary rows sit well inside the frame; the horizontal midline is representative.
  for (double x : {0.0, width - 1.0}) {
    const double px = rot.to_rotated({x, 0.5 * (height - 1)}).x;
    lo = std::min(lo, px);
    hi = std::max(hi, px);
  }
  return {static_cast<int>(std::ceil(lo)), static_cast<int>(std::floor(hi))};
}

}  // namespace retisonic::anatomy
