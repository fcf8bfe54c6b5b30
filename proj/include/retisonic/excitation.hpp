#pragma once

// Excitation rules: tool-driven pulses on the node nearest the tip,
// deformation pulses from the robust change in local ILM-RPE separation, and
// confidence-dependent onset jitter.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "retisonic/core.hpp"
#include "retisonic/dynamics.hpp"
#include "retisonic/lattice.hpp"
#include "retisonic/spline.hpp"

namespace retisonic::dynamics {

using anatomy::ColumnRange;
using anatomy::LayerCurve;

/// Upper bound of the deformation proxy. Fixed, not configurable.
inline constexpr double kDeformationClamp = 2.0;

struct ExcitationConfig {
  double a0 = 10.0;           // tool amplitude (model force units)
  double a0_def = 0.5;        // deformation amplitude per unit f_ILM
  double v_min = 5.0;         // px/s
  double v_ref = 150.0;       // px/s
  double k_ref = 400.0;
  double crossing_gain = 3.0;
  double f_min = 0.05;        // px
  double jitter_max_ms = 50.0;
  double envelope_ms = 3.0;
  double window_w = 64.0;     // px

  int envelope_samples(double sample_rate = kSampleRate) const {
    return std::max(1, static_cast<int>(std::lround(envelope_ms * 1e-3 * sample_rate)));
  }
  std::int64_t jitter_max_samples(double sample_rate = kSampleRate) const {
    return static_cast<std::int64_t>(std::lround(jitter_max_ms * 1e-3 * sample_rate));
  }
};

inline int nearest_node(const AnchorSnapshot& anchors, Vec2 p) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < anchors.anchors.size(); ++i) {
    const Vec2 d = anchors.anchors[i] - p;
    const double dd = dot(d, d);
    if (dd < best_d) best_d = dd, best = static_cast<int>(i);
  }
  return best;
}

/// g(k) = sqrt(k / k_ref)
inline double stiffness_gain(double k, double k_ref) { return std::sqrt(k / k_ref); }

/// Tool-driven events for one analysis frame. A moving tip (|v| > v_min)
/// excites its nearest node; a label crossing adds one impulse scaled by
/// crossing_gain.
inline std::vector<ExcitationEvent> excite_tool(Vec2 tip, Vec2 tip_velocity, const LatticeModel& model,
                                                const AnchorSnapshot& anchors, bool crossing,
                                                const ExcitationConfig& cfg, std::int64_t onset = 0,
                                                double sample_rate = kSampleRate) {
  std::vector<ExcitationEvent> out;
  const int node = nearest_node(anchors, tip);
  if (node < 0) return out;
  const double speed = norm(tip_velocity);
  const double k_local = model.nodes[static_cast<std::size_t>(node)].k;
  const double amplitude = cfg.a0 * stiffness_gain(k_local, cfg.k_ref) * std::min(1.0, speed / cfg.v_ref);
  const Vec2 dir = speed > 0.0 ? (1.0 / speed) * tip_velocity : Vec2{0.0, 1.0};
  ExcitationEvent ev;
  ev.targets = {{node, 1.0}};
  ev.duration = cfg.envelope_samples(sample_rate);
  ev.onset = onset;
  ev.source = EventSource::Tool;
  ev.direction = dir;
  if (speed > cfg.v_min) {
    ev.amplitude = amplitude;
    out.push_back(ev);
  }
  if (crossing) {
    ev.amplitude = amplitude * cfg.crossing_gain;
    out.push_back(ev);
  }
  return out;
}

// ---- deformation ----

struct SeparationField {
  ColumnRange columns;
  std::vector<double> d;
};

/// d(x) = rpe(x) - ilm(x) over the given columns.
inline SeparationField separation_on(const LayerCurve& ilm, const LayerCurve& rpe, ColumnRange columns) {
  SeparationField f;
  f.columns = columns;
  f.d.reserve(static_cast<std::size_t>(std::max(columns.size(), 0)));
  for (int x = columns.begin; x <= columns.end; ++x) f.d.push_back(rpe.at(x) - ilm.at(x));
  return f;
}

/// Separation over the window [tip_x - w/2, tip_x + w/2], clamped to the ROI
/// columns and to both curve domains. Throws when nothing remains.
inline SeparationField compute_separation(const LayerCurve& ilm, const LayerCurve& rpe, double tip_x, double window_w,
                                          ColumnRange roi_columns) {
  ColumnRange w{static_cast<int>(std::ceil(tip_x - 0.5 * window_w)), static_cast<int>(std::floor(tip_x + 0.5 * window_w))};
  w.begin = std::max({w.begin, roi_columns.begin, ilm.domain.begin, rpe.domain.begin});
  w.end = std::min({w.end, roi_columns.end, ilm.domain.end, rpe.domain.end});
  if (w.end < w.begin) throw InsufficientEvidence("separation window lies outside the curve domain");
  return separation_on(ilm, rpe, w);
}

/// Nearest-rank percentile: the sorted element at rank ceil(p n).
inline double percentile_nearest_rank(std::span<const double> values, double p) {
  if (values.empty()) throw ValidationError("percentile of an empty set");
  std::vector<double> v(values.begin(), values.end());
  const auto n = v.size();
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank - 1), v.end());
  return v[rank - 1];
}

/// f = min(2, max(0, delta)). Infinities clamp; NaN is rejected.
inline double deformation_proxy(double delta_d) {
  if (std::isnan(delta_d)) throw NumericalFault("deformation change is NaN");
  return std::min(kDeformationClamp, std::max(0.0, delta_d));
}

struct DeformationSignal {
  ColumnRange window;
  std::vector<double> d;  // current separation over the window
  double delta_d = 0.0;   // P95 of per-column change
  double f_ilm = 0.0;
};

struct DeformationResult {
  DeformationSignal signal;
  std::optional<ExcitationEvent> event;
};

inline constexpr int kMinDeformationColumns = 8;

/// Robust separation change between two frames on a common window. When the
/// proxy exceeds f_min, every ILM node whose column lies in the window is
/// pushed upward with uniform weights.
inline DeformationResult deformation_excitation(const SeparationField& current, const SeparationField& previous,
                                                const LatticeModel& model, const ExcitationConfig& cfg,
                                                std::int64_t onset = 0, double sample_rate = kSampleRate) {
  if (current.columns.begin != previous.columns.begin || current.columns.end != previous.columns.end ||
      current.d.size() != previous.d.size())
    throw ValidationError("separation fields cover different columns");
  if (current.d.size() < static_cast<std::size_t>(kMinDeformationColumns))
    throw InsufficientEvidence("deformation window narrower than 8 columns");
  std::vector<double> diff(current.d.size());
  for (std::size_t i = 0; i < diff.size(); ++i) {
    diff[i] = current.d[i] - previous.d[i];
    if (!std::isfinite(diff[i])) throw NumericalFault("non-finite separation change");
  }
  DeformationResult r;
  r.signal.window = current.columns;
  r.signal.d = current.d;
  r.signal.delta_d = percentile_nearest_rank(diff, 0.95);
  r.signal.f_ilm = deformation_proxy(r.signal.delta_d);
  if (r.signal.f_ilm > cfg.f_min) {
    std::vector<EventTarget> targets;
    for (std::size_t n = 0; n < model.nodes.size(); ++n) {
      const auto& node = model.nodes[n];
      if (node.label == TissueLabel::Ilm && node.x >= current.columns.begin && node.x <= current.columns.end)
        targets.push_back({static_cast<int>(n), 1.0});
    }
    if (!targets.empty()) {
      for (auto& t : targets) t.weight = 1.0 / static_cast<double>(targets.size());
      ExcitationEvent ev;
      ev.targets = std::move(targets);
      ev.amplitude = cfg.a0_def * r.signal.f_ilm;
      ev.duration = cfg.envelope_samples(sample_rate);
      ev.onset = onset;
      ev.source = EventSource::Deformation;
      ev.direction = {0.0, -1.0};
      r.event = std::move(ev);
    }
  }
  return r;
}

// ---- confidence jitter ----

/// Onset offset uniform on [0, floor(J_max (1 - min(c_ilm, c_rpe)))] samples.
inline std::int64_t jitter_schedule(double c_ilm, double c_rpe, std::mt19937_64& rng, std::int64_t j_max_samples) {
  if (!(c_ilm >= 0.0 && c_ilm <= 1.0 && c_rpe >= 0.0 && c_rpe <= 1.0))
    throw ValidationError("confidence outside [0,1]");
  const double spread = static_cast<double>(j_max_samples) * (1.0 - std::min(c_ilm, c_rpe));
  const auto hi = static_cast<std::int64_t>(std::floor(spread + 1e-9));
  if (hi <= 0) return 0;
  return std::uniform_int_distribution<std::int64_t>(0, hi)(rng);
}

}  // namespace retisonic::dynamics
