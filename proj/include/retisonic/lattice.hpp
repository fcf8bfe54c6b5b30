#pragma once

// Anatomy-anchored mass-spring-damper lattice: tissue labels by weighted
// majority vote, per-label physical parameters, symmetric springs, and anchors
// that follow the layers through fixed relative depth parameters.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "retisonic/anatomy.hpp"
#include "retisonic/core.hpp"
#include "retisonic/ingest.hpp"
#include "retisonic/spline.hpp"

namespace retisonic::lattice {

using anatomy::LayerCurve;
using anatomy::RoiSpec;

struct LabelParams {
  double m = 1.0;
  double k = 1.0;  // base stiffness (model units)
  double d = 0.0;
  int order = 1;   // neighborhood order N
  double k_min = 0.0;
  double k_max = 0.0;
};

/// Per-label mapping from tissue class to (m, k, d, N).
struct ParamTable {
  std::array<LabelParams, kTissueLabelCount> by_label{};

  const LabelParams& operator[](TissueLabel l) const { return by_label[static_cast<std::size_t>(l)]; }
  LabelParams& operator[](TissueLabel l) { return by_label[static_cast<std::size_t>(l)]; }

  static ParamTable defaults() {
    ParamTable t;
    t[TissueLabel::Vitreous] = {1.0, 40.0, 0.8, 1, 20.0, 60.0};
    t[TissueLabel::Ilm] = {1.0, 900.0, 0.1, 2, 450.0, 1350.0};
    t[TissueLabel::Retina] = {1.0, 400.0, 0.3, 1, 200.0, 600.0};
    t[TissueLabel::Rpe] = {1.0, 2000.0, 0.05, 2, 1000.0, 3000.0};
    return t;
  }
};

struct NodeParams {
  double m = 1.0;
  double k = 1.0;
  double d = 0.0;
  int order = 1;

  friend bool operator==(const NodeParams&, const NodeParams&) = default;
};

/// Table lookup; a mean intensity scales stiffness by (0.5 + mean), clamped
/// to the label's [k_min, k_max].
inline NodeParams map_params(TissueLabel label, std::optional<double> mean_intensity,
                             const ParamTable& table = ParamTable::defaults()) {
  const LabelParams& p = table[label];
  NodeParams out{p.m, p.k, p.d, p.order};
  if (mean_intensity) out.k = std::clamp(p.k * (0.5 + *mean_intensity), p.k_min, p.k_max);
  return out;
}

// ---- labels ----

/// Label of one pixel at row `y` given the boundary rows at its column.
inline TissueLabel pixel_label(double y, double ilm, double rpe, double thin_band) {
  const double half = 0.5 * thin_band;
  if (std::abs(y - ilm) <= half) return TissueLabel::Ilm;
  if (std::abs(y - rpe) <= half) return TissueLabel::Rpe;
  if (y < ilm) return TissueLabel::Vitreous;
  if (y < rpe) return TissueLabel::Retina;
  return TissueLabel::Rpe;
}

/// Weighted majority vote over label counts; ILM and RPE votes count w_thin
/// times. Ties go to the deeper label.
inline std::optional<TissueLabel> vote_label(const std::array<double, kTissueLabelCount>& counts, double w_thin) {
  std::optional<TissueLabel> best;
  double best_score = 0.0;
  for (int i = 0; i < kTissueLabelCount; ++i) {
    const auto l = static_cast<TissueLabel>(i);
    const double w = (l == TissueLabel::Ilm || l == TissueLabel::Rpe) ? w_thin : 1.0;
    const double score = w * counts[static_cast<std::size_t>(i)];
    if (score <= 0.0) continue;
    if (!best || score >= best_score) {  // labels visited shallow to deep, so >= prefers deeper
      best = l;
      best_score = score;
    }
  }
  return best;
}

struct GridSize {
  int rows = 12;
  int cols = 16;
};

struct LabelOptions {
  double w_thin = 3.0;
  double thin_band = 3.0;  // px thickness of the ILM and RPE label bands
};

struct NodeSupport {
  TissueLabel label = TissueLabel::Vitreous;
  Vec2 center{};  // rotated frame
  std::optional<double> mean_intensity;
  int votes = 0;  // pixels that voted
};

/// Optional image evidence for the intensity statistics.
struct ImageView {
  const ingest::BScanFrame* image = nullptr;
  FrameRotation rotation;
};

inline std::vector<NodeSupport> assign_labels(const RoiSpec& roi, GridSize grid, const LayerCurve& ilm,
                                              const LayerCurve& rpe, const LabelOptions& opts = {},
                                              ImageView img = {}) {
  if (grid.rows < 4 || grid.cols < 4) throw ConfigError("lattice grid must be at least 4x4");
  const double cw = roi.width() / grid.cols, ch = roi.height() / grid.rows;
  std::vector<NodeSupport> nodes(static_cast<std::size_t>(grid.rows * grid.cols));
  for (int i = 0; i < grid.rows; ++i) {
    for (int j = 0; j < grid.cols; ++j) {
      const double x0 = roi.x_min + j * cw, x1 = x0 + cw;
      const double y0 = roi.y_min + i * ch, y1 = y0 + ch;
      NodeSupport& node = nodes[static_cast<std::size_t>(i * grid.cols + j)];
      node.center = {0.5 * (x0 + x1), 0.5 * (y0 + y1)};
      std::array<double, kTissueLabelCount> counts{};
      double intensity_sum = 0.0;
      int intensity_n = 0;
      for (int px = static_cast<int>(std::ceil(x0)); px < x1; ++px) {
        const bool covered = ilm.domain.contains(px) && rpe.domain.contains(px);
        const double yi = covered ? ilm.at(px) : 0.0, yr = covered ? rpe.at(px) : 0.0;
        for (int py = static_cast<int>(std::ceil(y0)); py < y1; ++py) {
          if (covered) {
            counts[static_cast<std::size_t>(pixel_label(py, yi, yr, opts.thin_band))] += 1.0;
            ++node.votes;
          }
          if (img.image) {
            const Vec2 q = img.rotation.to_image({static_cast<double>(px), static_cast<double>(py)});
            const long qx = std::lround(q.x), qy = std::lround(q.y);
            if (qx >= 0 && qx < img.image->width && qy >= 0 && qy < img.image->height) {
              intensity_sum += img.image->at(static_cast<int>(qy), static_cast<int>(qx));
              ++intensity_n;
            }
          }
        }
      }
      if (auto l = vote_label(counts, opts.w_thin)) node.label = *l;
      if (intensity_n > 0) node.mean_intensity = intensity_sum / intensity_n;
    }
  }
  // Supports with no coverage inherit from the nearest voting node in their column.
  for (int j = 0; j < grid.cols; ++j) {
    for (int i = 0; i < grid.rows; ++i) {
      NodeSupport& node = nodes[static_cast<std::size_t>(i * grid.cols + j)];
      if (node.votes > 0) continue;
      for (int dist = 1; dist < grid.rows; ++dist) {
        const int cand[2] = {i - dist, i + dist};
        bool found = false;
        for (int r : cand) {
          if (r < 0 || r >= grid.rows) continue;
          const auto& other = nodes[static_cast<std::size_t>(r * grid.cols + j)];
          if (other.votes > 0) {
            node.label = other.label;
            found = true;
            break;
          }
        }
        if (found) break;
      }
    }
  }
  return nodes;
}

// ---- lattice model ----

struct AnchorNode {
  int row = 0;
  int col = 0;
  TissueLabel label = TissueLabel::Vitreous;
  double x = 0.0;  // lateral column, rotated frame
  std::optional<double> rho;    // normalized depth in [0,1] (ILM, retina, RPE)
  std::optional<double> delta;  // signed offset to the nearest boundary (px)
  double m = 1.0;
  double k = 1.0;
  double d = 0.0;
  int order = 1;
  Vec2 rest{};
  std::optional<double> mean_intensity;
};

struct Spring {
  int a = 0;
  int b = 0;
  double k = 0.0;
  double d = 0.0;
  double rest_length = 0.0;
};

/// Maps model units to audio-rate coefficients. `stiffness_scale` is chosen
/// so that a node of stiffness `k_ref` tethered only by its anchor rings at
/// `base_frequency_hz`.
struct Calibration {
  double anchor_coupling = 0.25;  // c_anchor
  double base_frequency_hz = 150.0;
  double k_ref = 400.0;
  double damping_scale = 50.0;

  double stiffness_scale() const {
    const double w = 2.0 * kPi * base_frequency_hz;
    return w * w / (anchor_coupling * k_ref);
  }
};

struct LatticeModel {
  int rows = 0;
  int cols = 0;
  std::vector<AnchorNode> nodes;
  std::vector<Spring> springs;
  int order = 0;  // 0: per-node orders (diagonals where both ends have N = 2)
  Calibration calibration;
  RoiSpec roi;
  int clamped_nodes = 0;  // nodes whose stiffness hit the stability clamp

  int index(int i, int j) const { return i * cols + j; }
  std::size_t size() const { return nodes.size(); }
};

/// Springs over the N-order neighborhood. `order` 1 or 2 applies to every
/// node; 0 adds a diagonal only when both endpoints have order 2. Stiffness
/// and damping are endpoint means; rest length is the anchor distance.
inline std::vector<Spring> build_springs(std::span<const AnchorNode> nodes, int rows, int cols, int order) {
  if (order < 0 || order > 2) throw ConfigError("neighborhood order must be 0 (per node), 1 or 2");
  std::vector<Spring> springs;
  const auto add = [&](int a, int b) {
    const AnchorNode& na = nodes[static_cast<std::size_t>(a)];
    const AnchorNode& nb = nodes[static_cast<std::size_t>(b)];
    springs.push_back({a, b, 0.5 * (na.k + nb.k), 0.5 * (na.d + nb.d), norm(nb.rest - na.rest)});
  };
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const int a = i * cols + j;
      if (j + 1 < cols) add(a, a + 1);
      if (i + 1 < rows) add(a, a + cols);
      if (i + 1 < rows) {
        const auto diagonal = [&](int b) {
          const bool on = order == 2 || (order == 0 && nodes[static_cast<std::size_t>(a)].order >= 2 &&
                                         nodes[static_cast<std::size_t>(b)].order >= 2);
          if (on) add(a, b);
        };
        if (j + 1 < cols) diagonal(a + cols + 1);
        if (j > 0) diagonal(a + cols - 1);
      }
    }
  }
  return springs;
}

/// Anchor positions and spring rest lengths, published to the audio side as
/// an immutable snapshot.
struct AnchorSnapshot {
  std::vector<Vec2> anchors;
  std::vector<double> rest_lengths;
  std::uint64_t sequence = 0;
};

inline double anchor_y(const AnchorNode& n, double ilm, double rpe) {
  if (n.rho) return ilm + *n.rho * (rpe - ilm);
  const double delta = n.delta.value_or(0.0);
  return delta < 0.0 ? ilm + delta : rpe + delta;
}

struct AnchorUpdate {
  bool accepted = true;
  std::optional<int> bad_column;
  std::string warning;
};

/// Recomputes anchors from the current curves. The relative parameters are
/// read, never written. On an inverted column the update is rejected and the
/// snapshot left untouched.
inline AnchorUpdate compute_anchors(const LatticeModel& model, const LayerCurve& ilm, const LayerCurve& rpe,
                                    AnchorSnapshot& snapshot) {
  AnchorUpdate result;
  std::vector<Vec2> anchors(model.nodes.size());
  for (std::size_t n = 0; n < model.nodes.size(); ++n) {
    const AnchorNode& node = model.nodes[n];
    const double yi = ilm.at(node.x), yr = rpe.at(node.x);
    if (!(yr >= yi) || !std::isfinite(yi) || !std::isfinite(yr)) {
      result.accepted = false;
      result.bad_column = static_cast<int>(std::lround(node.x));
      result.warning = "rpe above ilm at column " + std::to_string(*result.bad_column) + "; anchors retained";
      return result;
    }
    anchors[n] = {node.x, anchor_y(node, yi, yr)};
  }
  snapshot.anchors = std::move(anchors);
  snapshot.rest_lengths.resize(model.springs.size());
  for (std::size_t s = 0; s < model.springs.size(); ++s) {
    const Spring& sp = model.springs[s];
    snapshot.rest_lengths[s] =
        norm(snapshot.anchors[static_cast<std::size_t>(sp.b)] - snapshot.anchors[static_cast<std::size_t>(sp.a)]);
  }
  ++snapshot.sequence;
  return result;
}

/// In-place variant: moves rest positions and spring rest lengths.
inline AnchorUpdate update_anchors(LatticeModel& model, const LayerCurve& ilm, const LayerCurve& rpe) {
  AnchorSnapshot snap;
  AnchorUpdate r = compute_anchors(model, ilm, rpe, snap);
  if (!r.accepted) return r;
  for (std::size_t n = 0; n < model.nodes.size(); ++n) model.nodes[n].rest = snap.anchors[n];
  for (std::size_t s = 0; s < model.springs.size(); ++s) model.springs[s].rest_length = snap.rest_lengths[s];
  return r;
}

inline AnchorSnapshot snapshot_of(const LatticeModel& model) {
  AnchorSnapshot snap;
  snap.anchors.reserve(model.nodes.size());
  for (const auto& n : model.nodes) snap.anchors.push_back(n.rest);
  snap.rest_lengths.reserve(model.springs.size());
  for (const auto& s : model.springs) snap.rest_lengths.push_back(s.rest_length);
  return snap;
}

struct LatticeOptions {
  GridSize grid;
  LabelOptions labels;
  ParamTable table = ParamTable::defaults();
  Calibration calibration;
  int order = 0;
  double sample_rate = kSampleRate;
};

/// Largest model-unit stiffness for which every spring satisfies
/// sqrt(2 k_ab / m_min) * dt <= 0.5 after calibration.
inline double stiffness_cap(const Calibration& cal, double min_mass, double sample_rate) {
  const double dt = 1.0 / sample_rate;
  const double omega_max = 0.5 / dt;
  return omega_max * omega_max * min_mass / 2.0 / cal.stiffness_scale();
}

/// Builds the lattice at initialization from the rotated-frame ROI and curves.
inline LatticeModel build_lattice(const RoiSpec& roi, const LayerCurve& ilm, const LayerCurve& rpe,
                                  const LatticeOptions& opts = {}, ImageView img = {}) {
  const auto supports = assign_labels(roi, opts.grid, ilm, rpe, opts.labels, img);
  LatticeModel model;
  model.rows = opts.grid.rows;
  model.cols = opts.grid.cols;
  model.order = opts.order;
  model.calibration = opts.calibration;
  model.roi = roi;
  model.nodes.resize(supports.size());

  double min_mass = std::numeric_limits<double>::infinity();
  for (const auto& s : supports) min_mass = std::min(min_mass, opts.table[s.label].m);
  const double cap = stiffness_cap(opts.calibration, min_mass, opts.sample_rate);
  const double cell_h = roi.height() / opts.grid.rows;

  for (std::size_t n = 0; n < supports.size(); ++n) {
    const NodeSupport& s = supports[n];
    AnchorNode& node = model.nodes[n];
    node.row = static_cast<int>(n) / opts.grid.cols;
    node.col = static_cast<int>(n) % opts.grid.cols;
    node.label = s.label;
    node.x = s.center.x;
    node.mean_intensity = s.mean_intensity;
    const NodeParams p = map_params(s.label, s.mean_intensity, opts.table);
    if (!(p.m > 0.0) || !(p.k > 0.0) || !(p.d >= 0.0)) throw ConfigError("parameter table yields m<=0, k<=0 or d<0");
    node.m = p.m;
    node.k = p.k;
    node.d = p.d;
    node.order = p.order;
    if (node.k > cap) {
      node.k = cap;
      ++model.clamped_nodes;
    }
    const double yi = ilm.at(node.x), yr = rpe.at(node.x);
    switch (s.label) {
      case TissueLabel::Ilm: node.rho = 0.0; break;
      case TissueLabel::Rpe:
        if (s.center.y > yr + 0.5 * cell_h) node.delta = s.center.y - yr;
        else node.rho = 1.0;
        break;
      case TissueLabel::Retina:
        node.rho = yr > yi ? std::clamp((s.center.y - yi) / (yr - yi), 0.0, 1.0) : 0.5;
        break;
      case TissueLabel::Vitreous: node.delta = std::min(s.center.y - yi, -1.0); break;
    }
    node.rest = {node.x, anchor_y(node, yi, yr)};
  }
  model.springs = build_springs(model.nodes, model.rows, model.cols, model.order);
  return model;
}

}  // namespace retisonic::lattice
