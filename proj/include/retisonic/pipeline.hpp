#pragma once

// Analysis side (segmentation frame -> anchors, events, zone) and audio side
// (lattice integration or baseline tones -> samples). The two communicate only
// through FrameUpdate messages, applied at audio block boundaries.

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "retisonic/anatomy.hpp"
#include "retisonic/baseline.hpp"
#include "retisonic/config.hpp"
#include "retisonic/dynamics.hpp"
#include "retisonic/excitation.hpp"
#include "retisonic/lattice.hpp"
#include "retisonic/render.hpp"

namespace retisonic::runtime {

using anatomy::LayerCurve;
using dynamics::ExcitationEvent;

struct StageTimings {
  double ingest = 0.0;
  double spline = 0.0;
  double geometry = 0.0;
  double lattice = 0.0;
  double excitation = 0.0;

  double analysis() const { return spline + geometry + lattice + excitation; }
  double total() const { return ingest + analysis(); }
};

struct LoggedEvent {
  std::size_t frame = 0;
  double t = 0.0;
  std::string source;  // tool | deformation
  std::string label;
  double value = 0.0;
};

struct FrameReport {
  std::size_t frame = 0;
  double t = 0.0;
  StageTimings ms;
  std::vector<LoggedEvent> events;
  double conf_ilm = 0.0;
  double conf_rpe = 0.0;
  double f_ilm = 0.0;
  std::optional<Vec2> tip;  // rotated frame
  std::optional<baseline::Zone> zone;
  bool overrun = false;
  std::string warning;
};

/// Everything the audio side needs once a lattice exists.
struct ModelInit {
  dynamics::PhysicsCoefficients coefficients;
  std::vector<double> pickup_weights;
  lattice::AnchorSnapshot rest;
};

/// Analysis -> audio message. Event onsets are relative to the block
/// boundary at which the update is applied.
struct FrameUpdate {
  std::uint64_t ring_seq = 0;
  std::uint32_t marker = 0;  // latest client pose marker (live mode)
  std::size_t frame = 0;
  std::shared_ptr<const ModelInit> init;  // set when the lattice was (re)built
  lattice::AnchorSnapshot anchors;
  bool anchors_valid = false;
  std::vector<ExcitationEvent> events;
  std::optional<baseline::Zone> zone;
  double depth_u = 0.0;
};

namespace detail {

class StageClock {
 public:
  StageClock() : last_(std::chrono::steady_clock::now()) {}
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point last_;
};

inline double mean_conf(const LayerCurve& c, anatomy::ColumnRange cols) {
  double s = 0.0;
  int n = 0;
  for (int x = std::max(cols.begin, c.domain.begin); x <= std::min(cols.end, c.domain.end); ++x, ++n)
    s += c.conf_at_column(x);
  return n ? s / n : 0.0;
}

}  // namespace detail

/// Per-session analysis state. Owned by one thread.
class AnalysisContext {
 public:
  explicit AnalysisContext(SessionConfig cfg)
      : cfg_(std::move(cfg)), tracker_(cfg_.anatomy.tip_alpha), jitter_rng_(cfg_.seed ^ 0x6a09e667f3bcc909ULL) {}

  const SessionConfig& config() const { return cfg_; }
  bool initialized() const { return model_.has_value(); }
  const lattice::LatticeModel* model() const { return model_ ? &*model_ : nullptr; }
  const FrameRotation& rotation() const { return rotation_; }
  const std::optional<LayerCurve>& ilm() const { return ilm_; }
  const std::optional<LayerCurve>& rpe() const { return rpe_; }

  /// Hot-swappable excitation and baseline constants.
  void set_excitation(const dynamics::ExcitationConfig& e) { cfg_.excitation = e; }

  FrameUpdate process(const ingest::SegFrame& seg, const ingest::BScanFrame* image, FrameReport& report) {
    detail::StageClock clock;
    FrameUpdate up;
    up.frame = frame_;
    report.frame = frame_;
    report.t = seg.t;
    const double width = seg.width;
    const double height = image ? image->height : std::max(width, 512.0);
    const anatomy::FrameBounds bounds{width, height};

    // spline
    if (!rotation_set_ || cfg_.anatomy.recompute_rotation) {
      double theta = 0.0;
      try {
        theta = anatomy::estimate_tissue_rotation(seg, cfg_.anatomy.spline.conf_threshold, cfg_.anatomy.huber);
      } catch (const Error& e) {
        add_warning(report, std::string("rotation: ") + e.what() + "; using 0");
      }
      rotation_ = FrameRotation{theta, {0.5 * (width - 1.0), 0.5 * (height - 1.0)}};
      rotation_set_ = true;
    }
    const auto domain = anatomy::rotated_domain(seg.width, static_cast<int>(height), rotation_);
    auto fit = [&](const std::vector<std::optional<double>>& ys, const std::vector<double>& conf,
                   std::optional<LayerCurve>& slot, const char* name) {
      const auto samples = anatomy::rotated_layer_samples(ys, conf, rotation_);
      try {
        slot = anatomy::fit_layer_spline(samples, cfg_.anatomy.lambda, domain, cfg_.anatomy.spline);
      } catch (const InsufficientEvidence& e) {
        add_warning(report, std::string(name) + ": " + e.what() + (slot ? "; previous curve reused" : ""));
      }
    };
    std::optional<LayerCurve> prev_ilm = ilm_, prev_rpe = rpe_;
    fit(seg.ilm, seg.conf_ilm, ilm_, "ILM");
    fit(seg.rpe, seg.conf_rpe, rpe_, "RPE");
    report.ms.spline = clock.lap();
    if (!ilm_ || !rpe_) {
      report.ms.geometry = clock.lap();
      ++frame_;
      return up;
    }

    // geometry
    std::vector<Vec2> pixels;
    pixels.reserve(seg.needle.pixels.size());
    for (Vec2 p : seg.needle.pixels) pixels.push_back(rotation_.to_rotated(p));
    std::optional<Vec2> seg_tip;
    if (seg.needle.tip) seg_tip = rotation_.to_rotated(*seg.needle.tip);
    std::optional<anatomy::NeedleEstimate> line;
    try {
      line = anatomy::fit_needle_line(pixels, cfg_.anatomy.huber);
    } catch (const Error& e) {
      if (!pixels.empty()) add_warning(report, std::string("needle: ") + e.what());
    }
    std::optional<Vec2> tip;
    if (line) tip = anatomy::needle_tip(*line, pixels, seg_tip, tracker_);
    else if (seg_tip) tip = tracker_.update(*seg_tip);
    report.tip = tip;

    std::shared_ptr<ModelInit> init;
    if (!model_) {
      try {
        const auto roi = anatomy::extract_roi(*ilm_, &*rpe_, rotation_.theta_deg, line ? &*line : nullptr, pixels,
                                              bounds, cfg_.anatomy.roi);
        model_ = lattice::build_lattice(roi, *ilm_, *rpe_, cfg_.lattice, lattice::ImageView{image, rotation_});
        snapshot_ = lattice::snapshot_of(*model_);
        init = std::make_shared<ModelInit>();
        init->coefficients = dynamics::coefficients_of(*model_, kSampleRate);
        init->rest = snapshot_;
        for (const auto& n : model_->nodes)
          init->pickup_weights.push_back(cfg_.render.label_weights[static_cast<std::size_t>(n.label)]);
        if (model_->clamped_nodes > 0)
          add_warning(report, std::to_string(model_->clamped_nodes) + " node stiffnesses clamped for stability");
      } catch (const Error& e) {
        add_warning(report, std::string("lattice init: ") + e.what());
      }
    }
    report.ms.geometry = clock.lap();
    if (!model_) {
      ++frame_;
      return up;
    }
    up.init = std::move(init);

    // lattice
    const auto upd = lattice::compute_anchors(*model_, *ilm_, *rpe_, snapshot_);
    if (!upd.accepted) add_warning(report, upd.warning);
    up.anchors = snapshot_;
    up.anchors_valid = true;
    report.ms.lattice = clock.lap();

    // excitation
    const auto& ex = cfg_.excitation;
    const anatomy::ColumnRange roi_cols{static_cast<int>(std::ceil(model_->roi.x_min)),
                                        static_cast<int>(std::floor(model_->roi.x_max))};
    anatomy::ColumnRange conf_cols = roi_cols;
    if (tip) {
      const int node = dynamics::nearest_node(snapshot_, *tip);
      const TissueLabel label = model_->nodes[static_cast<std::size_t>(node)].label;
      Vec2 velocity{};
      if (prev_tip_ && seg.t > prev_t_) velocity = (1.0 / (seg.t - prev_t_)) * (*tip - *prev_tip_);
      const bool crossing = prev_label_ && *prev_label_ != label;
      auto tool = dynamics::excite_tool(*tip, velocity, *model_, snapshot_, crossing, ex);
      for (std::size_t i = 0; i < tool.size(); ++i) {
        const bool is_crossing = crossing && i + 1 == tool.size();
        report.events.push_back({frame_, seg.t, "tool",
                                 std::string(is_crossing ? "crossing:" : "") + std::string(to_string(label)),
                                 tool[i].amplitude});
        up.events.push_back(std::move(tool[i]));
      }
      prev_label_ = label;
      prev_tip_ = tip;

      try {
        const auto cur = dynamics::compute_separation(*ilm_, *rpe_, tip->x, ex.window_w, roi_cols);
        conf_cols = cur.columns;
        if (prev_ilm && prev_rpe && cur.d.size() >= static_cast<std::size_t>(dynamics::kMinDeformationColumns)) {
          const auto prev = dynamics::separation_on(*prev_ilm, *prev_rpe, cur.columns);
          auto def = dynamics::deformation_excitation(cur, prev, *model_, ex);
          report.f_ilm = def.signal.f_ilm;
          if (def.event) {
            report.events.push_back({frame_, seg.t, "deformation", "ILM", def.signal.f_ilm});
            up.events.push_back(std::move(*def.event));
          }
        }
      } catch (const InsufficientEvidence& e) {
        add_warning(report, std::string("deformation: ") + e.what());
      }

      try {
        up.zone = baseline::classify_zone(*tip, *ilm_, *rpe_);
        up.depth_u = baseline::depth_fraction(*tip, *ilm_, *rpe_);
        report.zone = up.zone;
      } catch (const ValidationError&) {
      }
    }
    prev_t_ = seg.t;
    report.conf_ilm = detail::mean_conf(*ilm_, conf_cols);
    report.conf_rpe = detail::mean_conf(*rpe_, conf_cols);
    const auto j_max = ex.jitter_max_samples();
    for (auto& ev : up.events)
      ev.onset += dynamics::jitter_schedule(report.conf_ilm, report.conf_rpe, jitter_rng_, j_max);
    report.ms.excitation = clock.lap();
    ++frame_;
    return up;
  }

 private:
  static void add_warning(FrameReport& r, const std::string& w) {
    if (!r.warning.empty()) r.warning += "; ";
    r.warning += w;
  }

  SessionConfig cfg_;
  FrameRotation rotation_;
  bool rotation_set_ = false;
  std::optional<LayerCurve> ilm_, rpe_;
  std::optional<lattice::LatticeModel> model_;
  lattice::AnchorSnapshot snapshot_;
  anatomy::TipTracker tracker_;
  std::optional<Vec2> prev_tip_;
  std::optional<TissueLabel> prev_label_;
  double prev_t_ = 0.0;
  std::mt19937_64 jitter_rng_;
  std::size_t frame_ = 0;
};

struct SynthesisTelemetry {
  std::uint64_t blocks_rendered = 0;
  std::uint64_t updates_applied = 0;
  std::uint64_t events_applied = 0;
  std::uint64_t events_dropped = 0;
};

/// Audio-side renderer. Anchor snapshots are approached linearly over one
/// analysis frame period, integrated in short sub-blocks, so that geometry
/// updates do not click; sound comes from excitation events. After the model
/// arrives and the first blocks have been rendered, render_block does not
/// allocate.
class SynthesisEngine {
 public:
  using Recycler = std::function<void(std::unique_ptr<FrameUpdate>)>;
  static constexpr std::size_t kMaxLive = 64;
  static constexpr int kSubBlock = 32;

  SynthesisEngine(const SessionConfig& cfg, Recycler recycle = {})
      : method_(cfg.method),
        gain_(cfg.render.pickup_gain),
        dc_cutoff_(cfg.render.dc_cutoff_hz),
        ramp_samples_(std::max<std::int64_t>(1, std::llround(kSampleRate / cfg.frame_rate))),
        baseline_(cfg.baseline),
        recycle_(std::move(recycle)) {
    live_.reserve(kMaxLive);
    active_.reserve(256);
  }

  const SynthesisTelemetry& telemetry() const { return tel_; }
  std::int64_t sample() const { return sample_; }
  bool has_model() const { return integrator_.has_value(); }
  const dynamics::LatticeState* lattice_state() const { return integrator_ ? &state_ : nullptr; }

  void set_pickup_gain(double g) {
    gain_ = g;
    if (renderer_) renderer_->pickup().set_gain(g);
  }

  /// Takes ownership of an update; applied before the next block.
  void submit(std::unique_ptr<FrameUpdate> up) {
    if (up->init) install(*up->init);
    for (auto& ev : up->events) ev.onset += sample_;
    tel_.events_applied += up->events.size();
    ++tel_.updates_applied;
    if (up->zone) {
      zone_ = *up->zone;
      depth_u_ = up->depth_u;
    }
    if (up->anchors_valid && integrator_ && up->anchors.anchors.size() == to_.anchors.size()) {
      blend_at(sample_);
      from_.anchors = blend_.anchors;
      from_.rest_lengths = blend_.rest_lengths;
      to_.anchors = up->anchors.anchors;
      to_.rest_lengths = up->anchors.rest_lengths;
      ramp_start_ = sample_;
    }
    if (up->events.empty()) {
      if (recycle_) recycle_(std::move(up));
      return;
    }
    if (live_.size() == kMaxLive) {
      tel_.events_dropped += live_.front()->events.size();
      retire(0);
    }
    live_.push_back(std::move(up));
  }

  void render_block(std::span<float> out) {
    if (method_ == Method::Baseline) {
      if (zone_) baseline_.render(*zone_, depth_u_, out);
      else std::fill(out.begin(), out.end(), 0.0f);
    } else if (!integrator_) {
      std::fill(out.begin(), out.end(), 0.0f);
    } else {
      const std::int64_t end = sample_ + static_cast<std::int64_t>(out.size());
      active_.clear();
      for (const auto& m : live_)
        for (const auto& ev : m->events)
          if (ev.onset < end && ev.onset + ev.duration > sample_) active_.push_back(&ev);
      const std::size_t nodes = state_.position.size();
      const std::size_t need = out.size() * nodes;
      if (velocity_.size() < need) velocity_.resize(need);
      for (std::size_t s = 0; s < out.size(); s += kSubBlock) {
        const int n = static_cast<int>(std::min<std::size_t>(kSubBlock, out.size() - s));
        const std::int64_t first = sample_ + static_cast<std::int64_t>(s);
        const bool ramping = first < ramp_start_ + ramp_samples_;
        if (ramping) blend_at(first + n / 2);
        integrator_->step_block(state_, ramping ? blend_ : to_, active_, n, first,
                                std::span<double>(velocity_).subspan(s * nodes, static_cast<std::size_t>(n) * nodes));
      }
      renderer_->synthesize(std::span<const double>(velocity_).first(need), out);
    }
    sample_ += static_cast<std::int64_t>(out.size());
    ++tel_.blocks_rendered;
    collect();
  }

 private:
  void install(const ModelInit& init) {
    integrator_.emplace(init.coefficients);
    state_ = dynamics::rest_state(init.rest);
    renderer_.emplace(render::Pickup(init.pickup_weights, gain_), dc_cutoff_);
    from_ = to_ = blend_ = init.rest;
    ramp_start_ = sample_ - ramp_samples_;
  }

  void blend_at(std::int64_t sample) {
    const double a = std::clamp(static_cast<double>(sample - ramp_start_) / static_cast<double>(ramp_samples_), 0.0, 1.0);
    for (std::size_t i = 0; i < blend_.anchors.size(); ++i)
      blend_.anchors[i] = from_.anchors[i] + a * (to_.anchors[i] - from_.anchors[i]);
    for (std::size_t i = 0; i < blend_.rest_lengths.size(); ++i)
      blend_.rest_lengths[i] = from_.rest_lengths[i] + a * (to_.rest_lengths[i] - from_.rest_lengths[i]);
  }

  void retire(std::size_t i) {
    auto m = std::move(live_[i]);
    live_.erase(live_.begin() + static_cast<std::ptrdiff_t>(i));
    if (recycle_) recycle_(std::move(m));
  }

  void collect() {
    for (std::size_t i = 0; i < live_.size();) {
      bool done = true;
      for (const auto& ev : live_[i]->events)
        if (ev.onset + ev.duration > sample_) done = false;
      if (done) retire(i);
      else ++i;
    }
  }

  Method method_;
  double gain_;
  double dc_cutoff_;
  std::int64_t ramp_samples_;
  std::optional<dynamics::Integrator> integrator_;
  dynamics::LatticeState state_;
  std::optional<render::Renderer> renderer_;
  lattice::AnchorSnapshot from_, to_, blend_;
  std::int64_t ramp_start_ = 0;
  baseline::BaselineSynth baseline_;
  std::optional<baseline::Zone> zone_;
  double depth_u_ = 0.0;
  std::vector<std::unique_ptr<FrameUpdate>> live_;
  std::vector<const ExcitationEvent*> active_;
  std::vector<double> velocity_;
  std::int64_t sample_ = 0;
  SynthesisTelemetry tel_;
  Recycler recycle_;
};

}  // namespace retisonic::runtime
