#pragma once

// Synthetic subretinal-injection phantom. Ground-truth ILM/RPE curves, a
// straight needle, a Gaussian bleb that grows with injected volume, and a
// needle shadow that degrades the emitted segmentation near the tip.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "retisonic/core.hpp"
#include "retisonic/ingest.hpp"

namespace retisonic::ingest {

struct PhantomConfig {
  int width = 512;
  int height = 512;
  double ilm_row = 240.0;            // ILM row at the lateral center, before tilt
  double retina_thickness = 80.0;    // nominal RPE - ILM (px)
  double thickness_variation = 4.0;  // smooth lateral thickness modulation (px)
  double undulation = 3.0;           // smooth ILM undulation (px)
  double tilt_deg = 0.0;             // retina tilt, atan(dy/dx) in image coordinates

  Vec2 needle_tip{180.0, 100.0};
  double needle_angle_deg = 40.0;  // shaft direction toward the retina, below horizontal
  double needle_conf = 1.0;
  double needle_half_thickness = 1.0;
  bool occlude_intraretinal_needle = false;

  double bleb_max = 60.0;         // A_max (px)
  double bleb_volume_scale = 1.0; // v0
  double bleb_sigma = 40.0;       // lateral sigma (px)
  double inject_rate = 0.5;       // volume units per second

  int shadow_half_width = 6;
  double shadow_conf_factor = 0.2;
  double shadow_drop_prob = 0.5;

  bool render_image = false;
  std::uint64_t seed = 7;
};

struct PhantomControl {
  Vec2 tip_delta{};
  double angle_delta_deg = 0.0;
  bool inject = false;
};

struct PhantomState {
  double t = 0.0;
  std::vector<double> ilm_base;
  std::vector<double> rpe_base;
  double tilt_deg = 0.0;
  Vec2 tip{};
  double shaft_angle_deg = 0.0;
  double injected_volume = 0.0;
  double bleb_center = 0.0;
  double bleb_amplitude = 0.0;
  std::uint64_t rng_seed = 0;
  bool injecting = false;       // volume grew during the last step
  bool inject_blocked = false;  // inject requested with the tip outside the retina
  std::mt19937_64 shadow_rng;
  std::mt19937_64 speckle_rng;

  int width() const { return static_cast<int>(ilm_base.size()); }

  double ilm(double x) const {
    const double base = sample(ilm_base, x);
    if (bleb_amplitude <= 0.0) return base;
    const double d = x - bleb_center;
    return base - bleb_amplitude * std::exp(-d * d / (2.0 * bleb_sigma * bleb_sigma));
  }
  double rpe(double x) const { return sample(rpe_base, x); }
  double separation(double x) const { return rpe(x) - ilm(x); }

  Vec2 needle_direction() const {
    return {std::cos(deg2rad(shaft_angle_deg)), std::sin(deg2rad(shaft_angle_deg))};
  }
  bool tip_intraretinal() const {
    return tip.y >= ilm(tip.x) && tip.y <= rpe(tip.x);
  }

  double bleb_sigma = 40.0;

 private:
  static double sample(const std::vector<double>& v, double x) {
    const double xc = std::clamp(x, 0.0, static_cast<double>(v.size() - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(xc));
    const auto i1 = std::min(i0 + 1, v.size() - 1);
    const double f = xc - static_cast<double>(i0);
    return v[i0] + f * (v[i1] - v[i0]);
  }
};

/// Saturating bleb growth law A(v) = A_max (1 - exp(-v / v0)).
inline double bleb_amplitude_for(double volume, const PhantomConfig& cfg) {
  return cfg.bleb_max * (1.0 - std::exp(-std::max(volume, 0.0) / cfg.bleb_volume_scale));
}

namespace detail {

/// Platform-independent uniform draw in [0,1).
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

inline PhantomState phantom_init(const PhantomConfig& cfg) {
  if (cfg.width < kMinFrameSize || cfg.height < kMinFrameSize)
    throw ValidationError("phantom frame smaller than minimum size");
  PhantomState s;
  s.tilt_deg = cfg.tilt_deg;
  s.rng_seed = cfg.seed;
  s.shadow_rng.seed(cfg.seed);
  s.speckle_rng.seed(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  s.tip = cfg.needle_tip;
  s.shaft_angle_deg = cfg.needle_angle_deg;
  s.bleb_sigma = cfg.bleb_sigma;
  const double xc = 0.5 * (cfg.width - 1);
  const double slope = std::tan(deg2rad(cfg.tilt_deg));
  s.ilm_base.resize(static_cast<std::size_t>(cfg.width));
  s.rpe_base.resize(static_cast<std::size_t>(cfg.width));
  for (int x = 0; x < cfg.width; ++x) {
    const double u = (x - xc) / cfg.width;
    // Even functions of (x - xc) keep the least-squares slope equal to the tilt.
    const double ilm = cfg.ilm_row + slope * (x - xc) + cfg.undulation * std::cos(4.0 * kPi * u);
    const double thick = cfg.retina_thickness + cfg.thickness_variation * std::cos(2.0 * kPi * u);
    s.ilm_base[static_cast<std::size_t>(x)] = ilm;
    s.rpe_base[static_cast<std::size_t>(x)] = ilm + std::max(thick, 30.0);
  }
  return s;
}

/// Segmentation evidence for the current state. Draws shadow dropouts from the
/// state's RNG, so the state is taken by reference.
inline SegFrame phantom_segmentation(PhantomState& s, const PhantomConfig& cfg) {
  SegFrame f;
  f.t = s.t;
  f.width = cfg.width;
  const auto w = static_cast<std::size_t>(cfg.width);
  f.ilm.resize(w);
  f.rpe.resize(w);
  f.conf_ilm.assign(w, 1.0);
  f.conf_rpe.assign(w, 1.0);
  const double max_row = cfg.height - 1;
  const long tip_col = std::lround(s.tip.x);
  for (int x = 0; x < cfg.width; ++x) {
    const auto i = static_cast<std::size_t>(x);
    f.ilm[i] = std::clamp(s.ilm(x), 0.0, max_row);
    f.rpe[i] = std::clamp(s.rpe(x), *f.ilm[i], max_row);
    if (std::abs(x - tip_col) <= cfg.shadow_half_width) {
      f.conf_ilm[i] = std::clamp(f.conf_ilm[i] * cfg.shadow_conf_factor, 0.0, 1.0);
      f.conf_rpe[i] = std::clamp(f.conf_rpe[i] * cfg.shadow_conf_factor, 0.0, 1.0);
      if (detail::uniform01(s.shadow_rng) < cfg.shadow_drop_prob) f.ilm[i].reset();
      if (detail::uniform01(s.shadow_rng) < cfg.shadow_drop_prob) f.rpe[i].reset();
    }
  }

  // Shaft pixels from the tip back along the shaft until it leaves the frame.
  const Vec2 dir = s.needle_direction();
  const Vec2 normal{-dir.y, dir.x};
  std::set<std::pair<long, long>> seen;
  const int thickness = static_cast<int>(std::lround(cfg.needle_half_thickness));
  for (double along = 0.0;; along += 1.0) {
    const Vec2 c = s.tip - along * dir;
    if (c.x < -thickness || c.x > cfg.width - 1 + thickness || c.y < -thickness ||
        c.y > max_row + thickness)
      break;
    for (int o = -thickness; o <= thickness; ++o) {
      const Vec2 p = c + static_cast<double>(o) * normal;
      const long px = std::lround(p.x), py = std::lround(p.y);
      if (px < 0 || px >= cfg.width || py < 0 || py > static_cast<long>(max_row)) continue;
      if (cfg.occlude_intraretinal_needle && py > s.ilm(static_cast<double>(px))) continue;
      if (seen.emplace(px, py).second)
        f.needle.pixels.push_back({static_cast<double>(px), static_cast<double>(py)});
    }
  }
  if (s.tip.x >= 0 && s.tip.x <= cfg.width - 1 && s.tip.y >= 0 && s.tip.y <= max_row)
    f.needle.tip = Vec2{std::round(s.tip.x), std::round(s.tip.y)};
  f.needle.conf = f.needle.pixels.empty() ? 0.0 : cfg.needle_conf;
  return f;
}

/// Cosmetic B-scan: bright ILM/RPE bands, a bright needle line, speckle,
/// and a dark shadow under the needle tip.
inline BScanFrame phantom_image(PhantomState& s, const PhantomConfig& cfg) {
  BScanFrame img;
  img.t = s.t;
  img.height = cfg.height;
  img.width = cfg.width;
  img.intensity.assign(static_cast<std::size_t>(cfg.height) * cfg.width, 0.0f);
  const long tip_col = std::lround(s.tip.x);
  const Vec2 dir = s.needle_direction();
  for (int x = 0; x < cfg.width; ++x) {
    const double ilm = s.ilm(x), rpe = s.rpe(x);
    const bool shadow = std::abs(x - tip_col) <= cfg.shadow_half_width;
    // Needle row at this column, when the shaft covers it.
    std::optional<double> needle_row;
    if (std::abs(dir.x) > 1e-9) {
      const double along = (s.tip.x - x) / dir.x;
      if (along >= 0.0) needle_row = s.tip.y - along * dir.y;
    }
    for (int y = 0; y < cfg.height; ++y) {
      double base;
      if (y < ilm - 1.5) base = 0.04;
      else if (y <= ilm + 1.5) base = 0.85;
      else if (y < rpe - 2.0) base = 0.35;
      else if (y <= rpe + 2.0) base = 0.95;
      else base = 0.25 * std::exp(-(y - rpe) / 60.0);
      const double speckle = -std::log(1.0 - detail::uniform01(s.speckle_rng));
      double v = base * (0.6 + 0.4 * speckle) + 0.02 * detail::uniform01(s.speckle_rng);
      if (needle_row) {
        if (std::abs(y - *needle_row) <= cfg.needle_half_thickness + 0.5) v = 1.0;
        else if (shadow && y > *needle_row) v *= 0.3;
      }
      img.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return img;
}

struct PhantomStep {
  PhantomState state;
  SegFrame seg;
  std::optional<BScanFrame> image;
};

inline PhantomStep phantom_step(PhantomState state, const PhantomControl& control, double dt,
                                const PhantomConfig& cfg) {
  if (!(dt > 0.0)) throw ValidationError("phantom_step requires dt > 0");
  state.t += dt;
  state.tip += control.tip_delta;
  state.tip.x = std::clamp(state.tip.x, 0.0, static_cast<double>(cfg.width - 1));
  state.tip.y = std::clamp(state.tip.y, 0.0, static_cast<double>(cfg.height - 1));
  state.shaft_angle_deg += control.angle_delta_deg;
  state.injecting = false;
  state.inject_blocked = false;
  if (control.inject) {
    if (state.tip_intraretinal()) {
      if (state.injected_volume <= 0.0) state.bleb_center = state.tip.x;
      state.injected_volume += cfg.inject_rate * dt;
      state.bleb_amplitude = bleb_amplitude_for(state.injected_volume, cfg);
      state.injecting = true;
    } else {
      state.inject_blocked = true;
    }
  }
  PhantomStep out;
  out.seg = phantom_segmentation(state, cfg);
  if (cfg.render_image) out.image = phantom_image(state, cfg);
  out.state = std::move(state);
  return out;
}

// ---- scripted sequences ----

struct PhantomGroundTruth {
  std::optional<double> ilm_crossing_t;  // first frame with the tip below the ILM
  std::optional<double> bleb_onset_t;    // first frame with injected volume > 0
};

struct PhantomSequence {
  std::vector<SequenceFrame> frames;
  std::vector<PhantomState> states;
  PhantomGroundTruth truth;
};

/// Insertion-then-injection script: idle, advance along the shaft until the
/// tip reaches mid-retina, hold, inject, hold.
inline std::vector<PhantomControl> standard_injection_script(const PhantomConfig& cfg,
                                                             double frame_rate = 30.0,
                                                             double inject_seconds = 3.0) {
  const PhantomState s0 = phantom_init(cfg);
  const Vec2 dir{std::cos(deg2rad(cfg.needle_angle_deg)), std::sin(deg2rad(cfg.needle_angle_deg))};
  double travel = 0.0;
  for (; travel < 2.0 * cfg.width; travel += 0.25) {
    const Vec2 p = s0.tip + travel * dir;
    if (p.y >= 0.5 * (s0.ilm(p.x) + s0.rpe(p.x))) break;
  }
  const auto frames = [&](double seconds) { return static_cast<int>(std::lround(seconds * frame_rate)); };
  std::vector<PhantomControl> script;
  script.insert(script.end(), static_cast<std::size_t>(frames(0.5)), PhantomControl{});
  const int advance = frames(1.5);
  script.insert(script.end(), static_cast<std::size_t>(advance),
                PhantomControl{(travel / advance) * dir, 0.0, false});
  script.insert(script.end(), static_cast<std::size_t>(frames(1.0)), PhantomControl{});
  script.insert(script.end(), static_cast<std::size_t>(frames(inject_seconds)), PhantomControl{{}, 0.0, true});
  script.insert(script.end(), static_cast<std::size_t>(frames(1.0)), PhantomControl{});
  return script;
}

/// Runs a control script: frame 0 is the initial state at t = 0, frame k the
/// state after script[k-1].
inline PhantomSequence generate_sequence(const PhantomConfig& cfg, const std::vector<PhantomControl>& script,
                                         double frame_rate = 30.0) {
  PhantomSequence seq;
  PhantomState state = phantom_init(cfg);
  const auto record = [&](SegFrame seg, std::optional<BScanFrame> img, const PhantomState& st) {
    if (!seq.truth.ilm_crossing_t && st.tip.y > st.ilm(st.tip.x)) seq.truth.ilm_crossing_t = st.t;
    if (!seq.truth.bleb_onset_t && st.injected_volume > 0.0) seq.truth.bleb_onset_t = st.t;
    seq.frames.push_back({std::move(seg), std::move(img)});
    seq.states.push_back(st);
  };
  {
    SegFrame seg = phantom_segmentation(state, cfg);
    std::optional<BScanFrame> img;
    if (cfg.render_image) img = phantom_image(state, cfg);
    record(std::move(seg), std::move(img), state);
  }
  const double dt = 1.0 / frame_rate;
  for (std::size_t k = 0; k < script.size(); ++k) {
    PhantomStep step = phantom_step(std::move(state), script[k], dt, cfg);
    // Accumulated dt drifts; pin timestamps to the frame grid.
    step.state.t = static_cast<double>(k + 1) * dt;
    step.seg.t = step.state.t;
    if (step.image) step.image->t = step.state.t;
    state = step.state;
    record(std::move(step.seg), std::move(step.image), state);
  }
  return seq;
}

}  // namespace retisonic::ingest
