#pragma once

// Comparator sonification: one pitch per anatomical zone, gated by a pulse
// train whose rate follows the tip's depth fraction between ILM and RPE.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string_view>

#include "retisonic/core.hpp"
#include "retisonic/spline.hpp"

namespace retisonic::baseline {

using anatomy::LayerCurve;

enum class Zone : std::uint8_t { Vitreous = 0, Intraretinal = 1, AtOrBelowRpe = 2 };

constexpr std::string_view to_string(Zone z) {
  switch (z) {
    case Zone::Vitreous: return "vitreous";
    case Zone::Intraretinal: return "intraretinal";
    case Zone::AtOrBelowRpe: return "rpe";
  }
  return "?";
}

struct BaselineParams {
  std::array<double, 3> pitch_hz{220.0, 440.0, 880.0};
  double r_min = 2.0;   // pulses/s
  double r_max = 12.0;
  double pulse_ms = 30.0;
  double amplitude = 0.5;
  double crossfade_ms = 10.0;
  bool faster_when_closer = true;

  void validate() const {
    if (!(r_max > r_min && r_min > 0.0)) throw ConfigError("baseline: need r_max > r_min > 0");
    for (std::size_t i = 0; i < pitch_hz.size(); ++i) {
      if (!(pitch_hz[i] >= 100.0 && pitch_hz[i] <= 4000.0)) throw ConfigError("baseline: pitch outside 100-4000 Hz");
      for (std::size_t j = 0; j < i; ++j)
        if (pitch_hz[i] == pitch_hz[j]) throw ConfigError("baseline: zone pitches must be distinct");
    }
    if (!(pulse_ms > 0.0 && pulse_ms * 1e-3 < 1.0 / r_max)) throw ConfigError("baseline: pulse longer than its period");
    if (!(amplitude > 0.0 && amplitude <= 1.0)) throw ConfigError("baseline: amplitude outside (0,1]");
    if (!(crossfade_ms > 0.0)) throw ConfigError("baseline: crossfade must be positive");
  }
};

inline Zone classify_zone(Vec2 tip, const LayerCurve& ilm, const LayerCurve& rpe) {
  if (!ilm.domain.contains(tip.x) || !rpe.domain.contains(tip.x))
    throw ValidationError("tip column " + std::to_string(tip.x) + " outside the layer curves");
  if (tip.y < ilm.at(tip.x)) return Zone::Vitreous;
  if (tip.y < rpe.at(tip.x)) return Zone::Intraretinal;
  return Zone::AtOrBelowRpe;
}

/// Fraction of the ILM->RPE traversal at the tip column, clamped to [0,1].
inline double depth_fraction(Vec2 tip, const LayerCurve& ilm, const LayerCurve& rpe) {
  const double yi = ilm.at(tip.x), yr = rpe.at(tip.x);
  if (!(yr > yi)) return tip.y >= yr ? 1.0 : 0.0;
  return std::clamp((tip.y - yi) / (yr - yi), 0.0, 1.0);
}

inline double pulse_rate(double u, const BaselineParams& p) {
  u = std::clamp(u, 0.0, 1.0);
  if (!p.faster_when_closer) u = 1.0 - u;
  return p.r_min + (p.r_max - p.r_min) * u;
}

/// Stateful synthesizer; phases run continuously across blocks.
class BaselineSynth {
 public:
  explicit BaselineSynth(BaselineParams p = {}, double sample_rate = kSampleRate) : p_(p), sr_(sample_rate) {
    p_.validate();
  }

  const BaselineParams& params() const { return p_; }

  void render(Zone zone, double u, std::span<float> out) {
    const double dt = 1.0 / sr_;
    const double rate = pulse_rate(u, p_);
    const double pulse_s = p_.pulse_ms * 1e-3;
    const double fade_step = dt / (p_.crossfade_ms * 1e-3);
    if (zone != target_) {
      from_ = current_mix_zone();
      target_ = zone;
      fade_ = 0.0;
    }
    for (float& y : out) {
      const double env = pulse_clock_ < pulse_s ? std::pow(std::sin(kPi * pulse_clock_ / pulse_s), 2) : 0.0;
      const double tone_to = std::sin(phase_[static_cast<std::size_t>(target_)]);
      double tone = tone_to;
      if (fade_ < 1.0) {
        const double tone_from = std::sin(phase_[static_cast<std::size_t>(from_)]);
        tone = (1.0 - fade_) * tone_from + fade_ * tone_to;
        fade_ = std::min(1.0, fade_ + fade_step);
      }
      y = static_cast<float>(p_.amplitude * env * tone);
      for (std::size_t z = 0; z < phase_.size(); ++z) {
        phase_[z] += 2.0 * kPi * p_.pitch_hz[z] * dt;
        if (phase_[z] > 2.0 * kPi) phase_[z] -= 2.0 * kPi;
      }
      pulse_clock_ += dt;
      if (pulse_clock_ >= 1.0 / rate) {
        pulse_clock_ -= 1.0 / rate;
        if (pulse_clock_ >= dt) pulse_clock_ = 0.0;  // rate jumped up: start the next pulse cleanly
      }
    }
  }

  void reset() {
    phase_.fill(0.0);
    pulse_clock_ = 0.0;
    fade_ = 1.0;
    target_ = from_ = Zone::Vitreous;
  }

 private:
  Zone current_mix_zone() const { return fade_ < 0.5 ? from_ : target_; }

  BaselineParams p_;
  double sr_;
  std::array<double, 3> phase_{};
  double pulse_clock_ = 0.0;  // seconds since the current pulse started
  double fade_ = 1.0;
  Zone target_ = Zone::Vitreous;
  Zone from_ = Zone::Vitreous;
};

}  // namespace retisonic::baseline
