#pragma once

// Session configuration. One visitor enumerates every field with its dotted
// key, and both serialization and parsing are driven by it, so the two cannot
// drift apart. Unknown keys are rejected.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "retisonic/anatomy.hpp"
#include "retisonic/baseline.hpp"
#include "retisonic/excitation.hpp"
#include "retisonic/lattice.hpp"
#include "retisonic/phantom.hpp"

namespace retisonic::runtime {

enum class Method : std::uint8_t { Proposed, Baseline };
enum class InputSource : std::uint8_t { Phantom, Sequence };

constexpr const char* to_string(Method m) { return m == Method::Proposed ? "proposed" : "baseline"; }
constexpr const char* to_string(InputSource s) { return s == InputSource::Phantom ? "phantom" : "sequence"; }

inline Method parse_method(const std::string& s) {
  if (s == "proposed") return Method::Proposed;
  if (s == "baseline") return Method::Baseline;
  throw ConfigError("method must be 'proposed' or 'baseline', got '" + s + "'");
}

struct AnatomyConfig {
  double lambda = 10.0;
  anatomy::SplineOptions spline;
  anatomy::HuberOptions huber;
  double tip_alpha = 0.6;
  anatomy::RoiOptions roi;
  bool recompute_rotation = false;
};

struct RenderConfig {
  double pickup_gain = 0.05;
  double dc_cutoff_hz = 20.0;
  std::array<double, kTissueLabelCount> label_weights{1.0, 1.0, 1.0, 1.0};
};

struct LiveConfig {
  std::string host = "127.0.0.1";
  int port = 8765;
  double heartbeat_hz = 5.0;  // minimum pose rate before the phantom idles
  int lead_blocks = 8;        // audio rendered ahead of the wall clock
  int queue_capacity = 64;
  int ws_port = 8766;         // WebSocket listener; -1 disables, 0 picks a free port
};

struct SessionConfig {
  Method method = Method::Proposed;
  std::uint64_t seed = 7;
  int block_size = 256;
  int analysis_stride = 1;
  double frame_budget_ms = 28.0;
  double frame_rate = 30.0;  // phantom and live analysis rate
  InputSource source = InputSource::Phantom;
  std::string sequence_path;

  AnatomyConfig anatomy;
  lattice::LatticeOptions lattice;
  dynamics::ExcitationConfig excitation;
  RenderConfig render;
  baseline::BaselineParams baseline;
  ingest::PhantomConfig phantom;
  LiveConfig live;

  void validate() const;
};

namespace detail {

inline const char* label_key(int i) {
  static constexpr const char* keys[] = {"vitreous", "ilm", "retina", "rpe"};
  return keys[i];
}

/// Calls f(key, field) for every configurable field. Enumerations are passed
/// through string adapters by the callers.
template <class Cfg, class F>
void visit_fields(Cfg& c, F&& f) {
  f("method", c.method);
  f("seed", c.seed);
  f("block_size", c.block_size);
  f("analysis_stride", c.analysis_stride);
  f("frame_budget_ms", c.frame_budget_ms);
  f("frame_rate", c.frame_rate);
  f("input.source", c.source);
  f("input.path", c.sequence_path);

  auto& a = c.anatomy;
  f("anatomy.lambda", a.lambda);
  f("anatomy.knot_spacing", a.spline.knot_spacing);
  f("anatomy.conf_threshold", a.spline.conf_threshold);
  f("anatomy.huber_delta", a.huber.delta);
  f("anatomy.huber_max_iterations", a.huber.max_iterations);
  f("anatomy.huber_tolerance", a.huber.tolerance);
  f("anatomy.tip_alpha", a.tip_alpha);
  f("anatomy.recompute_rotation", a.recompute_rotation);
  f("anatomy.roi.width", a.roi.width);
  f("anatomy.roi.height", a.roi.height);
  f("anatomy.roi.search_radius", a.roi.search_radius);
  f("anatomy.roi.vitreous_fraction", a.roi.vitreous_fraction);
  f("anatomy.roi.intersection_tolerance", a.roi.intersection_tolerance);
  f("anatomy.roi.include_sub_rpe", a.roi.include_sub_rpe);

  auto& l = c.lattice;
  f("lattice.rows", l.grid.rows);
  f("lattice.cols", l.grid.cols);
  f("lattice.order", l.order);
  f("lattice.w_thin", l.labels.w_thin);
  f("lattice.thin_band", l.labels.thin_band);
  f("lattice.anchor_coupling", l.calibration.anchor_coupling);
  f("lattice.base_frequency_hz", l.calibration.base_frequency_hz);
  f("lattice.k_ref", l.calibration.k_ref);
  f("lattice.damping_scale", l.calibration.damping_scale);
  for (int i = 0; i < kTissueLabelCount; ++i) {
    auto& p = l.table[static_cast<TissueLabel>(i)];
    const std::string base = std::string("lattice.params.") + label_key(i) + ".";
    f(base + "m", p.m);
    f(base + "k", p.k);
    f(base + "d", p.d);
    f(base + "order", p.order);
    f(base + "k_min", p.k_min);
    f(base + "k_max", p.k_max);
  }

  auto& e = c.excitation;
  f("excitation.a0", e.a0);
  f("excitation.a0_def", e.a0_def);
  f("excitation.v_min", e.v_min);
  f("excitation.v_ref", e.v_ref);
  f("excitation.k_ref", e.k_ref);
  f("excitation.crossing_gain", e.crossing_gain);
  f("excitation.f_min", e.f_min);
  f("excitation.jitter_max_ms", e.jitter_max_ms);
  f("excitation.envelope_ms", e.envelope_ms);
  f("excitation.window_w", e.window_w);

  f("render.pickup_gain", c.render.pickup_gain);
  f("render.dc_cutoff_hz", c.render.dc_cutoff_hz);
  for (int i = 0; i < kTissueLabelCount; ++i)
    f(std::string("render.label_weights.") + label_key(i), c.render.label_weights[static_cast<std::size_t>(i)]);

  auto& b = c.baseline;
  f("baseline.pitch_vitreous_hz", b.pitch_hz[0]);
  f("baseline.pitch_retina_hz", b.pitch_hz[1]);
  f("baseline.pitch_rpe_hz", b.pitch_hz[2]);
  f("baseline.r_min", b.r_min);
  f("baseline.r_max", b.r_max);
  f("baseline.pulse_ms", b.pulse_ms);
  f("baseline.amplitude", b.amplitude);
  f("baseline.crossfade_ms", b.crossfade_ms);
  f("baseline.faster_when_closer", b.faster_when_closer);

  auto& ph = c.phantom;
  f("phantom.width", ph.width);
  f("phantom.height", ph.height);
  f("phantom.ilm_row", ph.ilm_row);
  f("phantom.retina_thickness", ph.retina_thickness);
  f("phantom.thickness_variation", ph.thickness_variation);
  f("phantom.undulation", ph.undulation);
  f("phantom.tilt_deg", ph.tilt_deg);
  f("phantom.needle_tip_x", ph.needle_tip.x);
  f("phantom.needle_tip_y", ph.needle_tip.y);
  f("phantom.needle_angle_deg", ph.needle_angle_deg);
  f("phantom.needle_conf", ph.needle_conf);
  f("phantom.needle_half_thickness", ph.needle_half_thickness);
  f("phantom.occlude_intraretinal_needle", ph.occlude_intraretinal_needle);
  f("phantom.bleb_max", ph.bleb_max);
  f("phantom.bleb_volume_scale", ph.bleb_volume_scale);
  f("phantom.bleb_sigma", ph.bleb_sigma);
  f("phantom.inject_rate", ph.inject_rate);
  f("phantom.shadow_half_width", ph.shadow_half_width);
  f("phantom.shadow_conf_factor", ph.shadow_conf_factor);
  f("phantom.shadow_drop_prob", ph.shadow_drop_prob);
  f("phantom.render_image", ph.render_image);

  f("live.host", c.live.host);
  f("live.port", c.live.port);
  f("live.heartbeat_hz", c.live.heartbeat_hz);
  f("live.lead_blocks", c.live.lead_blocks);
  f("live.queue_capacity", c.live.queue_capacity);
  f("live.ws_port", c.live.ws_port);
}

inline nlohmann::json::json_pointer pointer_of(const std::string& dotted) {
  std::string p;
  std::stringstream ss(dotted);
  for (std::string part; std::getline(ss, part, '.');) p += "/" + part;
  return nlohmann::json::json_pointer(p);
}

inline void collect_leaves(const nlohmann::json& j, const std::string& prefix, std::vector<std::string>& out) {
  if (!j.is_object()) {
    out.push_back(prefix);
    return;
  }
  for (auto it = j.begin(); it != j.end(); ++it)
    collect_leaves(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
}

template <class T>
nlohmann::json encode(const T& v) {
  if constexpr (std::is_same_v<T, Method> || std::is_same_v<T, InputSource>) return to_string(v);
  else return v;
}

template <class T>
void decode(const nlohmann::json& j, const std::string& key, T& out) {
  try {
    if constexpr (std::is_same_v<T, Method>) {
      out = parse_method(j.get<std::string>());
    } else if constexpr (std::is_same_v<T, InputSource>) {
      const auto s = j.get<std::string>();
      if (s == "phantom") out = InputSource::Phantom;
      else if (s == "sequence") out = InputSource::Sequence;
      else throw ConfigError("input.source must be 'phantom' or 'sequence'");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!j.is_boolean()) throw ConfigError("expected a boolean");
      out = j.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!j.is_number_integer()) throw ConfigError("expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (j.is_number_unsigned()) out = j.get<T>();
        else if (j.get<std::int64_t>() >= 0) out = static_cast<T>(j.get<std::int64_t>());
        else throw ConfigError("expected a non-negative integer");
      } else {
        out = j.get<T>();
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!j.is_number()) throw ConfigError("expected a number");
      out = j.get<T>();
    } else {
      if (!j.is_string()) throw ConfigError("expected a string");
      out = j.get<T>();
    }
  } catch (const ConfigError& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

}  // namespace detail

inline nlohmann::json to_json(const SessionConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  detail::visit_fields(c, [&](const std::string& key, const auto& v) { j[detail::pointer_of(key)] = detail::encode(v); });
  return j;
}

/// Overlays `j` on the defaults. Every leaf must name a known field.
inline SessionConfig from_json(const nlohmann::json& j, SessionConfig base = {}) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  std::set<std::string> known;
  detail::visit_fields(base, [&](const std::string& key, auto&) { known.insert(key); });
  std::vector<std::string> leaves;
  detail::collect_leaves(j, "", leaves);
  for (const auto& leaf : leaves)
    if (!known.count(leaf)) throw ConfigError("unknown config key '" + leaf + "'");
  detail::visit_fields(base, [&](const std::string& key, auto& v) {
    const auto ptr = detail::pointer_of(key);
    if (j.contains(ptr)) detail::decode(j.at(ptr), key, v);
  });
  base.validate();
  return base;
}

inline SessionConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

inline SessionConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

inline std::string serialize(const SessionConfig& c) { return to_json(c).dump(2) + "\n"; }

/// `key=value` override from the command line. The value is read as JSON
/// when it parses, otherwise as a string.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  j[detail::pointer_of(key)] = value;
}

/// Config file (if any) with `key=value` overrides applied in order.
inline SessionConfig build_config(const std::optional<std::filesystem::path>& path,
                                  const std::vector<std::string>& overrides) {
  nlohmann::json j = nlohmann::json::object();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw IoError("cannot open config '" + path->string() + "'");
    j = nlohmann::json::parse(in, nullptr, false, true);
    if (j.is_discarded()) throw ConfigError("config '" + path->string() + "' is not valid JSON");
  }
  for (const auto& o : overrides) apply_override(j, o);
  return from_json(j);
}

inline void SessionConfig::validate() const {
  const auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  need(block_size >= 16 && block_size <= 8192, "block_size must be in [16, 8192]");
  need(analysis_stride >= 1, "analysis_stride must be >= 1");
  need(frame_budget_ms > 0.0, "frame_budget_ms must be positive");
  need(frame_rate > 0.0 && frame_rate <= 240.0, "frame_rate must be in (0, 240]");
  need(source != InputSource::Sequence || !sequence_path.empty(), "input.path required for a sequence source");
  need(anatomy.lambda >= 0.0, "anatomy.lambda must be >= 0");
  need(anatomy.spline.knot_spacing >= 1, "anatomy.knot_spacing must be >= 1");
  need(anatomy.spline.conf_threshold >= 0.0 && anatomy.spline.conf_threshold <= 1.0,
       "anatomy.conf_threshold must be in [0,1]");
  need(anatomy.huber.delta > 0.0 && anatomy.huber.max_iterations >= 1 && anatomy.huber.tolerance > 0.0,
       "anatomy.huber_* must be positive");
  need(anatomy.tip_alpha > 0.0 && anatomy.tip_alpha <= 1.0, "anatomy.tip_alpha must be in (0,1]");
  need(anatomy.roi.width > 0.0 && anatomy.roi.height > 0.0, "anatomy.roi size must be positive");
  need(anatomy.roi.vitreous_fraction >= 0.0 && anatomy.roi.vitreous_fraction < 1.0,
       "anatomy.roi.vitreous_fraction must be in [0,1)");
  need(lattice.grid.rows >= 4 && lattice.grid.cols >= 4, "lattice grid must be at least 4x4");
  need(lattice.order >= 0 && lattice.order <= 2, "lattice.order must be 0 (per node), 1 or 2");
  need(lattice.labels.w_thin >= 1.0, "lattice.w_thin must be >= 1");
  need(lattice.calibration.anchor_coupling > 0.0, "lattice.anchor_coupling must be positive");
  need(lattice.calibration.base_frequency_hz > 0.0 && lattice.calibration.k_ref > 0.0 &&
           lattice.calibration.damping_scale >= 0.0,
       "lattice calibration constants must be positive");
  double min_mass = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kTissueLabelCount; ++i) {
    const auto& p = lattice.table[static_cast<TissueLabel>(i)];
    const std::string name = detail::label_key(i);
    need(p.m > 0.0 && p.k > 0.0 && p.d >= 0.0, "lattice.params." + name + ": need m > 0, k > 0, d >= 0");
    need(p.order == 1 || p.order == 2, "lattice.params." + name + ".order must be 1 or 2");
    need(p.k_min > 0.0 && p.k_min <= p.k && p.k <= p.k_max, "lattice.params." + name + ": need 0 < k_min <= k <= k_max");
    min_mass = std::min(min_mass, p.m);
  }
  const double cap = lattice::stiffness_cap(lattice.calibration, min_mass, lattice.sample_rate);
  for (int i = 0; i < kTissueLabelCount; ++i) {
    const auto& p = lattice.table[static_cast<TissueLabel>(i)];
    need(p.k_max <= cap, std::string("lattice.params.") + detail::label_key(i) + ".k_max " + std::to_string(p.k_max) +
                             " exceeds the stability limit " + std::to_string(cap));
  }
  const auto& e = excitation;
  need(e.a0 >= 0.0 && e.a0_def >= 0.0, "excitation amplitudes must be >= 0");
  need(e.v_min >= 0.0 && e.v_ref > 0.0 && e.k_ref > 0.0, "excitation velocities and k_ref must be positive");
  need(e.crossing_gain >= 0.0 && e.f_min >= 0.0, "excitation.crossing_gain and f_min must be >= 0");
  need(e.jitter_max_ms >= 0.0 && e.envelope_ms > 0.0, "excitation timing constants must be positive");
  need(e.window_w >= 8.0, "excitation.window_w must be >= 8");
  need(render.pickup_gain > 0.0 && render.dc_cutoff_hz > 0.0, "render gain and DC cutoff must be positive");
  double wsum = 0.0;
  for (double w : render.label_weights) {
    need(w >= 0.0, "render.label_weights must be >= 0");
    wsum += w;
  }
  need(wsum > 0.0, "render.label_weights must not all be zero");
  baseline.validate();
  need(phantom.width >= ingest::kMinFrameSize && phantom.height >= ingest::kMinFrameSize, "phantom frame too small");
  need(phantom.retina_thickness - phantom.thickness_variation >= 30.0, "phantom retina thinner than 30 px");
  need(phantom.shadow_conf_factor >= 0.0 && phantom.shadow_conf_factor <= 1.0 && phantom.shadow_drop_prob >= 0.0 &&
           phantom.shadow_drop_prob <= 1.0,
       "phantom shadow factors must be in [0,1]");
  need(phantom.inject_rate >= 0.0 && phantom.bleb_max >= 0.0 && phantom.bleb_volume_scale > 0.0 &&
           phantom.bleb_sigma > 0.0,
       "phantom bleb constants out of range");
  need(live.port >= 0 && live.port <= 65535, "live.port out of range");
  need(live.ws_port >= -1 && live.ws_port <= 65535, "live.ws_port out of range");
  need(live.heartbeat_hz > 0.0, "live.heartbeat_hz must be positive");
  need(live.lead_blocks >= 1 && live.queue_capacity >= 2, "live buffering constants too small");
}

}  // namespace retisonic::runtime
