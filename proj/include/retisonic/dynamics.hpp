#pragma once

// Audio-rate integration of the lattice with a two-step position scheme:
//   x+ = 2x - x- + F dt^2 / m
// Springs act along their axis with damping on the relative velocity; each
// node is tethered to its anchor by a grounded spring c_anchor * k with
// damping d.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "retisonic/core.hpp"
#include "retisonic/lattice.hpp"

namespace retisonic::dynamics {

using lattice::AnchorSnapshot;
using lattice::LatticeModel;

struct LatticeState {
  std::vector<Vec2> position;
  std::vector<Vec2> previous;
  std::vector<Vec2> force;  // external force accumulated for the last step
  std::uint64_t step = 0;
};

inline LatticeState rest_state(const AnchorSnapshot& anchors) {
  LatticeState s;
  s.position = anchors.anchors;
  s.previous = anchors.anchors;
  s.force.assign(anchors.anchors.size(), Vec2{});
  return s;
}

enum class EventSource : std::uint8_t { Tool, Deformation };

constexpr const char* to_string(EventSource s) { return s == EventSource::Tool ? "tool" : "deformation"; }

enum class Envelope : std::uint8_t { RaisedCosine };

struct EventTarget {
  int node = 0;
  double weight = 1.0;
};

/// Timed force pulse. `onset` is an absolute sample index.
struct ExcitationEvent {
  std::vector<EventTarget> targets;
  double amplitude = 0.0;  // model force units
  int duration = 1;        // samples
  Envelope envelope = Envelope::RaisedCosine;
  std::int64_t onset = 0;
  EventSource source = EventSource::Tool;
  Vec2 direction{0.0, 1.0};  // unit

  bool active_at(std::int64_t n) const { return n >= onset && n < onset + duration; }
  double envelope_at(std::int64_t n) const {
    const double s = std::sin(kPi * (static_cast<double>(n - onset) + 0.5) / duration);
    return s * s;
  }
};

/// Audio-rate coefficients derived once from a model. Stiffness and damping
/// are in calibrated units; masses as in the model.
struct PhysicsCoefficients {
  struct Node {
    double inv_mass = 1.0;
    double anchor_k = 0.0;
    double damping = 0.0;
  };
  struct Link {
    int a = 0;
    int b = 0;
    double k = 0.0;
    double d = 0.0;
  };
  std::vector<Node> nodes;
  std::vector<Link> links;
  std::vector<double> mass;
  double force_scale = 1.0;  // model force units -> calibrated force
  double dt = 1.0 / kSampleRate;
};

inline PhysicsCoefficients coefficients_of(const LatticeModel& model, double sample_rate = kSampleRate) {
  PhysicsCoefficients c;
  const double ks = model.calibration.stiffness_scale();
  const double ds = model.calibration.damping_scale;
  c.dt = 1.0 / sample_rate;
  c.force_scale = ks;
  for (const auto& n : model.nodes) {
    c.nodes.push_back({1.0 / n.m, model.calibration.anchor_coupling * n.k * ks, n.d * ds});
    c.mass.push_back(n.m);
  }
  for (const auto& s : model.springs) c.links.push_back({s.a, s.b, s.k * ks, s.d * ds});
  return c;
}

/// Omega_max * dt with omega_max = max over springs of sqrt(2 k_ab / min(m_a, m_b)).
inline double stability_number(const PhysicsCoefficients& c) {
  double worst = 0.0;
  for (const auto& l : c.links) {
    const double m = std::min(c.mass[static_cast<std::size_t>(l.a)], c.mass[static_cast<std::size_t>(l.b)]);
    worst = std::max(worst, std::sqrt(2.0 * l.k / m));
  }
  return worst * c.dt;
}

/// Integrates blocks of samples. Owns its scratch buffers, so after the first
/// block of a given size it does not allocate.
class Integrator {
 public:
  explicit Integrator(PhysicsCoefficients coeffs) : c_(std::move(coeffs)) {}

  const PhysicsCoefficients& coefficients() const { return c_; }

  /// Advances `state` by `n` samples. `first_sample` is the absolute index of
  /// the first sample (for event timing). `axial_velocity` receives n rows of
  /// per-node axial velocity, (x+ - x-) / 2dt, row-major [sample][node].
  /// On a non-finite force the state is rolled back and NumericalFault thrown.
  void step_block(LatticeState& state, const AnchorSnapshot& anchors, std::span<const ExcitationEvent> events,
                  int n, std::int64_t first_sample, std::span<double> axial_velocity) {
    step_impl(state, anchors, events, n, first_sample, axial_velocity);
  }
  void step_block(LatticeState& state, const AnchorSnapshot& anchors, std::span<const ExcitationEvent* const> events,
                  int n, std::int64_t first_sample, std::span<double> axial_velocity) {
    step_impl(state, anchors, events, n, first_sample, axial_velocity);
  }

 private:
  static const ExcitationEvent& deref(const ExcitationEvent& e) { return e; }
  static const ExcitationEvent& deref(const ExcitationEvent* e) { return *e; }

  template <class Events>
  void step_impl(LatticeState& state, const AnchorSnapshot& anchors, const Events& events, int n,
                 std::int64_t first_sample, std::span<double> axial_velocity) {
    const std::size_t nodes = c_.nodes.size();
    if (state.position.size() != nodes || anchors.anchors.size() != nodes ||
        anchors.rest_lengths.size() != c_.links.size())
      throw ValidationError("lattice state, anchors and coefficients disagree in size");
    if (axial_velocity.size() < static_cast<std::size_t>(n) * nodes)
      throw ValidationError("velocity buffer too small");
    saved_position_ = state.position;
    saved_previous_ = state.previous;
    const std::uint64_t saved_step = state.step;
    force_.resize(nodes);
    next_.resize(nodes);
    state.force.resize(nodes);
    const double dt = c_.dt, inv_dt = 1.0 / dt, dt2 = dt * dt;

    for (int s = 0; s < n; ++s) {
      const std::int64_t sample = first_sample + s;
      std::fill(force_.begin(), force_.end(), Vec2{});
      std::fill(state.force.begin(), state.force.end(), Vec2{});
      for (std::size_t l = 0; l < c_.links.size(); ++l) {
        const auto& link = c_.links[l];
        const auto a = static_cast<std::size_t>(link.a), b = static_cast<std::size_t>(link.b);
        const Vec2 f = spring_force(state, a, b, link.k, link.d, anchors.rest_lengths[l], anchors, inv_dt);
        force_[a] += f;
        force_[b] -= f;
      }
      for (const auto& e : events) {
        const ExcitationEvent& ev = deref(e);
        if (!ev.active_at(sample)) continue;
        const double f = ev.amplitude * ev.envelope_at(sample) * c_.force_scale;
        for (const auto& t : ev.targets) state.force[static_cast<std::size_t>(t.node)] += (f * t.weight) * ev.direction;
      }
      for (std::size_t i = 0; i < nodes; ++i) {
        const auto& node = c_.nodes[i];
        const Vec2 x = state.position[i];
        Vec2 f = force_[i] + state.force[i];
        f -= node.anchor_k * (x - anchors.anchors[i]);
        f -= (node.damping * inv_dt) * (x - state.previous[i]);
        if (!is_finite(f)) {
          const std::string where = diagnose(state, anchors, i);
          state.position = saved_position_;
          state.previous = saved_previous_;
          state.step = saved_step;
          throw NumericalFault("non-finite force at node " + std::to_string(i) + where + " (sample " +
                               std::to_string(sample) + "); state rolled back to block start");
        }
        next_[i] = 2.0 * x - state.previous[i] + (dt2 * node.inv_mass) * f;
        axial_velocity[static_cast<std::size_t>(s) * nodes + i] = (next_[i].y - state.previous[i].y) * 0.5 * inv_dt;
      }
      state.previous.swap(state.position);
      state.position.swap(next_);
      ++state.step;
    }
  }

  Vec2 spring_force(const LatticeState& st, std::size_t a, std::size_t b, double k, double d, double rest,
                    const AnchorSnapshot& anchors, double inv_dt) const {
    const Vec2 delta = st.position[b] - st.position[a];
    const Vec2 rel_vel = inv_dt * ((st.position[b] - st.previous[b]) - (st.position[a] - st.previous[a]));
    if (rest <= 0.0) return k * delta + d * rel_vel;  // zero-length spring is linear
    const double len = norm(delta);
    Vec2 u;
    if (len > 1e-12) {
      u = (1.0 / len) * delta;
    } else {
      const Vec2 r = anchors.anchors[b] - anchors.anchors[a];
      const double rl = norm(r);
      u = rl > 0.0 ? (1.0 / rl) * r : Vec2{1.0, 0.0};
    }
    return (k * (len - rest) + d * dot(rel_vel, u)) * u;
  }

  std::string diagnose(const LatticeState& st, const AnchorSnapshot& anchors, std::size_t node) const {
    for (std::size_t l = 0; l < c_.links.size(); ++l) {
      const auto& link = c_.links[l];
      const auto a = static_cast<std::size_t>(link.a), b = static_cast<std::size_t>(link.b);
      if (a != node && b != node) continue;
      if (!is_finite(spring_force(st, a, b, link.k, link.d, anchors.rest_lengths[l], anchors, 1.0 / c_.dt)))
        return " via spring " + std::to_string(l) + " (" + std::to_string(a) + "-" + std::to_string(b) + ")";
    }
    return "";
  }

  PhysicsCoefficients c_;
  std::vector<Vec2> force_, next_, saved_position_, saved_previous_;
};

/// Mechanical energy of the staggered state (positions x_n = previous,
/// x_{n+1} = position): half-step kinetic energy plus the mean of the two
/// potential energies minus a quarter of the increment's stiffness form.
/// For linear springs this is the quantity the scheme conserves exactly when
/// undamped, so it is the right yardstick for dissipation.
inline double mechanical_energy(const LatticeState& st, const PhysicsCoefficients& c, const AnchorSnapshot& anchors) {
  const auto potential = [&](const std::vector<Vec2>& x) {
    double e = 0.0;
    for (std::size_t i = 0; i < c.nodes.size(); ++i) {
      const Vec2 d = x[i] - anchors.anchors[i];
      e += 0.5 * c.nodes[i].anchor_k * dot(d, d);
    }
    for (std::size_t l = 0; l < c.links.size(); ++l) {
      const auto& link = c.links[l];
      const Vec2 delta = x[static_cast<std::size_t>(link.b)] - x[static_cast<std::size_t>(link.a)];
      const double rest = anchors.rest_lengths[l];
      const double stretch = rest > 0.0 ? norm(delta) - rest : 0.0;
      e += 0.5 * link.k * (rest > 0.0 ? stretch * stretch : dot(delta, delta));
    }
    return e;
  };
  double kinetic = 0.0, increment_form = 0.0;
  for (std::size_t i = 0; i < c.nodes.size(); ++i) {
    const Vec2 a = st.position[i] - st.previous[i];
    kinetic += 0.5 * c.mass[i] * dot(a, a) / (c.dt * c.dt);
    increment_form += c.nodes[i].anchor_k * dot(a, a);
  }
  for (std::size_t l = 0; l < c.links.size(); ++l) {
    const auto& link = c.links[l];
    const auto ia = static_cast<std::size_t>(link.a), ib = static_cast<std::size_t>(link.b);
    const Vec2 inc = (st.position[ib] - st.previous[ib]) - (st.position[ia] - st.previous[ia]);
    const Vec2 delta = st.position[ib] - st.position[ia];
    const double len = norm(delta), rest = anchors.rest_lengths[l];
    if (rest <= 0.0 || len <= 1e-12) {
      increment_form += link.k * dot(inc, inc);
      continue;
    }
    const Vec2 u = (1.0 / len) * delta;
    const double axial = dot(inc, u);
    increment_form += link.k * (axial * axial + (1.0 - rest / len) * (dot(inc, inc) - axial * axial));
  }
  return kinetic + 0.5 * (potential(st.previous) + potential(st.position)) - 0.25 * increment_form;
}

}  // namespace retisonic::dynamics
