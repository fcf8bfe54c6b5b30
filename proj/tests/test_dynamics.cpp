#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "retisonic/dynamics.hpp"

using namespace retisonic;
using namespace retisonic::dynamics;

namespace {

PhysicsCoefficients single_oscillator(double m, double k, double c) {
  PhysicsCoefficients pc;
  pc.nodes.push_back({1.0 / m, k, c});
  pc.mass.push_back(m);
  return pc;
}

AnchorSnapshot origin() {
  AnchorSnapshot s;
  s.anchors = {{0.0, 0.0}};
  return s;
}

lattice::LatticeModel sheet(const lattice::LatticeOptions& opts = {}) {
  anatomy::LayerCurve ilm, rpe;
  ilm.domain = rpe.domain = {0, 511};
  ilm.y.assign(512, 200.0);
  rpe.y.assign(512, 280.0);
  ilm.conf.assign(512, 1.0);
  rpe.conf = ilm.conf;
  anatomy::RoiSpec roi{0.0, 100.0, 174.4, 356.0, 282.0};
  return lattice::build_lattice(roi, ilm, rpe, opts);
}

std::vector<double> trajectory(const PhysicsCoefficients& pc, double x0, int n) {
  Integrator integ(pc);
  const auto anchors = origin();
  LatticeState st = rest_state(anchors);
  st.position[0].y = st.previous[0].y = x0;
  std::vector<double> xs{x0}, vel(1);
  for (int s = 0; s < n; ++s) {
    integ.step_block(st, anchors, std::span<const ExcitationEvent>{}, 1, s, vel);
    xs.push_back(st.position[0].y);
  }
  return xs;
}

}  // namespace

TEST(SingleOscillator, FrequencyMatchesClosedForm) {
  const double m = 1.0, k = std::pow(2 * kPi * 150.0, 2), c = 15.0;
  const auto xs = trajectory(single_oscillator(m, k, c), 1.0, kSampleRate);
  const double alpha = c / (2 * m);
  const double f_expected = std::sqrt(k / m - alpha * alpha) / (2 * kPi);
  std::vector<double> crossings;
  for (std::size_t i = 1; i < xs.size(); ++i)
    if ((xs[i - 1] < 0.0) != (xs[i] < 0.0)) crossings.push_back((i - 1 + xs[i - 1] / (xs[i - 1] - xs[i])) / kSampleRate);
  ASSERT_GT(crossings.size(), 100u);
  const double f = (crossings.size() - 1) / (2.0 * (crossings.back() - crossings.front()));
  EXPECT_NEAR(f, f_expected, 0.02 * f_expected);
}

TEST(SingleOscillator, DecayEnvelopeMatchesClosedForm) {
  const double m = 1.0, k = std::pow(2 * kPi * 150.0, 2), c = 15.0;
  const auto xs = trajectory(single_oscillator(m, k, c), 1.0, kSampleRate);
  const double alpha = c / (2 * m);
  std::vector<std::pair<double, double>> peaks;
  for (std::size_t i = 1; i + 1 < xs.size(); ++i)
    if (xs[i] > xs[i - 1] && xs[i] >= xs[i + 1]) peaks.push_back({double(i) / kSampleRate, xs[i]});
  ASSERT_GT(peaks.size(), 100u);
  double worst = 0.0;
  for (const auto& [t, a] : peaks) {
    const double expect = peaks.front().second * std::exp(-alpha * (t - peaks.front().first));
    worst = std::max(worst, std::abs(a - expect) / expect);
  }
  EXPECT_LT(worst, 0.05);
}

TEST(Lattice, ZeroInputEquilibriumIsExactFixedPoint) {
  const auto model = sheet();
  const auto c = coefficients_of(model);
  const auto snap = lattice::snapshot_of(model);
  Integrator integ(c);
  auto st = rest_state(snap);
  std::vector<double> vel(256 * c.nodes.size());
  for (int b = 0; b < 40; ++b) {
    integ.step_block(st, snap, std::span<const ExcitationEvent>{}, 256, b * 256, vel);
    for (double v : vel) ASSERT_EQ(v, 0.0);
  }
  EXPECT_EQ(st.position, snap.anchors);
  EXPECT_EQ(st.previous, snap.anchors);
}

TEST(Lattice, EnergyNeverIncreasesAfterExcitationEnds) {
  const auto model = sheet();
  const auto c = coefficients_of(model);
  const auto snap = lattice::snapshot_of(model);
  Integrator integ(c);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> node(0, static_cast<int>(c.nodes.size()) - 1);
  for (double amplitude : {1.0, 10.0, 1000.0}) {
    auto st = rest_state(snap);
    std::vector<ExcitationEvent> events;
    for (int e = 0; e < 4; ++e) {
      ExcitationEvent ev;
      ev.targets = {{node(rng), 0.7}, {node(rng), 0.3}};
      ev.amplitude = amplitude;
      ev.duration = 132;
      ev.onset = e * 50;
      ev.direction = {0.6, -0.8};
      events.push_back(ev);
    }
    std::vector<double> vel(c.nodes.size() * 400);
    integ.step_block(st, snap, events, 400, 0, vel);
    double prev = mechanical_energy(st, c, snap);
    ASSERT_GT(prev, 0.0);
    for (int s = 400; s < 400 + 22050; ++s) {
      integ.step_block(st, snap, events, 1, s, vel);
      const double e = mechanical_energy(st, c, snap);
      ASSERT_LE(e, prev * (1.0 + 1e-9)) << "sample " << s << " amplitude " << amplitude;
      prev = e;
    }
  }
}

TEST(Lattice, BoundedForAMillionStepsUnderTheStabilityClamp) {
  lattice::LatticeOptions opts;
  for (auto& p : opts.table.by_label) p.k = p.k_max = 1e9;  // every node pinned at the cap
  const auto model = sheet(opts);
  ASSERT_EQ(model.clamped_nodes, static_cast<int>(model.nodes.size()));
  const auto c = coefficients_of(model);
  EXPECT_LE(stability_number(c), 0.5 + 1e-12);
  const auto snap = lattice::snapshot_of(model);
  Integrator integ(c);
  auto st = rest_state(snap);
  ExcitationEvent kick;
  for (int n = 0; n < static_cast<int>(c.nodes.size()); n += 7) kick.targets.push_back({n, 1.0});
  kick.amplitude = 100.0;
  kick.duration = 132;
  std::vector<ExcitationEvent> events{kick};
  constexpr int kBlock = 4096;
  std::vector<double> vel(c.nodes.size() * kBlock);
  integ.step_block(st, snap, events, kBlock, 0, vel);
  const double e0 = mechanical_energy(st, c, snap);
  double max_disp = 0.0;
  for (std::int64_t s = kBlock; s < 1'000'000; s += kBlock) {
    const int n = static_cast<int>(std::min<std::int64_t>(kBlock, 1'000'000 - s));
    integ.step_block(st, snap, events, n, s, vel);
    for (std::size_t i = 0; i < st.position.size(); ++i) {
      ASSERT_TRUE(is_finite(st.position[i]));
      max_disp = std::max(max_disp, norm(st.position[i] - snap.anchors[i]));
    }
  }
  EXPECT_EQ(st.step, 1'000'000u);
  EXPECT_LE(mechanical_energy(st, c, snap), e0 * (1.0 + 1e-9));
  EXPECT_LT(max_disp, 100.0);
}

TEST(Events, RaisedCosineEnvelope) {
  ExcitationEvent ev;
  ev.onset = 10;
  ev.duration = 132;
  double sum = 0.0;
  for (std::int64_t n = 0; n < 200; ++n)
    if (ev.active_at(n)) sum += ev.envelope_at(n);
  EXPECT_NEAR(sum, 66.0, 1e-9);
  EXPECT_FALSE(ev.active_at(9));
  EXPECT_FALSE(ev.active_at(142));
  EXPECT_NEAR(ev.envelope_at(10 + 66), 1.0, 1e-3);
}

TEST(Events, ForceActsAlongDirectionOnTargets) {
  auto pc = single_oscillator(1.0, 1e6, 0.0);
  pc.force_scale = 1.0;
  Integrator integ(pc);
  const auto anchors = origin();
  auto st = rest_state(anchors);
  ExcitationEvent ev;
  ev.targets = {{0, 1.0}};
  ev.amplitude = 1.0;
  ev.duration = 1;
  ev.direction = {1.0, 0.0};
  std::vector<ExcitationEvent> events{ev};
  std::vector<double> vel(1);
  integ.step_block(st, anchors, events, 1, 0, vel);
  EXPECT_NEAR(st.position[0].x, pc.dt * pc.dt, 1e-20);
  EXPECT_EQ(st.position[0].y, 0.0);
  EXPECT_EQ(vel[0], 0.0);  // axial velocity only
}

TEST(Integrator, NonFiniteForceRollsBack) {
  const auto model = sheet();
  const auto c = coefficients_of(model);
  const auto snap = lattice::snapshot_of(model);
  Integrator integ(c);
  auto st = rest_state(snap);
  ExcitationEvent ev;
  ev.targets = {{5, 1.0}};
  ev.amplitude = std::numeric_limits<double>::infinity();
  ev.duration = 10;
  ev.onset = 20;
  std::vector<ExcitationEvent> events{ev};
  std::vector<double> vel(64 * c.nodes.size());
  try {
    integ.step_block(st, snap, events, 64, 0, vel);
    FAIL();
  } catch (const NumericalFault& e) {
    EXPECT_NE(std::string(e.what()).find("node 5"), std::string::npos) << e.what();
  }
  EXPECT_EQ(st.step, 0u);
  EXPECT_EQ(st.position, snap.anchors);
}

TEST(Integrator, SizeMismatchIsRejected) {
  const auto model = sheet();
  Integrator integ(coefficients_of(model));
  auto snap = lattice::snapshot_of(model);
  auto st = rest_state(snap);
  std::vector<double> vel(10);
  EXPECT_THROW(integ.step_block(st, snap, std::span<const ExcitationEvent>{}, 1, 0, vel), ValidationError);
  snap.anchors.pop_back();
  std::vector<double> big(1000);
  EXPECT_THROW(integ.step_block(st, snap, std::span<const ExcitationEvent>{}, 1, 0, big), ValidationError);
}
