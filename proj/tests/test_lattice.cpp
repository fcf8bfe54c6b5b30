#include <gtest/gtest.h>

#include <bit>

#include <chrono>
#include <cmath>
#include <random>
#include <set>

#include "retisonic/lattice.hpp"

using namespace retisonic;
using namespace retisonic::lattice;
using anatomy::LayerCurve;

namespace {

LayerCurve curve_from(std::vector<double> y) {
  LayerCurve c;
  c.domain = {0, static_cast<int>(y.size()) - 1};
  c.conf.assign(y.size(), 1.0);
  c.y = std::move(y);
  return c;
}

LayerCurve flat(double y, int w = 512) { return curve_from(std::vector<double>(static_cast<std::size_t>(w), y)); }

std::vector<AnchorNode> random_nodes(std::mt19937_64& rng, int rows, int cols) {
  std::uniform_real_distribution<double> k(1.0, 3000.0), d(0.0, 1.0), pos(0.0, 100.0);
  std::uniform_int_distribution<int> order(1, 2);
  std::vector<AnchorNode> nodes(static_cast<std::size_t>(rows * cols));
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      auto& n = nodes[static_cast<std::size_t>(i * cols + j)];
      n.row = i;
      n.col = j;
      n.k = k(rng);
      n.d = d(rng);
      n.order = order(rng);
      n.rest = {j * 10.0 + pos(rng) * 0.01, i * 10.0 + pos(rng) * 0.01};
    }
  return nodes;
}

std::set<std::pair<int, int>> brute_force_edges(const std::vector<AnchorNode>& nodes, int rows, int cols, int order) {
  std::set<std::pair<int, int>> e;
  for (int a = 0; a < rows * cols; ++a)
    for (int b = a + 1; b < rows * cols; ++b) {
      const int di = std::abs(a / cols - b / cols), dj = std::abs(a % cols - b % cols);
      const bool axis = di + dj == 1;
      const bool diag = di == 1 && dj == 1;
      const bool both2 = nodes[static_cast<std::size_t>(a)].order == 2 && nodes[static_cast<std::size_t>(b)].order == 2;
      if (axis || (diag && (order == 2 || (order == 0 && both2)))) e.insert({a, b});
    }
  return e;
}

}  // namespace

TEST(AnchorLaw, RetinaNodesFollowNormalizedDepth) {
  constexpr int kN = 10000;
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1.0), row(0.0, 500.0), gap(1e-3, 200.0);
  LatticeModel model;
  model.nodes.resize(kN);
  for (int n = 0; n < kN; ++n) {
    auto& node = model.nodes[static_cast<std::size_t>(n)];
    node.x = n;
    if (n % 10 == 0) node.delta = -1.0 - 50.0 * u(rng);  // vitreous nodes ride above the ILM
    else node.rho = u(rng);
  }
  std::vector<std::optional<double>> rho0, delta0;
  for (const auto& n : model.nodes) rho0.push_back(n.rho), delta0.push_back(n.delta);

  const auto t0 = std::chrono::steady_clock::now();
  for (int cycle = 0; cycle < 1000; ++cycle) {
    std::vector<double> yi(kN), yr(kN);
    for (int x = 0; x < kN; ++x) yi[static_cast<std::size_t>(x)] = row(rng), yr[static_cast<std::size_t>(x)] = yi[static_cast<std::size_t>(x)] + gap(rng);
    const auto ilm = curve_from(yi), rpe = curve_from(yr);
    ASSERT_TRUE(update_anchors(model, ilm, rpe).accepted);
    if (cycle % 100 == 0 || cycle == 999) {
      for (int n = 0; n < kN; ++n) {
        const auto& node = model.nodes[static_cast<std::size_t>(n)];
        const double a = yi[static_cast<std::size_t>(n)], b = yr[static_cast<std::size_t>(n)];
        const double expect = node.rho ? a + *node.rho * (b - a) : a + *node.delta;
        ASSERT_NEAR(node.rest.y, expect, 1e-9);
        ASSERT_EQ(node.rest.x, node.x);
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (int n = 0; n < kN; ++n) {
    const auto& node = model.nodes[static_cast<std::size_t>(n)];
    ASSERT_EQ(node.rho.has_value(), rho0[static_cast<std::size_t>(n)].has_value());
    if (node.rho) ASSERT_EQ(std::bit_cast<std::uint64_t>(*node.rho), std::bit_cast<std::uint64_t>(*rho0[static_cast<std::size_t>(n)]));
    if (node.delta)
      ASSERT_EQ(std::bit_cast<std::uint64_t>(*node.delta), std::bit_cast<std::uint64_t>(*delta0[static_cast<std::size_t>(n)]));
  }
  RecordProperty("seconds", std::to_string(secs));
}

TEST(AnchorLaw, InvertedColumnRejectsWholeUpdate) {
  LatticeModel model;
  model.nodes.resize(3);
  for (int n = 0; n < 3; ++n) model.nodes[static_cast<std::size_t>(n)].x = n, model.nodes[static_cast<std::size_t>(n)].rho = 0.5;
  ASSERT_TRUE(update_anchors(model, flat(10.0, 3), flat(20.0, 3)).accepted);
  const auto before = snapshot_of(model);
  const auto r = update_anchors(model, curve_from({10.0, 10.0, 10.0}), curve_from({20.0, 5.0, 20.0}));
  EXPECT_FALSE(r.accepted);
  EXPECT_EQ(r.bad_column, 1);
  EXPECT_EQ(snapshot_of(model).anchors, before.anchors);
}

TEST(CouplingLaw, SpringsAreEndpointMeans) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto nodes = random_nodes(rng, 12, 16);
    for (int order : {0, 1, 2}) {
      const auto springs = build_springs(nodes, 12, 16, order);
      for (const auto& s : springs) {
        const auto& a = nodes[static_cast<std::size_t>(s.a)];
        const auto& b = nodes[static_cast<std::size_t>(s.b)];
        ASSERT_EQ(s.k, (a.k + b.k) / 2.0);
        ASSERT_EQ(s.d, (a.d + b.d) / 2.0);
        ASSERT_NEAR(s.rest_length, std::hypot(b.rest.x - a.rest.x, b.rest.y - a.rest.y), 1e-12);
      }
      std::set<std::pair<int, int>> got;
      for (const auto& s : springs) got.insert({std::min(s.a, s.b), std::max(s.a, s.b)});
      EXPECT_EQ(got.size(), springs.size()) << "duplicate spring";
      EXPECT_EQ(got, brute_force_edges(nodes, 12, 16, order)) << "order " << order;
    }
  }
  const auto nodes = random_nodes(rng, 12, 16);
  EXPECT_EQ(build_springs(nodes, 12, 16, 1).size(), 12u * 15 + 16u * 11);
  EXPECT_EQ(build_springs(nodes, 12, 16, 2).size(), 12u * 15 + 16u * 11 + 2u * 11 * 15);
  EXPECT_THROW(build_springs(nodes, 12, 16, 3), ConfigError);
}

TEST(Labels, PixelRulesAndVote) {
  EXPECT_EQ(pixel_label(100.0, 100.0, 180.0, 3.0), TissueLabel::Ilm);
  EXPECT_EQ(pixel_label(90.0, 100.0, 180.0, 3.0), TissueLabel::Vitreous);
  EXPECT_EQ(pixel_label(140.0, 100.0, 180.0, 3.0), TissueLabel::Retina);
  EXPECT_EQ(pixel_label(181.0, 100.0, 180.0, 3.0), TissueLabel::Rpe);
  EXPECT_EQ(pixel_label(250.0, 100.0, 180.0, 3.0), TissueLabel::Rpe);

  EXPECT_EQ(vote_label({10, 0, 10, 0}, 3.0), TissueLabel::Retina);  // tie goes deeper
  EXPECT_EQ(vote_label({10, 4, 0, 0}, 3.0), TissueLabel::Ilm);      // 12 beats 10
  EXPECT_EQ(vote_label({0, 0, 0, 0}, 3.0), std::nullopt);
}

TEST(Params, IntensityScalesAndClamps) {
  const auto t = ParamTable::defaults();
  EXPECT_EQ(map_params(TissueLabel::Retina, std::nullopt).k, 400.0);
  EXPECT_EQ(map_params(TissueLabel::Retina, 0.5).k, 400.0);
  EXPECT_EQ(map_params(TissueLabel::Retina, 1.0).k, 600.0);
  EXPECT_EQ(map_params(TissueLabel::Retina, 5.0).k, t[TissueLabel::Retina].k_max);
  EXPECT_EQ(map_params(TissueLabel::Retina, 0.0).k, t[TissueLabel::Retina].k_min);
}

TEST(BuildLattice, LayersAndStabilityClamp) {
  const auto ilm = flat(200.0), rpe = flat(280.0);
  anatomy::RoiSpec roi;
  roi.x_min = 100.0;
  roi.x_max = 356.0;
  roi.y_min = 174.4;
  roi.y_max = 282.0;
  const auto m = build_lattice(roi, ilm, rpe);
  ASSERT_EQ(m.nodes.size(), 12u * 16u);
  int ilm_nodes = 0, rpe_nodes = 0, vitreous = 0;
  for (const auto& n : m.nodes) {
    ilm_nodes += n.label == TissueLabel::Ilm;
    rpe_nodes += n.label == TissueLabel::Rpe;
    vitreous += n.label == TissueLabel::Vitreous;
    if (n.label == TissueLabel::Vitreous) EXPECT_LT(n.rest.y, 200.0);
    if (n.label == TissueLabel::Retina) EXPECT_TRUE(n.rho && *n.rho >= 0.0 && *n.rho <= 1.0);
  }
  EXPECT_GT(ilm_nodes, 0);
  EXPECT_GT(rpe_nodes, 0);
  EXPECT_GT(vitreous, 0);

  LatticeOptions opts;
  opts.table[TissueLabel::Rpe].k = 1e7;
  opts.table[TissueLabel::Rpe].k_max = 1e7;
  const auto clamped = build_lattice(roi, ilm, rpe, opts);
  const double cap = stiffness_cap(opts.calibration, 1.0, kSampleRate);
  EXPECT_GT(clamped.clamped_nodes, 0);
  for (const auto& n : clamped.nodes) EXPECT_LE(n.k, cap);
  // The cap keeps the stiffest spring inside the explicit-scheme bound.
  const double ks = opts.calibration.stiffness_scale();
  EXPECT_NEAR(std::sqrt(2.0 * cap * ks / 1.0) / kSampleRate, 0.5, 1e-12);
}

TEST(BuildLattice, RejectsBadTables) {
  const auto ilm = flat(200.0), rpe = flat(280.0);
  anatomy::RoiSpec roi{0.0, 100.0, 180.0, 356.0, 282.0};
  LatticeOptions opts;
  opts.table[TissueLabel::Retina].m = 0.0;
  EXPECT_THROW(build_lattice(roi, ilm, rpe, opts), ConfigError);
  opts = {};
  opts.grid = {3, 16};
  EXPECT_THROW(build_lattice(roi, ilm, rpe, opts), ConfigError);
}
