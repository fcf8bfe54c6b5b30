#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "retisonic/robust_fit.hpp"

using namespace retisonic;
using namespace retisonic::anatomy;

namespace {

struct Case {
  std::vector<Vec2> pts;
  double slope;
};

Case contaminated_line(std::mt19937_64& rng, double outlier_fraction) {
  std::uniform_real_distribution<double> angle(-40.0, 40.0), x(0.0, 200.0), off(15.0, 80.0), u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.7);
  Case c;
  c.slope = std::tan(deg2rad(angle(rng)));
  const double b = 100.0;
  const double sign = u(rng) < 0.5 ? -1.0 : 1.0;  // one-sided contamination
  for (int i = 0; i < 100; ++i) {
    const double xi = x(rng);
    double yi = b + c.slope * xi + noise(rng);
    if (i < outlier_fraction * 100) yi += sign * off(rng) * (0.5 + xi / 200.0);
    c.pts.push_back({xi, yi});
  }
  return c;
}

double angle_error(const LineFit& f, double slope) {
  return std::abs(rad2deg(std::atan(f.slope)) - rad2deg(std::atan(slope)));
}

}  // namespace

TEST(OlsFit, ExactOnCleanLine) {
  std::vector<Vec2> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({double(i), 3.0 - 0.5 * i});
  const auto f = ols_fit(pts);
  EXPECT_NEAR(f.intercept, 3.0, 1e-12);
  EXPECT_NEAR(f.slope, -0.5, 1e-12);
}

TEST(OlsFit, DegenerateInputs) {
  std::vector<Vec2> vertical{{5.0, 1.0}, {5.0, 2.0}, {5.0, 9.0}};
  EXPECT_THROW(ols_fit(vertical), DegenerateOrientation);
  std::vector<Vec2> one{{1.0, 1.0}};
  EXPECT_THROW(ols_fit(one), DegenerateOrientation);
}

TEST(HuberFit, WinsOverOlsUnderContamination) {
  std::mt19937_64 rng(2024);
  int wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = contaminated_line(rng, 0.3);
    wins += angle_error(huber_fit(c.pts), c.slope) < angle_error(ols_fit(c.pts), c.slope);
  }
  EXPECT_GE(wins, 95);
}

TEST(HuberFit, MatchesOlsWhenAllResidualsAreSmall) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::vector<Vec2> pts;
  for (int i = 0; i < 50; ++i) pts.push_back({double(i), 2.0 + 0.1 * i + noise(rng)});
  const auto h = huber_fit(pts), o = ols_fit(pts);
  EXPECT_TRUE(h.converged);
  EXPECT_NEAR(h.slope, o.slope, 1e-12);
  EXPECT_NEAR(h.intercept, o.intercept, 1e-12);
  for (double w : h.weights) EXPECT_EQ(w, 1.0);
}

TEST(HuberFit, WeightsFollowTheHuberRule) {
  std::vector<Vec2> pts;
  for (int i = 0; i < 20; ++i) pts.push_back({double(i), double(i)});
  pts.push_back({10.0, 60.0});
  const HuberOptions opts{3.0, 50, 1e-12};
  const auto f = huber_fit(pts, opts);
  const double r = std::abs(f.residual(pts.back()));
  EXPECT_NEAR(f.weights.back(), 3.0 / r, 1e-6);
  EXPECT_LT(std::abs(f.slope - 1.0), 0.05);
}

TEST(HuberFit, StopsAtIterationCap) {
  std::mt19937_64 rng(7);
  const auto c = contaminated_line(rng, 0.3);
  const auto f = huber_fit(c.pts, HuberOptions{3.0, 1, 1e-300});
  EXPECT_EQ(f.iterations, 1);
  EXPECT_FALSE(f.converged);
}
