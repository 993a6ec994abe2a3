#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "stabmap/sweep.hpp"

namespace {

using namespace stabmap;
constexpr double kPi = std::numbers::pi;

// mu on [-1, 0], dummy axis on [-0.5, 0.5], anchor (-0.5, 0) normalized.
SweepConfig hopf_config(int rays) {
  SweepConfig cfg;
  cfg.rays = rays;
  cfg.plane = normalize_plane({"mu", "dummy"}, {{{-1.0, 0.0}, {-0.5, 0.5}}}, Eigen::Vector2d(-0.5, 0.0));
  return cfg;
}

TEST(SweepConfig, Validation) {
  SweepConfig cfg = hopf_config(100);
  EXPECT_NEAR(cfg.theta(1), kPi / 50, 1e-15);
  EXPECT_NEAR(cfg.theta(100), 2 * kPi, 1e-15);
  cfg.rays = 3;
  EXPECT_THROW(validate(cfg), StructuralError);
  cfg = hopf_config(8);
  cfg.alpha = 1.0;
  EXPECT_THROW(validate(cfg), StructuralError);
  cfg = hopf_config(8);
  cfg.s0 = 0.0;
  EXPECT_THROW(validate(cfg), StructuralError);
}

TEST(Sweep, GloballyStableToyExitsEveryRay) {
  const toys::Stable family;
  SweepConfig cfg;
  cfg.rays = 16;
  cfg.plane = normalize_plane({"k1", "k2"}, {{{0.0, 1.0}, {0.0, 1.0}}}, Eigen::Vector2d(0.3, 0.6));
  const StabilityRegion region = sweep_region(family, cfg);
  ASSERT_EQ(region.points.size(), 16u);
  for (std::size_t i = 0; i < region.points.size(); ++i) {
    const auto& p = region.points[i];
    EXPECT_EQ(p.status, BoundaryStatus::box_exit);
    EXPECT_NEAR(p.theta, cfg.theta(static_cast<int>(i) + 1), 1e-15);
    EXPECT_DOUBLE_EQ(p.s_star, smax(cfg.plane, p.theta));
    EXPECT_TRUE(std::isnan(p.omega_star));
    EXPECT_TRUE(std::isnan(p.freq_hz));
  }
  EXPECT_EQ(region.failures(), 0);
}

TEST(Sweep, HopfToyFourRays) {
  const toys::HopfNormalForm family;
  const StabilityRegion region = sweep_region(family, hopf_config(4));
  ASSERT_EQ(region.points.size(), 4u);
  // theta = pi/2, pi, 3pi/2 move away from or along mu = 0 without crossing.
  for (int i : {0, 1, 2}) {
    EXPECT_EQ(region.points[static_cast<std::size_t>(i)].status, BoundaryStatus::box_exit) << "ray " << i + 1;
    EXPECT_NEAR(region.points[static_cast<std::size_t>(i)].s_star, 0.5, 1e-15);
  }
  const BoundaryPoint& east = region.points[3];
  ASSERT_EQ(east.status, BoundaryStatus::hopf);
  EXPECT_NEAR(east.theta, 2 * kPi, 1e-15);
  EXPECT_NEAR(east.s_star, 0.5, 1e-8);
  EXPECT_NEAR(east.omega_star, 1.0, 1e-8);
  EXPECT_NEAR(east.k_star[0], 0.0, 1e-8);
}

TEST(Sweep, HopfToyWestRayIsBoxExit) {
  const toys::HopfNormalForm family;
  const SweepConfig cfg = hopf_config(100);
  const AnchorState anchor = anchor_state(family, cfg.plane);
  const BoundaryPoint west = sweep_ray(family, cfg, kPi, anchor);
  EXPECT_EQ(west.status, BoundaryStatus::box_exit);
  EXPECT_DOUBLE_EQ(west.s_star, 0.5);
  EXPECT_TRUE(std::isnan(west.omega_star));
}

TEST(Sweep, UnstableAnchorIsRejected) {
  const toys::HopfNormalForm family;
  SweepConfig cfg = hopf_config(8);
  cfg.plane = normalize_plane({"mu", "dummy"}, {{{-1.0, 1.0}, {-0.5, 0.5}}}, Eigen::Vector2d(0.5, 0.0));
  try {
    (void)sweep_region(family, cfg);
    FAIL() << "expected AnchorUnstable";
  } catch (const AnchorUnstable& e) {
    EXPECT_NEAR(e.max_real(), 0.5, 1e-12);
  }
}

TEST(Sweep, FoldToyRay) {
  // x' = k - x^2 with k on [-0.5, 1.5]: rays toward k < 0 hit the fold at k = 0.
  const toys::Fold family;
  SweepConfig cfg;
  cfg.rays = 4;
  cfg.plane = normalize_plane({"k", "dummy"}, {{{-0.5, 1.5}, {-1.0, 1.0}}}, Eigen::Vector2d(0.5, 0.0));
  const StabilityRegion region = sweep_region(family, cfg);
  const BoundaryPoint& west = region.points[1];
  ASSERT_EQ(west.status, BoundaryStatus::fold);
  EXPECT_NEAR(west.s_star, 0.25, 1e-8);
  EXPECT_EQ(west.omega_star, 0.0);
  EXPECT_EQ(region.points[3].status, BoundaryStatus::box_exit);
}

TEST(Sweep, CsvIsOrderedAndDeterministic) {
  const toys::HopfNormalForm family;
  SweepConfig cfg = hopf_config(24);
  cfg.threads = 1;
  std::ostringstream a, b;
  write_boundary_csv(sweep_region(family, cfg), a);
  cfg.threads = 3;
  write_boundary_csv(sweep_region(family, cfg), b);
  EXPECT_EQ(a.str(), b.str());
  std::istringstream lines(a.str());
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, kBoundaryCsvHeader);
  int count = 0;
  for (std::string line; std::getline(lines, line); ++count) {
    EXPECT_EQ(line.substr(0, line.find(',')), std::to_string(count + 1));
  }
  EXPECT_EQ(count, 24);
}

TEST(Sweep, PredictorGrowsGeometrically) {
  // Steps before the box edge are s0 * alpha^k; a ray with Smax = 0.5 needs
  // ceil(log(0.5 / 0.1) / log(1.05)) steps.
  const toys::HopfNormalForm family;
  const SweepConfig cfg = hopf_config(4);
  const BoundaryPoint p = sweep_ray(family, cfg, kPi, anchor_state(family, cfg.plane));
  EXPECT_EQ(p.predictor_steps, static_cast<int>(std::ceil(std::log(5.0) / std::log(1.05))));
}

TEST(Sweep, WorkerCountHonoursEnvironmentCap) {
  setenv("STABMAP_THREADS", "2", 1);
  EXPECT_EQ(worker_count(8, 100), 2u);
  EXPECT_EQ(worker_count(1, 100), 1u);
  EXPECT_EQ(worker_count(8, 1), 1u);
  unsetenv("STABMAP_THREADS");
  EXPECT_EQ(worker_count(3, 100), 3u);
}

TEST(Sweep, FarmRaysBracketTheirCrossings) {
  const SystemSpec spec = default_farm(2);
  const FarmFamily family(spec, {"unit1.omega_mref", "unit1.Qgref"});
  SweepConfig cfg;
  cfg.plane = normalize_plane({"unit1.omega_mref", "unit1.Qgref"}, {{{0.7, 1.2}, {-0.2, 0.2}}},
                              Eigen::Vector2d(0.95, 0.0));
  const AnchorState anchor = anchor_state(family, cfg.plane);
  int hopf = 0;
  for (int ray : {22, 36, 40, 60, 80}) {
    const double theta = cfg.theta(ray);
    const BoundaryPoint p = sweep_ray(family, cfg, theta, anchor);
    EXPECT_LE(p.max_equilibrium_residual, 1e-10);
    if (p.status != BoundaryStatus::hopf) {
      EXPECT_EQ(p.status, BoundaryStatus::box_exit) << "ray " << ray;
      continue;
    }
    ++hopf;
    auto max_real = [&](double s) {
      const SystemSpec at = family.spec_at(cfg.plane.to_original(cfg.plane.point(s, theta)));
      return spectrum(jacobian(at, solve_equilibrium(at, p.x_star).x_star)).max_real;
    };
    EXPECT_LT(max_real(0.99 * p.s_star), 0.0) << "ray " << ray;
    if (1.01 * p.s_star < smax(cfg.plane, theta)) EXPECT_GT(max_real(1.01 * p.s_star), 0.0) << "ray " << ray;
  }
  EXPECT_GE(hopf, 1);
}

}  // namespace
