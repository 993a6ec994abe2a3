#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "stabmap/boundary.hpp"
#include "stabmap/config.hpp"
#include "stabmap/family.hpp"
#include "stabmap/modal.hpp"
#include "stabmap/plane.hpp"

namespace stabmap {

struct SweepConfig {
  int rays = 100;  // theta_i = i * 2 pi / rays, i = 1..rays
  double s0 = 0.1;
  double alpha = 1.05;
  double deadband = 1e-8;
  ParameterPlane plane;
  CorrectorOptions corrector;
  unsigned threads = 0;  // 0: hardware concurrency, capped by STABMAP_THREADS

  double theta(int ray) const { return ray * 2.0 * std::numbers::pi / rays; }
};

inline void validate(const SweepConfig& c) {
  if (c.rays < 4) throw StructuralError("sweep: rays must be >= 4");
  if (!(c.alpha > 1.0)) throw StructuralError("sweep: alpha must exceed 1");
  if (!(c.s0 > 0.0)) throw StructuralError("sweep: s0 must be positive");
  if (!(c.deadband >= 0.0)) throw StructuralError("sweep: deadband must be non-negative");
}

/// Operating point and spectrum at the anchor.
struct AnchorState {
  Eigen::VectorXd x;
  ModalReport report;
};

template <ParametricFamily F>
AnchorState anchor_state(const F& family, const ParameterPlane& plane, double deadband = 1e-8) {
  const Eigen::Vector2d k = plane.to_original(plane.anchor);
  AnchorState a;
  a.x = family.equilibrium(k, std::nullopt).x_star;
  a.report = spectrum(jacobian_exact(family.system(k), a.x));
  if (is_stable(a.report, deadband) != Stability::stable) {
    throw AnchorUnstable("anchor operating point is not stable (max Re = " +
                             std::to_string(a.report.max_real) + ")",
                         a.report.max_real);
  }
  return a;
}

/// One ray of the predictor-corrector march.  Steps s <- alpha s from s0 with
/// warm-started equilibria; a step beyond the box is evaluated at the box edge.
template <ParametricFamily F>
BoundaryPoint sweep_ray(const F& family, const SweepConfig& cfg, double theta, const AnchorState& anchor) {
  const ParameterPlane& plane = cfg.plane;
  const double s_edge = smax(plane, theta);
  BoundarySystem<F> bs{&family, plane, theta, anchor.x.size(), 0};

  double s_stable = 0.0;
  Eigen::VectorXd x_stable = anchor.x;
  Eigen::VectorXd x_warm = anchor.x;
  bool marginal_pending = false;
  double s = cfg.s0;
  int steps = 0;
  double max_eq_res = 0.0;

  auto stamp = [&](BoundaryPoint p) {
    p.theta = theta;
    p.predictor_steps = steps;
    p.max_equilibrium_residual = max_eq_res;
    return p;
  };

  for (;;) {
    s *= cfg.alpha;
    const bool clipped = s >= s_edge;
    const double s_eval = clipped ? s_edge : s;
    ++steps;
    const Eigen::Vector2d k = bs.k_original(s_eval);

    EquilibriumResult eq;
    try {
      eq = family.equilibrium(k, x_warm);
    } catch (const NoEquilibrium&) {
      Bracket br{s_stable, s_eval, x_stable, std::nullopt};
      return stamp(correct_bracket(bs, br, cfg.corrector));
    }
    max_eq_res = std::max(max_eq_res, eq.residual_norm);
    x_warm = eq.x_star;
    const ModalReport rep = spectrum(jacobian_exact(family.system(k), eq.x_star));
    const Stability verdict = is_stable(rep, cfg.deadband);

    const bool bracket_now = verdict == Stability::unstable ||
                             (verdict == Stability::marginal && (marginal_pending || clipped));
    if (bracket_now) {
      Bracket br{s_stable, s_eval, x_stable, eq.x_star};
      return stamp(correct_bracket(bs, br, cfg.corrector));
    }
    if (verdict == Stability::marginal) {
      marginal_pending = true;
      continue;
    }
    marginal_pending = false;
    s_stable = s_eval;
    x_stable = eq.x_star;
    if (clipped) {
      BoundaryPoint p;
      p.status = BoundaryStatus::box_exit;
      p.s_star = s_edge;
      p.k_star = plane.point(s_edge, theta);
      p.residual = 0.0;
      p.x_star = eq.x_star;
      return stamp(std::move(p));
    }
  }
}

struct StabilityRegion {
  std::vector<BoundaryPoint> points;  // indexed by ray - 1
  Eigen::Vector2d anchor;             // normalized
  SweepConfig config;
  double wall_seconds = 0.0;
  unsigned workers = 1;

  /// Number of rays whose corrector failed outright.
  int failures() const {
    return static_cast<int>(std::count_if(points.begin(), points.end(), [](const BoundaryPoint& p) {
      return p.status == BoundaryStatus::corrector_failed;
    }));
  }
};

/// Worker count: requested (or hardware concurrency), capped by STABMAP_THREADS and by `tasks`.
inline unsigned worker_count(unsigned requested, std::size_t tasks) {
  unsigned n = requested != 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("STABMAP_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap > 0) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return std::max(1u, std::min<unsigned>(n, static_cast<unsigned>(std::max<std::size_t>(tasks, 1))));
}

/// Runs fn(i) for i in [0, count) on a small pool; results land by index.
template <typename Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
}

template <ParametricFamily F>
StabilityRegion sweep_region(const F& family, const SweepConfig& cfg) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const AnchorState anchor = anchor_state(family, cfg.plane, cfg.deadband);

  StabilityRegion region;
  region.config = cfg;
  region.anchor = cfg.plane.anchor;
  region.points.resize(static_cast<std::size_t>(cfg.rays));
  region.workers = worker_count(cfg.threads, region.points.size());
  parallel_for(region.points.size(), region.workers, [&](std::size_t i) {
    const double theta = cfg.theta(static_cast<int>(i) + 1);
    try {
      region.points[i] = sweep_ray(family, cfg, theta, anchor);
    } catch (const std::exception&) {
      BoundaryPoint p;
      p.theta = theta;
      p.status = BoundaryStatus::corrector_failed;
      region.points[i] = std::move(p);
    }
  });
  region.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return region;
}

inline constexpr const char* kBoundaryCsvHeader =
    "ray,theta_rad,s_star,k1_norm,k2_norm,k1_orig,k2_orig,freq_hz,status,residual";

inline void write_boundary_csv(const StabilityRegion& region, std::ostream& out) {
  out << kBoundaryCsvHeader << '\n';
  char buf[512];
  for (std::size_t i = 0; i < region.points.size(); ++i) {
    const auto& p = region.points[i];
    const Eigen::Vector2d orig = region.config.plane.to_original(p.k_star);
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%s,%.17g\n", i + 1,
                  p.theta, p.s_star, p.k_star[0], p.k_star[1], orig[0], orig[1], p.freq_hz,
                  to_string(p.status), p.residual);
    out << buf;
  }
}

inline nlohmann::json plane_json(const ParameterPlane& p) {
  return {{"axes", {p.axes[0], p.axes[1]}},
          {"range_orig", {{p.lo_orig[0], p.hi_orig[0]}, {p.lo_orig[1], p.hi_orig[1]}}},
          {"delta", {p.delta[0], p.delta[1]}},
          {"bounds_norm", {{p.lb[0], p.ub[0]}, {p.lb[1], p.ub[1]}}},
          {"anchor_norm", {p.anchor[0], p.anchor[1]}},
          {"anchor_orig", {p.anchor[0] * p.delta[0], p.anchor[1] * p.delta[1]}}};
}

inline nlohmann::json sweep_config_json(const SweepConfig& c) {
  return {{"rays", c.rays},   {"s0", c.s0},
          {"alpha", c.alpha}, {"deadband", c.deadband},
          {"plane", plane_json(c.plane)}};
}

}  // namespace stabmap
