#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "stabmap/errors.hpp"

namespace stabmap {

/// Two swept parameters.  Coordinates are normalized per axis by the width of
/// the original range, k = k_orig / delta, so each axis spans unit width.
struct ParameterPlane {
  std::array<std::string, 2> axes;
  Eigen::Vector2d lo_orig{0.0, 0.0};
  Eigen::Vector2d hi_orig{1.0, 1.0};
  Eigen::Vector2d delta{1.0, 1.0};
  Eigen::Vector2d lb{0.0, 0.0};  // normalized bounds, ub - lb = 1
  Eigen::Vector2d ub{1.0, 1.0};
  Eigen::Vector2d anchor{0.5, 0.5};  // normalized

  static Eigen::Vector2d direction(double theta) { return {std::cos(theta), std::sin(theta)}; }

  /// Normalized point at distance s along theta.
  Eigen::Vector2d point(double s, double theta) const { return anchor + s * direction(theta); }

  Eigen::Vector2d to_original(const Eigen::Vector2d& k) const { return k.cwiseProduct(delta); }
  Eigen::Vector2d to_normalized(const Eigen::Vector2d& k_orig) const { return k_orig.cwiseQuotient(delta); }

  bool contains(const Eigen::Vector2d& k) const {
    return (k.array() >= lb.array()).all() && (k.array() <= ub.array()).all();
  }
};

inline ParameterPlane normalize_plane(const std::array<std::string, 2>& axes,
                                      const std::array<std::array<double, 2>, 2>& bounds_orig,
                                      const Eigen::Vector2d& anchor_orig) {
  ParameterPlane p;
  p.axes = axes;
  for (int i = 0; i < 2; ++i) {
    const double lo = bounds_orig[i][0];
    const double hi = bounds_orig[i][1];
    if (!(std::isfinite(lo) && std::isfinite(hi) && hi > lo)) {
      throw StructuralError("plane axis '" + axes[i] + "': bounds must satisfy lo < hi");
    }
    if (!(anchor_orig[i] >= lo && anchor_orig[i] <= hi)) {
      throw StructuralError("plane axis '" + axes[i] + "': anchor " + std::to_string(anchor_orig[i]) +
                            " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    p.lo_orig[i] = lo;
    p.hi_orig[i] = hi;
    p.delta[i] = hi - lo;
    p.lb[i] = lo / p.delta[i];
    p.ub[i] = hi / p.delta[i];
    p.anchor[i] = anchor_orig[i] / p.delta[i];
  }
  return p;
}

/// Distance along theta from the anchor to the edge of the normalized box.
inline double smax(const ParameterPlane& plane, double theta) {
  const Eigen::Vector2d& a = plane.anchor;
  if (!((a.array() > plane.lb.array()).all() && (a.array() < plane.ub.array()).all())) {
    throw StructuralError("smax: anchor must lie strictly inside the box");
  }
  const Eigen::Vector2d d = ParameterPlane::direction(theta);
  double s = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 2; ++i) {
    if (d[i] > 0.0) s = std::min(s, (plane.ub[i] - a[i]) / d[i]);
    if (d[i] < 0.0) s = std::min(s, (plane.lb[i] - a[i]) / d[i]);
  }
  return s;
}

}  // namespace stabmap
