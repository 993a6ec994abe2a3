#pragma once

#include <cmath>
#include <utility>

namespace stabmap {

// Two-axis quantity in some rotating frame.
template <typename T>
struct Vec2 {
  T a;
  T b;
};

// Rotates a dq-frame quantity into the common xy frame, where delta is the
// lead angle of the dq frame relative to xy.  The inverse is rotation by -delta.
template <typename T, typename A>
constexpr Vec2<T> rotate_dq_to_xy(const T& d, const T& q, const A& delta) {
  using std::cos;
  using std::sin;
  const A c = cos(delta);
  const A s = sin(delta);
  return {c * d - s * q, s * d + c * q};
}

template <typename T, typename A>
constexpr Vec2<T> rotate_xy_to_dq(const T& x, const T& y, const A& delta) {
  using std::cos;
  using std::sin;
  const A c = cos(delta);
  const A s = sin(delta);
  return {c * x + s * y, -s * x + c * y};
}

}  // namespace stabmap
