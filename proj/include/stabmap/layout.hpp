#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "stabmap/errors.hpp"

namespace stabmap {

/// Per-unit state slots, in storage order.
enum class UnitState : int {
  psi_sx, psi_sy, psi_rx, psi_ry,
  omega_r,
  i_gx, i_gy,
  u_dc,
  u_sx, u_sy,
  x1, x2, x3, x4, x5, x6, x7, x8,
  delta,
};

inline constexpr int kUnitStates = 19;
inline constexpr int kLineStates = 2;

inline constexpr std::array<std::string_view, kUnitStates> kUnitStateNames{
    "psi_sx", "psi_sy", "psi_rx", "psi_ry", "omega_r", "i_gx", "i_gy",
    "u_dc",   "u_sx",   "u_sy",   "x1",     "x2",      "x3",   "x4",
    "x5",     "x6",     "x7",     "x8",     "delta"};

/// Flat state layout: all unit blocks, then one (i_lx, i_ly) pair per feeder,
/// then the trunk pair.  n = 19 N + 2 (N + 1).
class StateLayout {
 public:
  explicit StateLayout(std::size_t n_units) : n_units_(n_units) {
    if (n_units == 0) throw StructuralError("StateLayout: need at least one unit");
  }

  std::size_t units() const { return n_units_; }
  std::size_t size() const { return kUnitStates * n_units_ + kLineStates * (n_units_ + 1); }

  std::size_t unit_offset(std::size_t unit) const {
    check_unit(unit);
    return kUnitStates * unit;
  }
  std::size_t unit(std::size_t unit, UnitState s) const {
    return unit_offset(unit) + static_cast<std::size_t>(s);
  }
  std::size_t feeder(std::size_t unit) const {
    check_unit(unit);
    return kUnitStates * n_units_ + kLineStates * unit;
  }
  std::size_t trunk() const { return kUnitStates * n_units_ + kLineStates * n_units_; }

  std::string name(std::size_t index) const {
    if (index >= size()) throw StructuralError("state index " + std::to_string(index) + " out of range");
    const std::size_t unit_block = kUnitStates * n_units_;
    if (index < unit_block) {
      return "unit" + std::to_string(index / kUnitStates + 1) + "." +
             std::string(kUnitStateNames[index % kUnitStates]);
    }
    const std::size_t line = (index - unit_block) / kLineStates;
    const char* axis = (index - unit_block) % kLineStates == 0 ? "i_lx" : "i_ly";
    if (line < n_units_) return "feeder" + std::to_string(line + 1) + "." + axis;
    return std::string("trunk.") + axis;
  }

  /// Inverse of name(); throws StructuralError for unknown names.
  std::size_t index(std::string_view state_name) const {
    for (std::size_t i = 0; i < size(); ++i) {
      if (name(i) == state_name) return i;
    }
    throw StructuralError("unknown state '" + std::string(state_name) + "'");
  }

 private:
  void check_unit(std::size_t unit) const {
    if (unit >= n_units_) {
      throw StructuralError("unit index " + std::to_string(unit + 1) + " out of range (" +
                            std::to_string(n_units_) + " units)");
    }
  }

  std::size_t n_units_;
};

}  // namespace stabmap
