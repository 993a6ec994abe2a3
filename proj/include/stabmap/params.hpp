#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "stabmap/errors.hpp"

namespace stabmap {

/// Induction machine and single-mass drivetrain, per unit on the unit's own base.
struct MachineParams {
  double Rs = 0.023;
  double Rr = 0.016;
  double Ls = 3.08;
  double Lr = 3.06;
  double Lm = 2.90;
  double H = 3.5;  // s, turbine and generator lumped
  double omega_b = 100.0 * std::numbers::pi;

  bool operator==(const MachineParams&) const = default;
};

/// Grid-side filter, AC terminal capacitor and DC link.
struct ConverterParams {
  double Rc = 0.003;
  double Lc = 0.30;
  double Cf = 0.05;
  double Cdc = 0.04;  // pu energy constant, enters as Cdc*u_dc*du_dc/dt = P

  bool operator==(const ConverterParams&) const = default;
};

/// PI gains of the eight loops, indexed 1..8 through kp()/ki():
/// 1 speed, 2 RSC q-current, 3 stator Q, 4 RSC d-current,
/// 5 DC voltage, 6 GSC q-current, 7 GSC Q, 8 PLL.
struct ControllerGains {
  std::array<double, 8> Kp{3.0, 2.4, 0.5, 2.4, 0.5, 1.0, 0.5, 90.0};
  std::array<double, 8> Ki{0.6, 8.0, 10.0, 8.0, 10.0, 20.0, 20.0, 4000.0};

  double& kp(int loop) { return Kp.at(static_cast<std::size_t>(loop - 1)); }
  double& ki(int loop) { return Ki.at(static_cast<std::size_t>(loop - 1)); }
  double kp(int loop) const { return Kp.at(static_cast<std::size_t>(loop - 1)); }
  double ki(int loop) const { return Ki.at(static_cast<std::size_t>(loop - 1)); }

  bool operator==(const ControllerGains&) const = default;
};

struct Setpoints {
  double omega_mref = 0.95;
  double Qsref = 0.0;
  double udcref = 1.0;
  double Qgref = 0.0;
  double Pm = 0.8;

  bool operator==(const Setpoints&) const = default;
};

struct LineParams {
  double R = 0.01;
  double L = 0.05;

  bool operator==(const LineParams&) const = default;
};

struct UnitParams {
  MachineParams machine;
  ConverterParams converter;
  ControllerGains gains;
  Setpoints setpoints;
  double base_mva = 1.5;

  bool operator==(const UnitParams&) const = default;
};

struct GridSource {
  double voltage = 1.0;
  double angle = 0.0;

  bool operator==(const GridSource&) const = default;
};

/// Modelling switches that are not physical parameters.
struct ModelOptions {
  // Sign of the Cf*omega_s*u_sx cross-coupling term in the y-axis terminal
  // capacitor equation. -1 is the rotating-frame dual of the x-axis equation;
  // +1 reproduces the literal printed form.
  double cf_cross_sign = -1.0;
  // Decay rate (1/s) imposed on the collector-bus current mismatch
  // i_trunk - sum(feeders). The bus has no shunt element, so the mismatch
  // would otherwise be a neutral direction of the state space.
  double kcl_rate = 200.0;

  bool operator==(const ModelOptions&) const = default;
};

/// Star of feeders into one collector bus, one trunk to a stiff source.
struct SystemSpec {
  std::vector<UnitParams> units{UnitParams{}};
  std::vector<LineParams> feeders{LineParams{}};  // on each unit's own base
  LineParams trunk{0.01, 0.10};                    // on the system base
  GridSource grid;
  double system_base_mva = 1.5;
  ModelOptions options;

  std::size_t unit_count() const { return units.size(); }

  bool operator==(const SystemSpec&) const = default;
};

namespace detail {
inline void require(bool ok, const std::string& what) {
  if (!ok) throw StructuralError(what);
}
}  // namespace detail

/// Throws StructuralError on the first violated invariant.
inline void validate(const SystemSpec& spec) {
  using detail::require;
  require(!spec.units.empty(), "system has no units");
  require(spec.feeders.size() == spec.units.size(),
          "feeder count " + std::to_string(spec.feeders.size()) + " != unit count " +
              std::to_string(spec.units.size()));
  for (std::size_t i = 0; i < spec.units.size(); ++i) {
    const auto& u = spec.units[i];
    const std::string tag = "unit" + std::to_string(i + 1) + ": ";
    const auto& m = u.machine;
    require(m.Ls > m.Lm && m.Lm > 0.0, tag + "need Ls > Lm > 0");
    require(m.Lr > m.Lm * m.Lm / m.Ls, tag + "need positive rotor leakage");
    require(m.Rs >= 0.0 && m.Rr >= 0.0, tag + "negative machine resistance");
    require(m.H > 0.0, tag + "H must be positive");
    require(m.omega_b > 0.0, tag + "omega_b must be positive");
    require(m.omega_b == spec.units.front().machine.omega_b,
            tag + "all units must share one base frequency");
    const auto& c = u.converter;
    require(c.Lc > 0.0 && c.Cf > 0.0 && c.Cdc > 0.0 && c.Rc >= 0.0,
            tag + "converter needs Lc, Cf, Cdc > 0 and Rc >= 0");
    for (int k = 1; k <= 8; ++k) {
      require(u.gains.kp(k) >= 0.0 && u.gains.ki(k) >= 0.0,
              tag + "negative gain in loop " + std::to_string(k));
    }
    require(u.setpoints.udcref > 0.0, tag + "udcref must be positive");
    require(u.setpoints.Pm >= 0.0, tag + "Pm must be non-negative");
    require(u.base_mva > 0.0, tag + "base must be positive");
    require(spec.feeders[i].L > 0.0 && spec.feeders[i].R >= 0.0,
            tag + "feeder needs L > 0, R >= 0");
  }
  require(spec.trunk.L > 0.0 && spec.trunk.R >= 0.0, "trunk needs L > 0, R >= 0");
  require(spec.system_base_mva > 0.0, "system base must be positive");
  require(std::isfinite(spec.grid.voltage) && std::isfinite(spec.grid.angle),
          "grid source must be finite");
}

/// N identical copies of the default unit on the default feeder.
inline SystemSpec default_farm(std::size_t n_units) {
  if (n_units == 0) throw StructuralError("default_farm: need at least one unit");
  SystemSpec spec;
  spec.units.assign(n_units, UnitParams{});
  spec.feeders.assign(n_units, LineParams{});
  return spec;
}

}  // namespace stabmap
