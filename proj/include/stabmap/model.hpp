#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "stabmap/errors.hpp"
#include "stabmap/frame.hpp"
#include "stabmap/layout.hpp"
#include "stabmap/params.hpp"

namespace stabmap {

/// Intermediate quantities of one unit at one state, on the unit base.
/// Currents follow the motor convention (positive into the device).
template <typename T>
struct UnitTerms {
  Vec2<T> i_s, i_r;  // xy
  Vec2<T> u_r, u_g;  // converter output voltages, xy
  T u_sd, u_sq;      // terminal voltage in the unit's PLL frame
  T i_rd, i_rq;
  T Te;              // motoring torque
  T Qs, Qg;          // reactive power drawn by the stator / GSC ports
  T Ps, Pg, Pr;      // active power into stator, GSC AC port, rotor port
  std::array<T, 7> err;  // PI errors of loops 1..7
};

namespace detail {

inline constexpr double kSyncSpeed = 1.0;  // xy frame speed, pu

template <typename T>
UnitTerms<T> unit_terms(const UnitParams& p, const T* x) {
  using S = UnitState;
  auto at = [x](S s) -> const T& { return x[static_cast<int>(s)]; };

  const auto& m = p.machine;
  const auto& c = p.converter;
  const auto& g = p.gains;
  const auto& sp = p.setpoints;
  constexpr double ws = kSyncSpeed;

  UnitTerms<T> t;
  const double det = m.Ls * m.Lr - m.Lm * m.Lm;
  const T& psx = at(S::psi_sx);
  const T& psy = at(S::psi_sy);
  const T& prx = at(S::psi_rx);
  const T& pry = at(S::psi_ry);
  t.i_s = {T((m.Lr * psx - m.Lm * prx) / det), T((m.Lr * psy - m.Lm * pry) / det)};
  t.i_r = {T((m.Ls * prx - m.Lm * psx) / det), T((m.Ls * pry - m.Lm * psy) / det)};

  const T& wr = at(S::omega_r);
  const T& delta = at(S::delta);
  const auto psi_s = rotate_xy_to_dq<T>(psx, psy, delta);
  const auto i_s = rotate_xy_to_dq<T>(t.i_s.a, t.i_s.b, delta);
  const auto i_r = rotate_xy_to_dq<T>(t.i_r.a, t.i_r.b, delta);
  const auto u_s = rotate_xy_to_dq<T>(at(S::u_sx), at(S::u_sy), delta);
  const auto i_g = rotate_xy_to_dq<T>(at(S::i_gx), at(S::i_gy), delta);
  t.u_sd = u_s.a;
  t.u_sq = u_s.b;
  t.i_rd = i_r.a;
  t.i_rq = i_r.b;

  t.Te = psi_s.a * i_s.b - psi_s.b * i_s.a;
  t.Qs = u_s.b * i_s.a - u_s.a * i_s.b;
  t.Qg = u_s.b * i_g.a - u_s.a * i_g.b;

  const T w_slip = ws - wr;
  const double sigma_lr = m.Lr - m.Lm * m.Lm / m.Ls;
  const double lm_ls = m.Lm / m.Ls;

  // RSC q axis: rotor speed.
  const T e1 = wr - sp.omega_mref;
  const T i_rqref = at(S::x1) + g.kp(1) * e1;
  const T e2 = i_rqref - i_r.b;
  const T u_rqc = lm_ls * (u_s.b - wr * psi_s.a) + w_slip * sigma_lr * i_r.a;
  const T u_rq = at(S::x2) + g.kp(2) * e2 + u_rqc;

  // RSC d axis: stator reactive power.
  const T e3 = t.Qs - sp.Qsref;
  const T i_rdref = at(S::x3) + g.kp(3) * e3;
  const T e4 = i_rdref - i_r.a;
  const T u_rdc = lm_ls * w_slip * psi_s.b - w_slip * sigma_lr * i_r.b;
  const T u_rd = at(S::x4) + g.kp(4) * e4 + u_rdc;

  // GSC q axis: DC-link voltage.
  const T e5 = sp.udcref - at(S::u_dc);
  const T i_gqref = at(S::x5) + g.kp(5) * e5;
  const T e6 = i_gqref - i_g.b;
  const T u_gq = -at(S::x6) - g.kp(6) * e6 + u_s.b - ws * c.Lc * i_g.a;

  // GSC d axis: reactive power straight to voltage, no inner current loop.
  const T e7 = sp.Qgref - t.Qg;
  const T u_gd = -at(S::x7) - g.kp(7) * e7 + u_s.a + ws * c.Lc * i_g.b;

  t.u_r = rotate_dq_to_xy<T>(u_rd, u_rq, delta);
  t.u_g = rotate_dq_to_xy<T>(u_gd, u_gq, delta);

  t.Ps = at(S::u_sx) * t.i_s.a + at(S::u_sy) * t.i_s.b;
  t.Pg = t.u_g.a * at(S::i_gx) + t.u_g.b * at(S::i_gy);
  t.Pr = t.u_r.a * t.i_r.a + t.u_r.b * t.i_r.b;
  t.err = {e1, e2, e3, e4, e5, e6, e7};
  return t;
}

}  // namespace detail

/// Right-hand side of the farm ODE, dx/dt in seconds.  No validation; the
/// caller guarantees x and dx have layout size.  Templated on the scalar so
/// that forward-mode automatic differentiation can run through it.
template <typename T>
void farm_rhs(const SystemSpec& spec, std::span<const T> x, std::span<T> dx) {
  using S = UnitState;
  constexpr double ws = detail::kSyncSpeed;
  const std::size_t n_units = spec.units.size();
  const StateLayout layout(n_units);
  const double wb = spec.units.front().machine.omega_b;

  // Collector-bus voltage from the KCL constraint on the series inductors.
  // Each line current derivative is affine in the bus voltage; the mismatch
  // e = i_trunk - sum(beta_j i_feeder_j) is driven as de/dt = -kcl_rate * e.
  const std::size_t tr = layout.trunk();
  const double gt = wb / spec.trunk.L;
  const T itx = x[tr];
  const T ity = x[tr + 1];
  const double vgx = spec.grid.voltage * std::cos(spec.grid.angle);
  const double vgy = spec.grid.voltage * std::sin(spec.grid.angle);
  const T ctx = vgx - spec.trunk.R * itx + ws * spec.trunk.L * ity;
  const T cty = vgy - spec.trunk.R * ity - ws * spec.trunk.L * itx;

  double den = gt;
  T numx = gt * ctx;
  T numy = gt * cty;
  T ex = itx;
  T ey = ity;
  for (std::size_t j = 0; j < n_units; ++j) {
    const auto& f = spec.feeders[j];
    const double beta = spec.units[j].base_mva / spec.system_base_mva;
    const double gj = wb / f.L;
    const std::size_t fo = layout.feeder(j);
    const std::size_t uo = layout.unit_offset(j);
    const T& ifx = x[fo];
    const T& ify = x[fo + 1];
    const T bx = -x[uo + static_cast<int>(S::u_sx)] - f.R * ifx + ws * f.L * ify;
    const T by = -x[uo + static_cast<int>(S::u_sy)] - f.R * ify - ws * f.L * ifx;
    numx -= beta * gj * bx;
    numy -= beta * gj * by;
    den += beta * gj;
    ex -= beta * ifx;
    ey -= beta * ify;
  }
  const double rate = spec.options.kcl_rate;
  const T ucx = (numx + rate * ex) / den;
  const T ucy = (numy + rate * ey) / den;

  dx[tr] = gt * (ctx - ucx);
  dx[tr + 1] = gt * (cty - ucy);

  for (std::size_t j = 0; j < n_units; ++j) {
    const auto& p = spec.units[j];
    const auto& m = p.machine;
    const auto& c = p.converter;
    const auto& g = p.gains;
    const auto& f = spec.feeders[j];
    const std::size_t uo = layout.unit_offset(j);
    const T* xu = x.data() + uo;
    T* du = dx.data() + uo;
    auto at = [xu](S s) -> const T& { return xu[static_cast<int>(s)]; };
    auto d = [du](S s) -> T& { return du[static_cast<int>(s)]; };

    const UnitTerms<T> t = detail::unit_terms<T>(p, xu);
    const T& wr = at(S::omega_r);
    const T w_slip = ws - wr;

    d(S::psi_sx) = wb * (at(S::u_sx) - m.Rs * t.i_s.a + ws * at(S::psi_sy));
    d(S::psi_sy) = wb * (at(S::u_sy) - m.Rs * t.i_s.b - ws * at(S::psi_sx));
    d(S::psi_rx) = wb * (t.u_r.a - m.Rr * t.i_r.a + w_slip * at(S::psi_ry));
    d(S::psi_ry) = wb * (t.u_r.b - m.Rr * t.i_r.b - w_slip * at(S::psi_rx));

    // Turbine power accelerates; Te is negative while generating.
    d(S::omega_r) = (t.Te + p.setpoints.Pm / wr) / (2.0 * m.H);

    d(S::i_gx) = wb / c.Lc *
                 (at(S::u_sx) - t.u_g.a - c.Rc * at(S::i_gx) + ws * c.Lc * at(S::i_gy));
    d(S::i_gy) = wb / c.Lc *
                 (at(S::u_sy) - t.u_g.b - c.Rc * at(S::i_gy) - ws * c.Lc * at(S::i_gx));

    // GSC port power charges the link, rotor port power drains it.
    d(S::u_dc) = (t.Pg - t.Pr) / (c.Cdc * at(S::u_dc));

    const std::size_t fo = layout.feeder(j);
    const T& ilx = x[fo];
    const T& ily = x[fo + 1];
    d(S::u_sx) = wb / c.Cf *
                 (ilx - t.i_s.a - at(S::i_gx) + c.Cf * ws * at(S::u_sy));
    d(S::u_sy) = wb / c.Cf *
                 (ily - t.i_s.b - at(S::i_gy) + spec.options.cf_cross_sign * c.Cf * ws * at(S::u_sx));

    d(S::x1) = g.ki(1) * t.err[0];
    d(S::x2) = g.ki(2) * t.err[1];
    d(S::x3) = g.ki(3) * t.err[2];
    d(S::x4) = g.ki(4) * t.err[3];
    d(S::x5) = g.ki(5) * t.err[4];
    d(S::x6) = g.ki(6) * t.err[5];
    d(S::x7) = g.ki(7) * t.err[6];

    d(S::delta) = at(S::x8) - g.kp(8) * t.u_sd;
    d(S::x8) = -g.ki(8) * t.u_sd;

    const double gj = wb / f.L;
    dx[fo] = gj * (ucx - at(S::u_sx) - f.R * ilx + ws * f.L * ily);
    dx[fo + 1] = gj * (ucy - at(S::u_sy) - f.R * ily - ws * f.L * ilx);
  }
}

/// Collector-bus voltage (xy, pu) implied by the state.
inline Vec2<double> collector_voltage(const SystemSpec& spec, const Eigen::VectorXd& x);

/// Checked evaluation: throws StructuralError on a dimension mismatch or an
/// invalid spec, DomainError when a DC-link voltage is not positive.
inline Eigen::VectorXd rhs(const SystemSpec& spec, const Eigen::VectorXd& x) {
  validate(spec);
  const StateLayout layout(spec.units.size());
  if (static_cast<std::size_t>(x.size()) != layout.size()) {
    throw StructuralError("state has " + std::to_string(x.size()) + " entries, layout needs " +
                          std::to_string(layout.size()));
  }
  for (std::size_t j = 0; j < spec.units.size(); ++j) {
    const double udc = x[static_cast<Eigen::Index>(layout.unit(j, UnitState::u_dc))];
    if (!(udc > 0.0)) {
      throw DomainError("unit" + std::to_string(j + 1) + " DC-link voltage " + std::to_string(udc) +
                        " is not positive");
    }
  }
  Eigen::VectorXd dx(x.size());
  farm_rhs<double>(spec, std::span<const double>(x.data(), x.size()),
                   std::span<double>(dx.data(), dx.size()));
  return dx;
}

inline Vec2<double> collector_voltage(const SystemSpec& spec, const Eigen::VectorXd& x) {
  // The trunk equation is L/wb di/dt = v_grid - u_c - R i + ...; invert it.
  const StateLayout layout(spec.units.size());
  const Eigen::VectorXd dx = rhs(spec, x);
  const std::size_t tr = layout.trunk();
  const double wb = spec.units.front().machine.omega_b;
  const double vgx = spec.grid.voltage * std::cos(spec.grid.angle);
  const double vgy = spec.grid.voltage * std::sin(spec.grid.angle);
  const double itx = x[tr], ity = x[tr + 1];
  const double L = spec.trunk.L, R = spec.trunk.R;
  return {vgx - R * itx + L * ity - L / wb * dx[tr], vgy - R * ity - L * itx - L / wb * dx[tr + 1]};
}

/// Algebraic terms of one unit at a state (unit base).
inline UnitTerms<double> unit_terms(const SystemSpec& spec, const Eigen::VectorXd& x,
                                    std::size_t unit) {
  const StateLayout layout(spec.units.size());
  if (static_cast<std::size_t>(x.size()) != layout.size()) {
    throw StructuralError("state size does not match layout");
  }
  return detail::unit_terms<double>(spec.units.at(unit), x.data() + layout.unit_offset(unit));
}

}  // namespace stabmap
