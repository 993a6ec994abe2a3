#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stabmap/errors.hpp"
#include "stabmap/system.hpp"

namespace stabmap {

struct NewtonOptions {
  double tol = 1e-10;           // on the infinity norm of f
  int max_iterations = 40;
  double backtrack = 0.5;
  double min_step = 1.0 / (1 << 20);
  double armijo = 1e-4;
};

struct NewtonOutcome {
  Eigen::VectorXd x;
  double residual = INFINITY;
  int iterations = 0;
  bool converged = false;
};

/// Damped Newton on f(x) = 0 with backtracking.  A trial step is accepted on
/// Armijo decrease of ||f||_2 or on the natural monotonicity test
/// ||J^-1 f(trial)|| <= (1 - lambda/4) ||J^-1 f(x)||, which ignores the row
/// scaling of f.  `admissible` vetoes trial points (they count as a failed
/// line-search step).
template <OdeSystem S, typename Admissible>
NewtonOutcome newton_solve(const S& sys, Eigen::VectorXd x, const NewtonOptions& opt,
                           Admissible&& admissible) {
  NewtonOutcome out;
  Eigen::VectorXd f = evaluate(sys, x);
  if (!f.allFinite()) {
    out.x = std::move(x);
    return out;
  }
  for (int it = 0;; ++it) {
    const double res = f.lpNorm<Eigen::Infinity>();
    out.iterations = it;
    if (res <= opt.tol) {
      out.converged = true;
      out.residual = res;
      out.x = std::move(x);
      return out;
    }
    if (it == opt.max_iterations) break;

    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(jacobian_exact(sys, x));
    const Eigen::VectorXd step = lu.solve(-f);
    if (!step.allFinite()) break;

    const double norm0 = f.norm();
    const double step_norm = step.norm();
    double lambda = 1.0;
    bool accepted = false;
    while (lambda >= opt.min_step) {
      Eigen::VectorXd trial = x + lambda * step;
      if (admissible(trial)) {
        Eigen::VectorXd ft = evaluate(sys, trial);
        const bool armijo = ft.norm() <= (1.0 - opt.armijo * lambda) * norm0;
        if (ft.allFinite() && (armijo || lu.solve(ft).norm() <= (1.0 - 0.25 * lambda) * step_norm)) {
          x = std::move(trial);
          f = std::move(ft);
          accepted = true;
          break;
        }
      }
      lambda *= opt.backtrack;
    }
    if (!accepted) break;
  }
  out.residual = f.lpNorm<Eigen::Infinity>();
  out.x = std::move(x);
  return out;
}

template <OdeSystem S>
NewtonOutcome newton_solve(const S& sys, Eigen::VectorXd x, const NewtonOptions& opt = {}) {
  return newton_solve(sys, std::move(x), opt, [](const Eigen::VectorXd& v) { return v.allFinite(); });
}

struct EquilibriumResult {
  Eigen::VectorXd x_star;
  double residual_norm = INFINITY;
  int iterations = 0;
  int homotopy_steps = 0;
};

/// Steady-state estimate from a per-unit phasor calculation: stator and GSC
/// currents from the power and reactive-power references, rotor quantities
/// from the flux equations, network voltages by fixed-point iteration.
inline Eigen::VectorXd phasor_guess(const SystemSpec& spec) {
  using cplx = std::complex<double>;
  using S = UnitState;
  validate(spec);
  const std::size_t n_units = spec.units.size();
  const StateLayout layout(n_units);
  const cplx j(0.0, 1.0);
  const cplx v_grid = std::polar(spec.grid.voltage, spec.grid.angle);
  const cplx z_trunk(spec.trunk.R, spec.trunk.L);

  // Root of -a q^2 + b q - c = 0 nearest c / b.
  auto small_root = [](double a, double b, double c) {
    const double disc = std::max(b * b - 4.0 * a * c, 0.0);
    return 2.0 * c / (b + std::sqrt(disc));
  };

  struct Unit {
    cplx i_s, i_r, i_g, u_g, u_r, i_l;  // dq
    double ws_psi_sd = 0.0;
  };
  std::vector<cplx> u_s(n_units, v_grid);
  std::vector<Unit> dq(n_units);
  std::vector<cplx> i_l_xy(n_units);

  for (int sweep = 0; sweep < 30; ++sweep) {
    cplx i_trunk = 0.0;
    for (std::size_t k = 0; k < n_units; ++k) {
      const auto& p = spec.units[k];
      const auto& m = p.machine;
      const auto& c = p.converter;
      const auto& sp = p.setpoints;
      const double umag = std::max(std::abs(u_s[k]), 0.2);
      const cplx us_dq(0.0, umag);
      Unit& d = dq[k];

      const double wr = sp.omega_mref;
      const double te = -sp.Pm / wr;
      const double i_sd = sp.Qsref / umag;
      const double i_sq = small_root(m.Rs, umag, te + m.Rs * i_sd * i_sd);
      d.i_s = {i_sd, i_sq};
      const cplx psi_s = (us_dq - m.Rs * d.i_s) / j;
      d.i_r = (psi_s - m.Ls * d.i_s) / m.Lm;
      const cplx psi_r = m.Lm * d.i_s + m.Lr * d.i_r;
      d.u_r = m.Rr * d.i_r + j * (1.0 - wr) * psi_r;
      const double p_r = std::real(d.u_r * std::conj(d.i_r));

      const double i_gd = sp.Qgref / umag;
      const double i_gq = small_root(c.Rc, umag, p_r + c.Rc * i_gd * i_gd);
      d.i_g = {i_gd, i_gq};
      d.u_g = us_dq - cplx(c.Rc, c.Lc) * d.i_g;
      d.i_l = d.i_s + d.i_g + j * c.Cf * us_dq;

      const cplx rot = u_s[k] / umag / j;  // e^{j delta}
      i_l_xy[k] = d.i_l * rot;
      i_trunk += p.base_mva / spec.system_base_mva * i_l_xy[k];
    }
    const cplx u_c = v_grid - z_trunk * i_trunk;
    for (std::size_t k = 0; k < n_units; ++k) {
      const cplx z_f(spec.feeders[k].R, spec.feeders[k].L);
      u_s[k] = u_c - z_f * i_l_xy[k];
    }
  }

  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size()));
  cplx i_trunk = 0.0;
  for (std::size_t k = 0; k < n_units; ++k) {
    const auto& p = spec.units[k];
    const auto& m = p.machine;
    const auto& c = p.converter;
    const auto& sp = p.setpoints;
    const Unit& d = dq[k];
    const double umag = std::abs(u_s[k]);
    const double delta = std::arg(u_s[k]) - std::numbers::pi / 2.0;
    const cplx rot = std::polar(1.0, delta);
    auto put = [&](S s, double v) { x[static_cast<Eigen::Index>(layout.unit(k, s))] = v; };

    const cplx i_s = d.i_s * rot;
    const cplx i_r = d.i_r * rot;
    const cplx psi_s = m.Ls * i_s + m.Lm * i_r;
    const cplx psi_r = m.Lm * i_s + m.Lr * i_r;
    put(S::psi_sx, psi_s.real());
    put(S::psi_sy, psi_s.imag());
    put(S::psi_rx, psi_r.real());
    put(S::psi_ry, psi_r.imag());
    put(S::omega_r, sp.omega_mref);
    const cplx i_g = d.i_g * rot;
    put(S::i_gx, i_g.real());
    put(S::i_gy, i_g.imag());
    put(S::u_dc, sp.udcref);
    put(S::u_sx, u_s[k].real());
    put(S::u_sy, u_s[k].imag());

    // Integrator states that null every loop error at this operating point.
    const double wr = sp.omega_mref;
    const double w_slip = 1.0 - wr;
    const double sigma_lr = m.Lr - m.Lm * m.Lm / m.Ls;
    const cplx psi_s_dq = m.Ls * d.i_s + m.Lm * d.i_r;
    const double u_rqc = m.Lm / m.Ls * (umag - wr * psi_s_dq.real()) + w_slip * sigma_lr * d.i_r.real();
    const double u_rdc = m.Lm / m.Ls * w_slip * psi_s_dq.imag() - w_slip * sigma_lr * d.i_r.imag();
    put(S::x1, d.i_r.imag());
    put(S::x2, d.u_r.imag() - u_rqc);
    put(S::x3, d.i_r.real());
    put(S::x4, d.u_r.real() - u_rdc);
    put(S::x5, d.i_g.imag());
    put(S::x6, (umag - c.Lc * d.i_g.real()) - d.u_g.imag());
    put(S::x7, (0.0 + c.Lc * d.i_g.imag()) - d.u_g.real());
    put(S::x8, 0.0);
    put(S::delta, delta);

    const std::size_t fo = layout.feeder(k);
    x[static_cast<Eigen::Index>(fo)] = i_l_xy[k].real();
    x[static_cast<Eigen::Index>(fo + 1)] = i_l_xy[k].imag();
    i_trunk += p.base_mva / spec.system_base_mva * i_l_xy[k];
  }
  x[static_cast<Eigen::Index>(layout.trunk())] = i_trunk.real();
  x[static_cast<Eigen::Index>(layout.trunk() + 1)] = i_trunk.imag();
  return x;
}

namespace detail {

inline void wrap_angles(const StateLayout& layout, Eigen::VectorXd& x) {
  for (std::size_t k = 0; k < layout.units(); ++k) {
    auto& d = x[static_cast<Eigen::Index>(layout.unit(k, UnitState::delta))];
    d = std::remainder(d, 2.0 * std::numbers::pi);
  }
}

// Operating point scaled toward no load: t = 0 is Pm = Q refs = 0 at 1 pu
// grid voltage, t = 1 is the target.
inline SystemSpec homotopy_point(const SystemSpec& target, double t) {
  SystemSpec s = target;
  for (auto& u : s.units) {
    u.setpoints.Pm *= t;
    u.setpoints.Qsref *= t;
    u.setpoints.Qgref *= t;
  }
  s.grid.voltage = 1.0 + t * (target.grid.voltage - 1.0);
  return s;
}

}  // namespace detail

struct EquilibriumOptions {
  NewtonOptions newton;
  int homotopy_steps = 10;
  int halvings = 4;
};

/// Operating point of a farm.  Tries the warm start (if any), then the phasor
/// guess of the target, then a homotopy from no load.  Throws NoEquilibrium
/// carrying the best residual seen.
inline EquilibriumResult solve_equilibrium(const SystemSpec& spec,
                                           const std::optional<Eigen::VectorXd>& x_guess = std::nullopt,
                                           const EquilibriumOptions& opt = {}) {
  const FarmSystem sys(spec);
  auto admissible = [&sys](const Eigen::VectorXd& v) { return sys.admissible(v); };
  double best = INFINITY;
  int total_iterations = 0;

  auto finish = [&](NewtonOutcome&& o, int homotopy_steps) {
    EquilibriumResult r;
    r.x_star = std::move(o.x);
    detail::wrap_angles(sys.layout(), r.x_star);
    r.residual_norm = evaluate(sys, r.x_star).lpNorm<Eigen::Infinity>();
    r.iterations = total_iterations;
    r.homotopy_steps = homotopy_steps;
    return r;
  };
  auto attempt = [&](const SystemSpec& s, Eigen::VectorXd x0) {
    const FarmSystem local(s);
    auto o = newton_solve(local, std::move(x0), opt.newton,
                          [&local](const Eigen::VectorXd& v) { return local.admissible(v); });
    total_iterations += o.iterations;
    return o;
  };

  if (x_guess) {
    if (static_cast<std::size_t>(x_guess->size()) != sys.dim()) {
      throw StructuralError("equilibrium guess has wrong dimension");
    }
    auto o = newton_solve(sys, *x_guess, opt.newton, admissible);
    total_iterations += o.iterations;
    if (o.converged) return finish(std::move(o), 0);
    best = std::min(best, o.residual);
  }
  {
    auto o = attempt(spec, phasor_guess(spec));
    if (o.converged) return finish(std::move(o), 0);
    best = std::min(best, o.residual);
  }

  // Homotopy from the no-load point.
  auto o0 = attempt(detail::homotopy_point(spec, 0.0), phasor_guess(detail::homotopy_point(spec, 0.0)));
  if (!o0.converged) {
    throw NoEquilibrium("no equilibrium: no-load start failed (residual " +
                            std::to_string(std::min(best, o0.residual)) + ")",
                        std::min(best, o0.residual));
  }
  Eigen::VectorXd x = std::move(o0.x);
  double t = 0.0;
  const double base_step = 1.0 / opt.homotopy_steps;
  double step = base_step;
  int steps = 0;
  while (t < 1.0) {
    const double t_next = std::min(1.0, t + step);
    auto o = attempt(detail::homotopy_point(spec, t_next), x);
    if (o.converged) {
      x = std::move(o.x);
      t = t_next;
      ++steps;
      step = std::min(base_step, 2.0 * step);
      continue;
    }
    best = std::min(best, o.residual);
    step *= 0.5;
    if (step < base_step / (1 << opt.halvings) * 0.999) {
      throw NoEquilibrium("no equilibrium: homotopy stalled at t = " + std::to_string(t) +
                              " (best residual " + std::to_string(best) + ")",
                          best);
    }
  }
  NewtonOutcome done;
  done.x = std::move(x);
  done.converged = true;
  return finish(std::move(done), steps);
}

}  // namespace stabmap
