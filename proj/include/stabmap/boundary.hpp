#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stabmap/errors.hpp"
#include "stabmap/family.hpp"
#include "stabmap/modal.hpp"
#include "stabmap/plane.hpp"
#include "stabmap/system.hpp"

namespace stabmap {

enum class BoundaryStatus { hopf, fold, box_exit, no_equilibrium, corrector_failed };

inline const char* to_string(BoundaryStatus s) {
  switch (s) {
    case BoundaryStatus::hopf: return "hopf";
    case BoundaryStatus::fold: return "fold";
    case BoundaryStatus::box_exit: return "box_exit";
    case BoundaryStatus::no_equilibrium: return "no_equilibrium";
    case BoundaryStatus::corrector_failed: return "corrector_failed";
  }
  return "?";
}

struct BoundaryPoint {
  double theta = 0.0;
  double s_star = std::numeric_limits<double>::quiet_NaN();
  Eigen::Vector2d k_star = Eigen::Vector2d::Constant(std::numeric_limits<double>::quiet_NaN());
  double omega_star = std::numeric_limits<double>::quiet_NaN();  // rad/s
  double freq_hz = std::numeric_limits<double>::quiet_NaN();
  BoundaryStatus status = BoundaryStatus::corrector_failed;
  double residual = std::numeric_limits<double>::quiet_NaN();  // ||F||_inf at the returned point
  Eigen::VectorXd x_star;
  Eigen::VectorXd u, v;  // w = u + j v is the eigenvector for +j omega

  // Diagnostics.
  double bracket_lo = std::numeric_limits<double>::quiet_NaN();
  double bracket_hi = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> residual_history;
  int predictor_steps = 0;
  double max_equilibrium_residual = 0.0;
};

/// Unknowns z = (x, v, u, s, omega), 3n + 2 of them.  Equations:
///   f(x, k(s)) = 0,  J u + omega v = 0,  J v - omega u = 0,
///   u'u + v'v = 1,   v_p = 0,
/// with k(s) = k0 + s d(theta) in normalized coordinates.
template <ParametricFamily F>
struct BoundarySystem {
  const F* family = nullptr;
  ParameterPlane plane;
  double theta = 0.0;
  Eigen::Index n = 0;
  Eigen::Index anchor = 0;  // phase index p

  Eigen::Vector2d k_normalized(double s) const { return plane.point(s, theta); }
  Eigen::Vector2d k_original(double s) const { return plane.to_original(k_normalized(s)); }
  auto system_at(double s) const { return family->system(k_original(s)); }

  Eigen::Index size() const { return 3 * n + 2; }
  auto x(const Eigen::VectorXd& z) const { return z.segment(0, n); }
  auto v(const Eigen::VectorXd& z) const { return z.segment(n, n); }
  auto u(const Eigen::VectorXd& z) const { return z.segment(2 * n, n); }
  double s(const Eigen::VectorXd& z) const { return z[3 * n]; }
  double omega(const Eigen::VectorXd& z) const { return z[3 * n + 1]; }

  Eigen::VectorXd pack(const Eigen::VectorXd& x, const Eigen::VectorXd& v, const Eigen::VectorXd& u,
                       double s, double omega) const {
    Eigen::VectorXd z(size());
    z << x, v, u, s, omega;
    return z;
  }
};

template <ParametricFamily F>
Eigen::VectorXd residual_F(const BoundarySystem<F>& bs, const Eigen::VectorXd& z) {
  if (z.size() != bs.size()) throw StructuralError("residual_F: z has wrong dimension");
  const auto sys = bs.system_at(bs.s(z));
  const Eigen::VectorXd x = bs.x(z);
  const Eigen::VectorXd v = bs.v(z);
  const Eigen::VectorXd u = bs.u(z);
  const double w = bs.omega(z);
  const auto n = bs.n;
  Eigen::VectorXd out(bs.size());
  out.segment(0, n) = evaluate(sys, x);
  out.segment(n, n) = jvp(sys, x, u) + w * v;
  out.segment(2 * n, n) = jvp(sys, x, v) - w * u;
  out[3 * n] = u.squaredNorm() + v.squaredNorm() - 1.0;
  out[3 * n + 1] = v[bs.anchor];
  return out;
}

namespace detail {

/// Newton matrix of residual_F: exact f_x, second-order terms by central
/// differences of exact Jacobians, parameter derivatives by central differences in s.
template <ParametricFamily F>
Eigen::MatrixXd boundary_jacobian(const BoundarySystem<F>& bs, const Eigen::VectorXd& z) {
  const auto n = bs.n;
  const double s = bs.s(z);
  const double w = bs.omega(z);
  const Eigen::VectorXd x = bs.x(z);
  const Eigen::VectorXd v = bs.v(z);
  const Eigen::VectorXd u = bs.u(z);
  const auto sys = bs.system_at(s);

  const Eigen::MatrixXd J = jacobian_exact(sys, x);
  constexpr double hx = 1e-5;
  const Eigen::MatrixXd Au = (jacobian_exact(sys, Eigen::VectorXd(x + hx * u)) -
                              jacobian_exact(sys, Eigen::VectorXd(x - hx * u))) / (2.0 * hx);
  const Eigen::MatrixXd Av = (jacobian_exact(sys, Eigen::VectorXd(x + hx * v)) -
                              jacobian_exact(sys, Eigen::VectorXd(x - hx * v))) / (2.0 * hx);

  constexpr double hs = 1e-6;
  const auto sp = bs.system_at(s + hs);
  const auto sm = bs.system_at(s - hs);
  const Eigen::VectorXd fs = (evaluate(sp, x) - evaluate(sm, x)) / (2.0 * hs);
  const Eigen::VectorXd Jsu = (jvp(sp, x, u) - jvp(sm, x, u)) / (2.0 * hs);
  const Eigen::VectorXd Jsv = (jvp(sp, x, v) - jvp(sm, x, v)) / (2.0 * hs);

  const auto I = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(bs.size(), bs.size());
  // rows f
  M.block(0, 0, n, n) = J;
  M.block(0, 3 * n, n, 1) = fs;
  // rows J u + w v
  M.block(n, 0, n, n) = Au;
  M.block(n, n, n, n) = w * I;
  M.block(n, 2 * n, n, n) = J;
  M.block(n, 3 * n, n, 1) = Jsu;
  M.block(n, 3 * n + 1, n, 1) = v;
  // rows J v - w u
  M.block(2 * n, 0, n, n) = Av;
  M.block(2 * n, n, n, n) = J;
  M.block(2 * n, 2 * n, n, n) = -w * I;
  M.block(2 * n, 3 * n, n, 1) = Jsv;
  M.block(2 * n, 3 * n + 1, n, 1) = -u;
  // normalization and phase
  M.block(3 * n, n, 1, n) = 2.0 * v.transpose();
  M.block(3 * n, 2 * n, 1, n) = 2.0 * u.transpose();
  M(3 * n + 1, n + bs.anchor) = 1.0;
  return M;
}

template <typename S>
bool admissible_state(const S& sys, const Eigen::VectorXd& x) {
  if constexpr (requires { sys.admissible(x); }) {
    return sys.admissible(x);
  } else {
    return x.allFinite();
  }
}

}  // namespace detail

struct CorrectorOptions {
  double tol = 1e-8;  // on ||F||_inf
  int max_iterations = 30;
  double backtrack = 0.5;
  double min_step = 1.0 / (1 << 16);
  double bisection_tol = 1e-6;  // in s
  double deadband = 1e-8;
  double fold_omega = 1e-6;  // rad/s; below this a crossing is reported as a fold
};

/// Predictor bracket: s_lo is stable, s_hi is unstable or has no equilibrium.
struct Bracket {
  double s_lo = 0.0;
  double s_hi = 0.0;
  Eigen::VectorXd x_lo;
  std::optional<Eigen::VectorXd> x_hi;  // empty when the equilibrium vanished
};

/// Eigen-triplet seed from mode `mode` (default: the critical mode) of the
/// linearization at (x, s).  The phase index is the largest-modulus component;
/// w is rotated so w_p is real.
template <ParametricFamily F>
Eigen::VectorXd seed_from_mode(BoundarySystem<F>& bs, const Eigen::VectorXd& x, double s,
                               const ModalReport& report, Eigen::Index mode = -1) {
  const Eigen::Index i = mode >= 0 ? mode : report.critical_index;
  Eigen::VectorXcd w = report.right.col(i);
  Eigen::Index p = 0;
  w.cwiseAbs().maxCoeff(&p);
  w *= std::conj(w[p]) / std::abs(w[p]);
  w /= w.norm();
  w[p] = std::complex<double>(w[p].real(), 0.0);
  double omega = report.eigenvalues[i].imag();
  Eigen::VectorXd v = w.imag();
  if (omega < 0.0) {
    omega = -omega;
    v = -v;
  }
  bs.anchor = p;
  return bs.pack(x, v, Eigen::VectorXd(w.real()), s, omega);
}

/// Index of the eigenvalue nearest `target`.
inline Eigen::Index nearest_mode(const ModalReport& report, std::complex<double> target) {
  Eigen::Index best = 0;
  (report.eigenvalues.array() - target).abs().minCoeff(&best);
  return best;
}

/// Rightmost real eigenvalue (the candidate for a fold), or the critical mode if none is real.
inline Eigen::Index rightmost_real_mode(const ModalReport& report) {
  Eigen::Index best = -1;
  for (Eigen::Index i = 0; i < report.eigenvalues.size(); ++i) {
    const auto lam = report.eigenvalues[i];
    if (lam.imag() == 0.0 && (best < 0 || lam.real() > report.eigenvalues[best].real())) best = i;
  }
  return best >= 0 ? best : report.critical_index;
}

struct NewtonTrace {
  Eigen::VectorXd z;
  double residual = INFINITY;
  bool converged = false;
  std::vector<double> history;
};

/// Damped Newton on residual_F with Armijo backtracking on ||F||_2.
template <ParametricFamily F>
NewtonTrace boundary_newton(const BoundarySystem<F>& bs, Eigen::VectorXd z, const CorrectorOptions& opt) {
  NewtonTrace t;
  auto admissible = [&](const Eigen::VectorXd& zz) {
    if (!zz.allFinite()) return false;
    return detail::admissible_state(bs.system_at(bs.s(zz)), Eigen::VectorXd(bs.x(zz)));
  };
  Eigen::VectorXd Fz = residual_F(bs, z);
  for (int it = 0;; ++it) {
    t.residual = Fz.allFinite() ? Fz.template lpNorm<Eigen::Infinity>() : INFINITY;
    t.history.push_back(t.residual);
    if (t.residual <= opt.tol) {
      t.converged = true;
      // One polishing step, kept only if it lowers the residual further.
      const Eigen::VectorXd trial = z + detail::boundary_jacobian(bs, z).partialPivLu().solve(-Fz);
      if (admissible(trial)) {
        const Eigen::VectorXd Ft = residual_F(bs, trial);
        if (Ft.allFinite() && Ft.template lpNorm<Eigen::Infinity>() < t.residual) {
          z = trial;
          t.residual = Ft.template lpNorm<Eigen::Infinity>();
          t.history.push_back(t.residual);
        }
      }
      break;
    }
    if (it == opt.max_iterations || !Fz.allFinite()) break;
    const Eigen::MatrixXd M = detail::boundary_jacobian(bs, z);
    const Eigen::VectorXd dz = M.partialPivLu().solve(-Fz);
    if (!dz.allFinite()) break;
    const double norm0 = Fz.norm();
    double lambda = 1.0;
    bool accepted = false;
    while (lambda >= opt.min_step) {
      Eigen::VectorXd trial = z + lambda * dz;
      if (admissible(trial)) {
        Eigen::VectorXd Ft = residual_F(bs, trial);
        if (Ft.allFinite() && Ft.norm() <= (1.0 - 1e-4 * lambda) * norm0) {
          z = std::move(trial);
          Fz = std::move(Ft);
          accepted = true;
          break;
        }
      }
      lambda *= opt.backtrack;
    }
    if (!accepted) break;
  }
  t.z = std::move(z);
  return t;
}

namespace detail {

template <ParametricFamily F>
ModalReport modal_at(const BoundarySystem<F>& bs, const Eigen::VectorXd& x, double s) {
  return spectrum(jacobian_exact(bs.system_at(s), x));
}

/// Turns a converged Newton trace into a boundary point, or nothing if the
/// solution is outside the bracket or another mode is already unstable there.
template <ParametricFamily F>
std::optional<BoundaryPoint> accept(const BoundarySystem<F>& bs, const NewtonTrace& t,
                                    const std::optional<Bracket>& bracket, const CorrectorOptions& opt) {
  if (!t.converged) return std::nullopt;
  Eigen::VectorXd z = t.z;
  const double s = bs.s(z);
  if (bracket) {
    const double slack = 1e-8 * std::max(1.0, std::abs(bracket->s_hi));
    if (s < bracket->s_lo - slack || s > bracket->s_hi + slack) return std::nullopt;
  } else if (!(s >= 0.0)) {
    return std::nullopt;
  }
  const Eigen::VectorXd x = bs.x(z);
  ModalReport rep;
  try {
    rep = modal_at(bs, x, s);
  } catch (const NumericalError&) {
    return std::nullopt;
  }
  const double lam = std::abs(rep.eigenvalues[rep.critical_index]);
  if (rep.max_real > 1e-6 * std::max(1.0, lam)) return std::nullopt;

  BoundaryPoint p;
  p.theta = bs.theta;
  p.s_star = s;
  p.k_star = bs.k_normalized(s);
  double w = bs.omega(z);
  Eigen::VectorXd v = bs.v(z);
  if (w < 0.0) {
    w = -w;
    v = -v;
  }
  if (w > opt.fold_omega) {
    p.status = BoundaryStatus::hopf;
    p.omega_star = w;
  } else {
    p.status = BoundaryStatus::fold;
    p.omega_star = 0.0;
  }
  p.freq_hz = p.omega_star / (2.0 * std::numbers::pi);
  p.residual = t.residual;
  p.x_star = x;
  p.u = bs.u(z);
  p.v = v;
  p.residual_history = t.history;
  return p;
}

}  // namespace detail

/// Newton from z_init; on failure bisection on the sign of max Re(lambda)
/// over the bracket, then a Newton restart from the bisection midpoint.
template <ParametricFamily F>
BoundaryPoint correct(BoundarySystem<F> bs, const Eigen::VectorXd& z_init,
                      const std::optional<Bracket>& bracket = std::nullopt,
                      const CorrectorOptions& opt = {}) {
  if (z_init.size() != bs.size()) throw StructuralError("correct: z_init has wrong dimension");
  std::vector<double> history;
  auto finish = [&](BoundaryPoint p) {
    if (bracket) {
      p.bracket_lo = bracket->s_lo;
      p.bracket_hi = bracket->s_hi;
    }
    history.insert(history.end(), p.residual_history.begin(), p.residual_history.end());
    p.residual_history = std::move(history);
    return p;
  };

  const NewtonTrace first = boundary_newton(bs, z_init, opt);
  if (auto p = detail::accept(bs, first, bracket, opt)) return finish(std::move(*p));
  history = first.history;

  BoundaryPoint fail;
  fail.theta = bs.theta;
  fail.residual = first.residual;
  if (!bracket) {
    fail.s_star = bs.s(z_init);
    fail.k_star = bs.k_normalized(fail.s_star);
    return finish(std::move(fail));
  }

  // Bisection: "outside" means unstable or no equilibrium.
  double lo = bracket->s_lo;
  double hi = bracket->s_hi;
  Eigen::VectorXd x_lo = bracket->x_lo;
  std::optional<Eigen::VectorXd> x_hi = bracket->x_hi;
  while (hi - lo > opt.bisection_tol) {
    const double mid = 0.5 * (lo + hi);
    bool outside = true;
    try {
      const EquilibriumResult eq = bs.family->equilibrium(bs.k_original(mid), x_lo);
      const ModalReport rep = detail::modal_at(bs, eq.x_star, mid);
      outside = rep.max_real > 0.0;
      if (outside) {
        x_hi = eq.x_star;
      } else {
        x_lo = eq.x_star;
      }
    } catch (const NoEquilibrium&) {
      x_hi.reset();
    }
    (outside ? hi : lo) = mid;
  }
  const double mid = 0.5 * (lo + hi);

  // Restart seeded from the unstable end if it has an equilibrium, else from the stable end.
  const Eigen::VectorXd& x_seed = x_hi ? *x_hi : x_lo;
  const double s_seed = x_hi ? hi : lo;
  std::optional<ModalReport> seed_rep;
  try {
    seed_rep = detail::modal_at(bs, x_seed, s_seed);
  } catch (const NumericalError&) {
  }
  if (seed_rep) {
    const Eigen::Index mode = x_hi ? seed_rep->critical_index : rightmost_real_mode(*seed_rep);
    Eigen::VectorXd z = seed_from_mode(bs, x_seed, mid, *seed_rep, mode);
    const NewtonTrace second = boundary_newton(bs, z, opt);
    history.insert(history.end(), second.history.begin(), second.history.end());
    Bracket narrowed{lo, hi, x_lo, x_hi};
    if (auto p = detail::accept(bs, second, narrowed, opt)) {
      p->residual_history.clear();
      return finish(std::move(*p));
    }
    fail.residual = std::min(fail.residual, second.residual);
    fail.omega_star = std::abs(seed_rep->eigenvalues[mode].imag());
    fail.freq_hz = fail.omega_star / (2.0 * std::numbers::pi);
  }
  fail.status = x_hi ? BoundaryStatus::corrector_failed : BoundaryStatus::no_equilibrium;
  fail.s_star = mid;
  fail.k_star = bs.k_normalized(mid);
  fail.x_star = x_lo;
  return finish(std::move(fail));
}

/// Corrector started from a predictor bracket.  The crossing mode is the
/// critical mode at the unstable end; it is tracked to the stable end by
/// nearest eigenvalue, its real part interpolated linearly to place the seed,
/// and the seed triplet taken from the same mode at the interpolated point.
/// Without an equilibrium at the unstable end the seed is the rightmost real
/// mode at the stable end.
template <ParametricFamily F>
BoundaryPoint correct_bracket(BoundarySystem<F> bs, const Bracket& br, const CorrectorOptions& opt = {}) {
  const ModalReport rep_lo = detail::modal_at(bs, br.x_lo, br.s_lo);
  if (!br.x_hi) {
    const Eigen::VectorXd z = seed_from_mode(bs, br.x_lo, br.s_lo, rep_lo, rightmost_real_mode(rep_lo));
    return correct(bs, z, br, opt);
  }
  const ModalReport rep_hi = detail::modal_at(bs, *br.x_hi, br.s_hi);
  const std::complex<double> target = rep_hi.eigenvalues[rep_hi.critical_index];
  const double re_lo = rep_lo.eigenvalues[nearest_mode(rep_lo, target)].real();
  const double denom = target.real() - re_lo;
  const double r = denom > 0.0 ? std::clamp(-re_lo / denom, 0.0, 1.0) : 1.0;
  const double s_int = br.s_lo + r * (br.s_hi - br.s_lo);

  std::optional<Eigen::VectorXd> z;
  try {
    const EquilibriumResult eq = bs.family->equilibrium(bs.k_original(s_int), *br.x_hi);
    const ModalReport rep = detail::modal_at(bs, eq.x_star, s_int);
    z = seed_from_mode(bs, eq.x_star, s_int, rep, nearest_mode(rep, target));
  } catch (const NoEquilibrium&) {
  } catch (const NumericalError&) {
  }
  if (!z) z = seed_from_mode(bs, *br.x_hi, br.s_hi, rep_hi);
  return correct(bs, *z, br, opt);
}

}  // namespace stabmap
