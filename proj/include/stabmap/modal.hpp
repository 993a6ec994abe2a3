#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "stabmap/errors.hpp"
#include "stabmap/system.hpp"

namespace stabmap {

/// Central-difference Jacobian, step 1e-6 * max(1, |x_i|) per state.
/// Kept independent of the dual-number path so the two can check each other.
template <OdeSystem S>
Eigen::MatrixXd jacobian(const S& sys, const Eigen::VectorXd& x) {
  const auto n = x.size();
  Eigen::MatrixXd jac(n, n);
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    const Eigen::VectorXd fp = evaluate(sys, xp);
    xp[i] = x[i] - h;
    const Eigen::VectorXd fm = evaluate(sys, xp);
    xp[i] = x[i];
    jac.col(i) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

inline Eigen::MatrixXd jacobian(const SystemSpec& spec, const Eigen::VectorXd& x) {
  return jacobian(FarmSystem(spec), x);
}

struct ModalReport {
  Eigen::VectorXcd eigenvalues;
  Eigen::MatrixXcd right;  // columns are right eigenvectors
  Eigen::MatrixXcd left;   // rows are left eigenvectors, left * right = I
  double max_real = -INFINITY;
  Eigen::Index critical_index = -1;
  Eigen::VectorXd frequencies_hz;
  Eigen::VectorXd damping_ratio;
  Eigen::MatrixXd participation;  // [state, mode], columns sum to one
};

/// Full dense eigen-decomposition with participation factors
/// P[k, i] = |r_ki l_ik| / sum_k |r_ki l_ik|.
inline ModalReport spectrum(const Eigen::MatrixXd& jac) {
  if (jac.rows() != jac.cols() || jac.rows() == 0) {
    throw StructuralError("spectrum: matrix must be square and non-empty");
  }
  if (!jac.allFinite()) throw NumericalError("spectrum: matrix has non-finite entries");

  Eigen::EigenSolver<Eigen::MatrixXd> es(jac, true);
  if (es.info() != Eigen::Success) throw NumericalError("spectrum: eigensolver did not converge");

  ModalReport r;
  r.eigenvalues = es.eigenvalues();
  r.right = es.eigenvectors();
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(r.right);
  r.left = lu.inverse();
  if (!r.left.allFinite()) throw NumericalError("spectrum: eigenvector matrix is singular");

  const auto n = jac.rows();
  r.frequencies_hz.resize(n);
  r.damping_ratio.resize(n);
  r.participation.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::complex<double> lam = r.eigenvalues[i];
    if (lam.real() > r.max_real) {
      r.max_real = lam.real();
      r.critical_index = i;
    }
    r.frequencies_hz[i] = std::abs(lam.imag()) / (2.0 * std::numbers::pi);
    const double mag = std::abs(lam);
    r.damping_ratio[i] = mag > 0.0 ? -lam.real() / mag : 0.0;

    double total = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double p = std::abs(r.right(k, i) * r.left(i, k));
      r.participation(k, i) = p;
      total += p;
    }
    if (total > 0.0) r.participation.col(i) /= total;
  }
  // Among equal real parts prefer the member with non-negative imaginary part.
  if (r.critical_index >= 0 && r.eigenvalues[r.critical_index].imag() < 0.0) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (r.eigenvalues[i] == std::conj(r.eigenvalues[r.critical_index])) {
        r.critical_index = i;
        break;
      }
    }
  }
  return r;
}

enum class Stability { stable, unstable, marginal };

inline Stability is_stable(double max_real, double deadband = 1e-8) {
  if (max_real < -deadband) return Stability::stable;
  if (max_real > deadband) return Stability::unstable;
  return Stability::marginal;
}

inline Stability is_stable(const ModalReport& report, double deadband = 1e-8) {
  return is_stable(report.max_real, deadband);
}

inline const char* to_string(Stability s) {
  switch (s) {
    case Stability::stable: return "stable";
    case Stability::unstable: return "unstable";
    case Stability::marginal: return "marginal";
  }
  return "?";
}

}  // namespace stabmap
