#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

#include "stabmap/model.hpp"

namespace stabmap {

namespace ad {
template <int N>
using Scalar = Eigen::AutoDiffScalar<Eigen::Matrix<double, N, 1>>;
using Dir = Scalar<1>;
}  // namespace ad

/// An autonomous ODE x' = f(x) whose right-hand side can be evaluated on
/// plain doubles and on forward-mode dual numbers.
template <typename S>
concept OdeSystem = requires(const S& sys, std::span<const double> x, std::span<double> dx,
                             std::span<const ad::Dir> xa, std::span<ad::Dir> dxa) {
  { sys.dim() } -> std::convertible_to<std::size_t>;
  sys.eval(x, dx);
  sys.eval(xa, dxa);
};

template <OdeSystem S>
Eigen::VectorXd evaluate(const S& sys, const Eigen::VectorXd& x) {
  Eigen::VectorXd dx(x.size());
  sys.eval(std::span<const double>(x.data(), x.size()), std::span<double>(dx.data(), dx.size()));
  return dx;
}

/// Exact Jacobian-vector product f_x(x) * dir.
template <OdeSystem S>
Eigen::VectorXd jvp(const S& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& dir) {
  const auto n = x.size();
  std::vector<ad::Dir> xa(n), fa(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    xa[i] = ad::Dir(x[i], Eigen::Matrix<double, 1, 1>(dir[i]));
  }
  sys.eval(std::span<const ad::Dir>(xa), std::span<ad::Dir>(fa));
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = fa[i].derivatives()[0];
  return out;
}

/// Exact Jacobian by forward-mode differentiation, a chunk of columns per pass.
template <OdeSystem S>
Eigen::MatrixXd jacobian_exact(const S& sys, const Eigen::VectorXd& x) {
  constexpr int kChunk = 8;
  using AD = ad::Scalar<kChunk>;
  using Deriv = Eigen::Matrix<double, kChunk, 1>;
  const auto n = x.size();
  std::vector<AD> xa(n), fa(n);
  Eigen::MatrixXd jac(n, n);
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    for (Eigen::Index i = 0; i < n; ++i) {
      Deriv seed = Deriv::Zero();
      if (i >= start && i < start + kChunk) seed[i - start] = 1.0;
      xa[i] = AD(x[i], seed);
    }
    sys.eval(std::span<const AD>(xa), std::span<AD>(fa));
    const Eigen::Index width = std::min<Eigen::Index>(kChunk, n - start);
    for (Eigen::Index i = 0; i < n; ++i) {
      jac.block(i, start, 1, width) = fa[i].derivatives().head(width).transpose();
    }
  }
  return jac;
}

/// The farm ODE for one fixed SystemSpec.
class FarmSystem {
 public:
  explicit FarmSystem(SystemSpec spec) : spec_(std::move(spec)), layout_(spec_.units.size()) {
    validate(spec_);
  }

  const SystemSpec& spec() const { return spec_; }
  const StateLayout& layout() const { return layout_; }
  std::size_t dim() const { return layout_.size(); }

  template <typename T>
  void eval(std::span<const T> x, std::span<T> dx) const {
    farm_rhs<T>(spec_, x, dx);
  }

  /// States the solver must never accept.
  bool admissible(const Eigen::VectorXd& x) const {
    for (std::size_t j = 0; j < spec_.units.size(); ++j) {
      if (!(x[static_cast<Eigen::Index>(layout_.unit(j, UnitState::u_dc))] > 0.0)) return false;
    }
    return x.allFinite();
  }

 private:
  SystemSpec spec_;
  StateLayout layout_;
};

}  // namespace stabmap
