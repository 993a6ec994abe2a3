#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <optional>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "stabmap/binding.hpp"
#include "stabmap/equilibrium.hpp"
#include "stabmap/system.hpp"

namespace stabmap {

/// A two-parameter family of ODEs x' = f(x, k), k in original units.
template <typename F>
concept ParametricFamily = requires(const F& fam, const Eigen::Vector2d& k,
                                    const std::optional<Eigen::VectorXd>& guess) {
  { fam.system(k) } -> OdeSystem;
  { fam.equilibrium(k, guess) } -> std::same_as<EquilibriumResult>;
};

/// The farm with two scalars of its SystemSpec exposed as parameters.
class FarmFamily {
 public:
  FarmFamily(SystemSpec base, std::array<std::string, 2> axes)
      : base_(std::move(base)), axes_(std::move(axes)) {
    validate(base_);
    for (const auto& a : axes_) (void)read(base_, a);
  }

  const SystemSpec& base() const { return base_; }
  const std::array<std::string, 2>& axes() const { return axes_; }

  SystemSpec spec_at(const Eigen::Vector2d& k) const {
    return stabmap::bind(stabmap::bind(base_, axes_[0], k[0]), axes_[1], k[1]);
  }
  FarmSystem system(const Eigen::Vector2d& k) const { return FarmSystem(spec_at(k)); }
  EquilibriumResult equilibrium(const Eigen::Vector2d& k,
                                const std::optional<Eigen::VectorXd>& guess) const {
    return solve_equilibrium(spec_at(k), guess);
  }

 private:
  SystemSpec base_;
  std::array<std::string, 2> axes_;
};

namespace toys {

/// x1' = mu x1 - x2, x2' = x1 + mu x2 with mu = k[0]; eigenvalues mu +- j.
struct HopfNormalForm {
  struct System {
    double mu;
    std::size_t dim() const { return 2; }
    template <typename T>
    void eval(std::span<const T> x, std::span<T> dx) const {
      dx[0] = mu * x[0] - x[1];
      dx[1] = x[0] + mu * x[1];
    }
  };
  System system(const Eigen::Vector2d& k) const { return {k[0]}; }
  EquilibriumResult equilibrium(const Eigen::Vector2d&, const std::optional<Eigen::VectorXd>&) const {
    return {Eigen::VectorXd::Zero(2), 0.0, 0, 0};
  }
};

/// x' = k - x^2 with k = k[0]; stable branch x = sqrt(k), saddle-node at k = 0.
struct Fold {
  struct System {
    double k;
    std::size_t dim() const { return 1; }
    template <typename T>
    void eval(std::span<const T> x, std::span<T> dx) const {
      dx[0] = k - x[0] * x[0];
    }
  };
  System system(const Eigen::Vector2d& k) const { return {k[0]}; }
  EquilibriumResult equilibrium(const Eigen::Vector2d& k, const std::optional<Eigen::VectorXd>&) const {
    if (k[0] < 0.0) throw NoEquilibrium("fold toy: k < 0", -k[0]);
    return {Eigen::VectorXd::Constant(1, std::sqrt(k[0])), 0.0, 0, 0};
  }
};

/// x1' = -x1 + k1, x2' = -2 x2 + k2; stable everywhere.
struct Stable {
  struct System {
    Eigen::Vector2d k;
    std::size_t dim() const { return 2; }
    template <typename T>
    void eval(std::span<const T> x, std::span<T> dx) const {
      dx[0] = k[0] - x[0];
      dx[1] = k[1] - 2.0 * x[1];
    }
  };
  System system(const Eigen::Vector2d& k) const { return {k}; }
  EquilibriumResult equilibrium(const Eigen::Vector2d& k, const std::optional<Eigen::VectorXd>&) const {
    return {Eigen::Vector2d(k[0], 0.5 * k[1]), 0.0, 0, 0};
  }
};

}  // namespace toys

}  // namespace stabmap
