#pragma once

#include <stdexcept>
#include <string>

namespace stabmap {

// Malformed input: bad dimensions, unknown paths, empty groups, anchors outside a box.
class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input is well-formed but outside the model's domain (e.g. u_dc <= 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoEquilibrium : public std::runtime_error {
 public:
  NoEquilibrium(const std::string& what, double best_residual)
      : std::runtime_error(what), best_residual_(best_residual) {}

  double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

class AnchorUnstable : public std::runtime_error {
 public:
  AnchorUnstable(const std::string& what, double max_real)
      : std::runtime_error(what), max_real_(max_real) {}

  double max_real() const noexcept { return max_real_; }

 private:
  double max_real_;
};

}  // namespace stabmap
