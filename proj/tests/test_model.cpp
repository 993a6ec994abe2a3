#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "stabmap/binding.hpp"
#include "stabmap/equilibrium.hpp"
#include "stabmap/frame.hpp"
#include "stabmap/model.hpp"

namespace {

using namespace stabmap;
using S = UnitState;

Eigen::Index at(const StateLayout& l, std::size_t unit, S s) { return static_cast<Eigen::Index>(l.unit(unit, s)); }

TEST(Rotate, IdentityAndQuarterTurn) {
  const auto a = rotate_dq_to_xy(1.0, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(a.a, 1.0);
  EXPECT_DOUBLE_EQ(a.b, 0.0);
  const auto b = rotate_dq_to_xy(1.0, 0.0, std::numbers::pi / 2);
  EXPECT_NEAR(b.a, 0.0, 1e-15);
  EXPECT_NEAR(b.b, 1.0, 1e-15);
}

TEST(Rotate, RoundTripAndIsometry) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 200; ++i) {
    const double d = u(rng), q = u(rng), delta = u(rng);
    const auto xy = rotate_dq_to_xy(d, q, delta);
    const auto back = rotate_dq_to_xy(xy.a, xy.b, -delta);
    EXPECT_NEAR(back.a, d, 1e-13);
    EXPECT_NEAR(back.b, q, 1e-13);
    EXPECT_NEAR(xy.a * xy.a + xy.b * xy.b, d * d + q * q, 1e-12);
    const auto dq = rotate_xy_to_dq(xy.a, xy.b, delta);
    EXPECT_NEAR(dq.a, d, 1e-13);
    EXPECT_NEAR(dq.b, q, 1e-13);
  }
}

TEST(Layout, SizeAndNames) {
  for (std::size_t n : {1u, 2u, 3u, 5u}) {
    const StateLayout l(n);
    EXPECT_EQ(l.size(), 19 * n + 2 * (n + 1));
    for (std::size_t i = 0; i < l.size(); ++i) EXPECT_EQ(l.index(l.name(i)), i);
  }
  const StateLayout l(2);
  EXPECT_EQ(l.name(0), "unit1.psi_sx");
  EXPECT_EQ(l.name(19 + 18), "unit2.delta");
  EXPECT_EQ(l.name(38), "feeder1.i_lx");
  EXPECT_EQ(l.name(43), "trunk.i_ly");
  EXPECT_THROW(l.unit(2, S::x1), StructuralError);
  EXPECT_THROW(l.index("unit3.x1"), StructuralError);
}

TEST(Rhs, RejectsWrongDimensionAndNonPositiveDcLink) {
  const SystemSpec spec = default_farm(2);
  EXPECT_THROW(rhs(spec, Eigen::VectorXd::Ones(10)), StructuralError);
  const StateLayout l(2);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(l.size()), 0.1);
  x[at(l, 1, S::u_dc)] = 0.0;
  EXPECT_THROW(rhs(spec, x), DomainError);
  x[at(l, 1, S::u_dc)] = 1.0;
  x[at(l, 0, S::u_dc)] = 1.0;
  EXPECT_NO_THROW(rhs(spec, x));
}

TEST(Rhs, VanishesAtEquilibrium) {
  const SystemSpec spec = default_farm(1);
  const EquilibriumResult r = solve_equilibrium(spec);
  EXPECT_LE(rhs(spec, r.x_star).lpNorm<Eigen::Infinity>(), 1e-10);
}

// Energy audit at steady state from the states alone: power from the grid
// equals copper losses in every branch minus the mechanical input.
double energy_mismatch(const SystemSpec& spec, const Eigen::VectorXd& x) {
  const StateLayout l(spec.units.size());
  const auto tr = static_cast<Eigen::Index>(l.trunk());
  const double vgx = spec.grid.voltage * std::cos(spec.grid.angle);
  const double vgy = spec.grid.voltage * std::sin(spec.grid.angle);
  const double itx = x[tr], ity = x[tr + 1];
  const double p_grid = vgx * itx + vgy * ity;
  double losses = spec.trunk.R * (itx * itx + ity * ity);
  for (std::size_t j = 0; j < spec.units.size(); ++j) {
    const auto& m = spec.units[j].machine;
    const double det = m.Ls * m.Lr - m.Lm * m.Lm;
    const double psx = x[at(l, j, S::psi_sx)], psy = x[at(l, j, S::psi_sy)];
    const double prx = x[at(l, j, S::psi_rx)], pry = x[at(l, j, S::psi_ry)];
    const double isx = (m.Lr * psx - m.Lm * prx) / det, isy = (m.Lr * psy - m.Lm * pry) / det;
    const double irx = (m.Ls * prx - m.Lm * psx) / det, iry = (m.Ls * pry - m.Lm * psy) / det;
    const double igx = x[at(l, j, S::i_gx)], igy = x[at(l, j, S::i_gy)];
    const auto fo = static_cast<Eigen::Index>(l.feeder(j));
    const double ilx = x[fo], ily = x[fo + 1];
    const double unit_losses = m.Rs * (isx * isx + isy * isy) + m.Rr * (irx * irx + iry * iry) +
                               spec.units[j].converter.Rc * (igx * igx + igy * igy) +
                               spec.feeders[j].R * (ilx * ilx + ily * ily);
    const double beta = spec.units[j].base_mva / spec.system_base_mva;
    losses += beta * (unit_losses - spec.units[j].setpoints.Pm);
  }
  return p_grid - losses;
}

TEST(Rhs, SteadyStateEnergyBalance) {
  for (std::size_t n : {1u, 2u}) {
    SystemSpec spec = default_farm(n);
    if (n == 2) spec = stabmap::bind(spec, "unit2.Pm", 0.6);
    const EquilibriumResult r = solve_equilibrium(spec);
    EXPECT_LE(std::abs(energy_mismatch(spec, r.x_star)), 1e-8) << n << " unit(s)";
  }
}

TEST(Rhs, NoLoadClosedForm) {
  SystemSpec spec = default_farm(1);
  spec = stabmap::bind(spec, "unit1.Pm", 0.0);
  const EquilibriumResult r = solve_equilibrium(spec);
  const StateLayout l(1);
  const Eigen::VectorXd& x = r.x_star;
  const auto& m = spec.units[0].machine;
  const double det = m.Ls * m.Lr - m.Lm * m.Lm;
  const double psx = x[at(l, 0, S::psi_sx)], psy = x[at(l, 0, S::psi_sy)];
  const double prx = x[at(l, 0, S::psi_rx)], pry = x[at(l, 0, S::psi_ry)];
  const double is = std::hypot((m.Lr * psx - m.Lm * prx) / det, (m.Lr * psy - m.Lm * pry) / det);
  const double ir = std::hypot((m.Ls * prx - m.Lm * psx) / det, (m.Ls * pry - m.Lm * psy) / det);
  const double us = std::hypot(x[at(l, 0, S::u_sx)], x[at(l, 0, S::u_sy)]);
  // Zero torque and zero stator reactive power leave no stator current;
  // the rotor carries the whole magnetizing current |u_s| / Lm.
  EXPECT_NEAR(is, 0.0, 1e-9);
  EXPECT_NEAR(ir, us / m.Lm, 1e-9);
  EXPECT_NEAR(x[at(l, 0, S::omega_r)], spec.units[0].setpoints.omega_mref, 1e-10);
  EXPECT_NEAR(x[at(l, 0, S::u_dc)], spec.units[0].setpoints.udcref, 1e-10);
  const auto t = unit_terms(spec, x, 0);
  for (int k = 0; k < 7; ++k) EXPECT_NEAR(t.err[static_cast<std::size_t>(k)], 0.0, 1e-9) << "loop " << k + 1;
}

TEST(Rhs, ZeroGainsFreezeIntegrators) {
  SystemSpec spec = default_farm(2);
  for (auto& u : spec.units) {
    u.gains.Kp.fill(0.0);
    u.gains.Ki.fill(0.0);
  }
  const StateLayout l(2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(0.5, 1.5);
  Eigen::VectorXd x(static_cast<Eigen::Index>(l.size()));
  for (auto& v : x) v = dist(rng);
  const Eigen::VectorXd dx = rhs(spec, x);
  for (std::size_t j = 0; j < 2; ++j) {
    for (S s : {S::x1, S::x2, S::x3, S::x4, S::x5, S::x6, S::x7, S::x8}) EXPECT_EQ(dx[at(l, j, s)], 0.0);
  }
}

TEST(Rhs, FrameRotationEquivariance) {
  // Rotating every xy pair, every PLL angle and the grid angle by phi leaves
  // the dq controllers unchanged and rotates the xy derivatives by phi.
  SystemSpec spec = default_farm(2);
  spec = stabmap::bind(spec, "unit2.Qgref", -0.1);
  const EquilibriumResult r = solve_equilibrium(spec);
  const StateLayout l(2);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 0.05);
  Eigen::VectorXd x = r.x_star;
  for (auto& v : x) v += noise(rng);

  const double phi = 0.7;
  std::vector<Eigen::Index> pairs;
  for (std::size_t j = 0; j < 2; ++j) {
    for (S s : {S::psi_sx, S::psi_rx, S::i_gx, S::u_sx}) pairs.push_back(at(l, j, s));
    pairs.push_back(static_cast<Eigen::Index>(l.feeder(j)));
  }
  pairs.push_back(static_cast<Eigen::Index>(l.trunk()));
  auto rotate_pairs = [&](Eigen::VectorXd v, double angle, bool shift_delta) {
    for (Eigen::Index p : pairs) {
      const auto r2 = rotate_dq_to_xy(v[p], v[p + 1], angle);
      v[p] = r2.a;
      v[p + 1] = r2.b;
    }
    if (shift_delta) {
      for (std::size_t j = 0; j < 2; ++j) v[at(l, j, S::delta)] += angle;
    }
    return v;
  };
  SystemSpec rotated = spec;
  rotated.grid.angle += phi;
  const Eigen::VectorXd lhs = rhs(rotated, rotate_pairs(x, phi, true));
  const Eigen::VectorXd expect = rotate_pairs(rhs(spec, x), phi, false);
  EXPECT_LE((lhs - expect).lpNorm<Eigen::Infinity>(), 1e-9 * std::max(1.0, expect.lpNorm<Eigen::Infinity>()));
}

TEST(Rhs, PermutationSymmetry) {
  const SystemSpec spec = default_farm(2);
  const StateLayout l(2);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(0.2, 1.2);
  Eigen::VectorXd x(static_cast<Eigen::Index>(l.size()));
  for (auto& v : x) v = dist(rng);
  auto swap_units = [&](Eigen::VectorXd v) {
    for (int k = 0; k < kUnitStates; ++k) std::swap(v[k], v[kUnitStates + k]);
    const auto f0 = static_cast<Eigen::Index>(l.feeder(0)), f1 = static_cast<Eigen::Index>(l.feeder(1));
    std::swap(v[f0], v[f1]);
    std::swap(v[f0 + 1], v[f1 + 1]);
    return v;
  };
  const Eigen::VectorXd a = rhs(spec, swap_units(x));
  const Eigen::VectorXd b = swap_units(rhs(spec, x));
  EXPECT_LE((a - b).lpNorm<Eigen::Infinity>(), 1e-12 * std::max(1.0, b.lpNorm<Eigen::Infinity>()));
}

TEST(Binding, RoundTripAndErrors) {
  const SystemSpec spec = default_farm(3);
  const SystemSpec b = stabmap::bind(spec, "unit1.Kp4", 0.3);
  EXPECT_EQ(read(b, "unit1.Kp4"), 0.3);
  EXPECT_EQ(read(b, "unit2.Kp4"), spec.units[1].gains.kp(4));
  SystemSpec expect = spec;
  expect.units[0].gains.kp(4) = 0.3;
  EXPECT_TRUE(b == expect);

  const SystemSpec q = stabmap::bind(default_farm(2), "unit2.Qgref", -0.13);
  EXPECT_EQ(q.units[1].setpoints.Qgref, -0.13);
  EXPECT_EQ(q.units[0].setpoints.Qgref, 0.0);

  EXPECT_EQ(read(stabmap::bind(spec, "unit*.Pm", 0.5), "unit*.Pm"), 0.5);
  EXPECT_EQ(read(stabmap::bind(spec, "trunk.R", 0.02), "trunk.R"), 0.02);
  EXPECT_EQ(read(stabmap::bind(spec, "unit3.feeder.L", 0.07), "unit3.feeder.L"), 0.07);
  EXPECT_EQ(read(stabmap::bind(spec, "grid.voltage", 0.8), "grid.voltage"), 0.8);

  try {
    (void)stabmap::bind(spec, "unit9.Kp4", 1.0);
    FAIL() << "expected StructuralError";
  } catch (const StructuralError& e) {
    EXPECT_NE(std::string(e.what()).find("unit9.Kp4"), std::string::npos);
  }
  EXPECT_THROW((void)stabmap::bind(spec, "unit1.Kp9", 1.0), StructuralError);
  EXPECT_THROW((void)stabmap::bind(spec, "bogus", 1.0), StructuralError);
  EXPECT_THROW((void)read(stabmap::bind(spec, "unit2.Pm", 0.1), "unit*.Pm"), StructuralError);
}

TEST(Validate, RejectsBrokenSpecs) {
  SystemSpec spec = default_farm(2);
  spec.feeders.pop_back();
  EXPECT_THROW(validate(spec), StructuralError);
  spec = default_farm(1);
  spec.units[0].machine.Lm = spec.units[0].machine.Ls + 0.1;
  EXPECT_THROW(validate(spec), StructuralError);
  spec = default_farm(1);
  spec.units[0].converter.Cdc = 0.0;
  EXPECT_THROW(validate(spec), StructuralError);
  spec = default_farm(1);
  spec.units.clear();
  spec.feeders.clear();
  EXPECT_THROW(validate(spec), StructuralError);
}

}  // namespace
