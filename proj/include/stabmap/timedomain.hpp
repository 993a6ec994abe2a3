#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_odeiv2.h>

#include "stabmap/binding.hpp"
#include "stabmap/errors.hpp"
#include "stabmap/modal.hpp"
#include "stabmap/model.hpp"
#include "stabmap/system.hpp"

namespace stabmap {

struct Event {
  double time = 0.0;
  ParameterBinding binding;  // e.g. {"grid.voltage", 0.8} or {"unit1.Pm", 0.72}
};

struct Scenario {
  double t_end = 10.0;
  std::vector<Event> events;         // strictly increasing times in [0, t_end]
  std::vector<std::string> outputs;  // signal names; empty means every state
  double dt_out = 1e-3;
  double dt_max = 0.0;  // 0: no cap
  double rtol = 1e-8;
  double atol = 1e-10;
  double escape_norm = 1e3;  // ||x||_inf beyond this counts as escape
};

/// Integration stopped early: the trajectory blew up, left the model's
/// domain, or the step size collapsed.
struct FiniteEscape {
  double time = 0.0;
  std::string reason;
};

struct Timeseries {
  std::vector<std::string> columns;  // signal names, time excluded
  std::vector<double> t;
  std::vector<Eigen::VectorXd> rows;
  std::optional<FiniteEscape> escape;
  Eigen::VectorXd x_final;

  /// Column index of a signal; throws StructuralError if absent.
  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    throw StructuralError("timeseries has no column '" + name + "'");
  }
};

using SignalFn = std::function<double(const SystemSpec&, const Eigen::VectorXd&)>;

/// Signals: any state name (unit1.omega_r, feeder2.i_lx, trunk.i_ly, ...),
/// unit<N>.{Te, Ps, Qs, Pg, Qg, Pr, u_sd, u_sq, i_rd, i_rq, u_mag},
/// collector.{u_x, u_y, u_mag}.
inline SignalFn resolve_signal(const SystemSpec& spec, const std::string& name) {
  const StateLayout layout(spec.units.size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout.name(i) == name) {
      const auto idx = static_cast<Eigen::Index>(i);
      return [idx](const SystemSpec&, const Eigen::VectorXd& x) { return x[idx]; };
    }
  }
  if (name == "collector.u_x") return [](const SystemSpec& s, const Eigen::VectorXd& x) { return collector_voltage(s, x).a; };
  if (name == "collector.u_y") return [](const SystemSpec& s, const Eigen::VectorXd& x) { return collector_voltage(s, x).b; };
  if (name == "collector.u_mag") {
    return [](const SystemSpec& s, const Eigen::VectorXd& x) {
      const auto u = collector_voltage(s, x);
      return std::hypot(u.a, u.b);
    };
  }
  const auto dot = name.find('.');
  if (name.starts_with("unit") && dot != std::string::npos) {
    std::size_t unit = 0;
    try {
      unit = std::stoul(name.substr(4, dot - 4));
    } catch (const std::exception&) {
      throw StructuralError("unknown signal '" + name + "'");
    }
    if (unit == 0 || unit > spec.units.size()) throw StructuralError("unknown signal '" + name + "'");
    const std::size_t j = unit - 1;
    const std::string term = name.substr(dot + 1);
    using Pick = double (*)(const UnitTerms<double>&);
    Pick pick = nullptr;
    if (term == "Te") pick = [](const UnitTerms<double>& t) { return t.Te; };
    if (term == "Ps") pick = [](const UnitTerms<double>& t) { return t.Ps; };
    if (term == "Qs") pick = [](const UnitTerms<double>& t) { return t.Qs; };
    if (term == "Pg") pick = [](const UnitTerms<double>& t) { return t.Pg; };
    if (term == "Qg") pick = [](const UnitTerms<double>& t) { return t.Qg; };
    if (term == "Pr") pick = [](const UnitTerms<double>& t) { return t.Pr; };
    if (term == "u_sd") pick = [](const UnitTerms<double>& t) { return t.u_sd; };
    if (term == "u_sq") pick = [](const UnitTerms<double>& t) { return t.u_sq; };
    if (term == "i_rd") pick = [](const UnitTerms<double>& t) { return t.i_rd; };
    if (term == "i_rq") pick = [](const UnitTerms<double>& t) { return t.i_rq; };
    if (term == "u_mag") pick = [](const UnitTerms<double>& t) { return std::hypot(t.u_sd, t.u_sq); };
    if (pick != nullptr) {
      return [j, pick](const SystemSpec& s, const Eigen::VectorXd& x) { return pick(unit_terms(s, x, j)); };
    }
  }
  throw StructuralError("unknown signal '" + name + "'");
}

namespace detail {

template <OdeSystem S>
struct GslContext {
  const S* sys;
  std::size_t n;
};

template <OdeSystem S>
int gsl_rhs(double, const double y[], double dydt[], void* params) {
  auto* ctx = static_cast<GslContext<S>*>(params);
  for (std::size_t i = 0; i < ctx->n; ++i) {
    if (!std::isfinite(y[i])) return GSL_EBADFUNC;
  }
  ctx->sys->eval(std::span<const double>(y, ctx->n), std::span<double>(dydt, ctx->n));
  return GSL_SUCCESS;
}

template <OdeSystem S>
int gsl_jac(double, const double y[], double* dfdy, double dfdt[], void* params) {
  auto* ctx = static_cast<GslContext<S>*>(params);
  const auto n = static_cast<Eigen::Index>(ctx->n);
  const Eigen::MatrixXd J = jacobian_exact(*ctx->sys, Eigen::Map<const Eigen::VectorXd>(y, n));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(dfdy, n, n) = J;
  std::fill(dfdt, dfdt + ctx->n, 0.0);
  return GSL_SUCCESS;
}

inline void silence_gsl() {
  static const bool once = [] {
    gsl_set_error_handler_off();
    return true;
  }();
  (void)once;
}

/// Integrates one autonomous segment [t0, t1] with a variable-order BDF
/// method, calling sample(t, x) at each requested time in [t0, t1).  Returns
/// the state at t1, or sets `escape`.
template <OdeSystem S, typename Check, typename Sample>
Eigen::VectorXd integrate_segment(const S& sys, Eigen::VectorXd x, double t0, double t1,
                                  const std::vector<double>& times, std::size_t& next_time,
                                  const Scenario& sc, Check&& check, Sample&& sample,
                                  std::optional<FiniteEscape>& escape) {
  silence_gsl();
  while (next_time < times.size() && times[next_time] < t0) ++next_time;
  if (t1 <= t0) return x;
  GslContext<S> ctx{&sys, sys.dim()};
  gsl_odeiv2_system gsys{&gsl_rhs<S>, &gsl_jac<S>, ctx.n, &ctx};
  std::unique_ptr<gsl_odeiv2_driver, decltype(&gsl_odeiv2_driver_free)> driver(
      gsl_odeiv2_driver_alloc_y_new(&gsys, gsl_odeiv2_step_msbdf, std::min(1e-6, t1 - t0), sc.atol, sc.rtol),
      &gsl_odeiv2_driver_free);
  if (!driver) throw NumericalError("integrator allocation failed");
  if (sc.dt_max > 0.0) gsl_odeiv2_driver_set_hmax(driver.get(), sc.dt_max);
  gsl_odeiv2_driver_set_hmin(driver.get(), 1e-14);

  double t = t0;
  auto advance = [&](double target) -> bool {
    if (target > t) {
      const int status = gsl_odeiv2_driver_apply(driver.get(), &t, target, x.data());
      if (status != GSL_SUCCESS) {
        escape = FiniteEscape{t, status == GSL_EBADFUNC ? "non-finite state"
                                                         : std::string("step size collapse (gsl status ") +
                                                               std::to_string(status) + ")"};
        return false;
      }
    }
    if (auto why = check(x)) {
      escape = FiniteEscape{t, *why};
      return false;
    }
    return true;
  };
  while (next_time < times.size() && times[next_time] < t1) {
    if (!advance(times[next_time])) return x;
    sample(times[next_time], x);
    ++next_time;
  }
  advance(t1);
  return x;
}

inline std::vector<double> output_times(double t_end, double dt_out) {
  if (!(dt_out > 0.0)) throw StructuralError("scenario: dt_out must be positive");
  std::vector<double> times;
  const auto count = static_cast<long long>(std::floor(t_end / dt_out + 1e-9));
  for (long long k = 0; k <= count; ++k) times.push_back(static_cast<double>(k) * dt_out);
  return times;
}

}  // namespace detail

/// Nonlinear simulation from x0.  Events change the SystemSpec and restart the
/// integrator at their time.  Escape is reported in the result, not thrown.
inline Timeseries simulate(const SystemSpec& spec, const Eigen::VectorXd& x0, const Scenario& sc) {
  validate(spec);
  if (!(sc.t_end > 0.0)) throw StructuralError("scenario: t_end must be positive");
  double prev = 0.0;
  for (std::size_t i = 0; i < sc.events.size(); ++i) {
    const double t = sc.events[i].time;
    if (t < 0.0 || t > sc.t_end || (i > 0 && !(t > prev))) {
      throw StructuralError("scenario: event times must increase strictly within [0, t_end]");
    }
    prev = t;
    (void)stabmap::bind(spec, sc.events[i].binding);
  }
  const StateLayout layout(spec.units.size());
  if (static_cast<std::size_t>(x0.size()) != layout.size()) {
    throw StructuralError("simulate: x0 has dimension " + std::to_string(x0.size()) + ", expected " +
                          std::to_string(layout.size()));
  }

  Timeseries ts;
  std::vector<SignalFn> signals;
  if (sc.outputs.empty()) {
    for (std::size_t i = 0; i < layout.size(); ++i) {
      ts.columns.push_back(layout.name(i));
      signals.push_back(resolve_signal(spec, ts.columns.back()));
    }
  } else {
    for (const auto& name : sc.outputs) {
      ts.columns.push_back(name);
      signals.push_back(resolve_signal(spec, name));
    }
  }

  const std::vector<double> times = detail::output_times(sc.t_end, sc.dt_out);
  std::size_t next_time = 0;
  SystemSpec current = spec;
  Eigen::VectorXd x = x0;
  double t0 = 0.0;

  auto check = [&](const Eigen::VectorXd& xc) -> std::optional<std::string> {
    if (!xc.allFinite()) return "non-finite state";
    if (xc.lpNorm<Eigen::Infinity>() > sc.escape_norm) return "state norm exceeded escape bound";
    for (std::size_t j = 0; j < current.units.size(); ++j) {
      if (!(xc[static_cast<Eigen::Index>(layout.unit(j, UnitState::u_dc))] > 0.0)) {
        return "DC-link voltage reached zero";
      }
    }
    return std::nullopt;
  };

  std::size_t next_event = 0;
  while (true) {
    while (next_event < sc.events.size() && sc.events[next_event].time <= t0) {
      current = stabmap::bind(current, sc.events[next_event].binding);
      ++next_event;
    }
    const double t1 = next_event < sc.events.size() ? sc.events[next_event].time : sc.t_end;
    const FarmSystem sys(current);
    auto sample = [&](double t, const Eigen::VectorXd& xs) {
      Eigen::VectorXd row(static_cast<Eigen::Index>(signals.size()));
      for (std::size_t c = 0; c < signals.size(); ++c) row[static_cast<Eigen::Index>(c)] = signals[c](current, xs);
      ts.t.push_back(t);
      ts.rows.push_back(std::move(row));
    };
    x = detail::integrate_segment(sys, x, t0, t1, times, next_time, sc, check, sample, ts.escape);
    if (ts.escape) break;
    t0 = t1;
    if (t1 >= sc.t_end) {
      while (next_event < sc.events.size()) {
        current = stabmap::bind(current, sc.events[next_event].binding);
        ++next_event;
      }
      if (next_time < times.size()) sample(times[next_time], x);
      break;
    }
  }
  ts.x_final = x;
  return ts;
}

/// Linear system x' = A x for the linearized response.
struct LinearSystem {
  Eigen::MatrixXd A;
  std::size_t dim() const { return static_cast<std::size_t>(A.rows()); }
  template <typename T>
  void eval(std::span<const T> x, std::span<T> dx) const {
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      T acc = T(0.0);
      for (Eigen::Index j = 0; j < A.cols(); ++j) acc += A(i, j) * x[j];
      dx[i] = acc;
    }
  }
};

/// Integrates dx' = J dx from the Jacobian at x0 and reports x0 + dx for
/// every state at the scenario's output times (events are ignored).
inline Timeseries linear_response(const SystemSpec& spec, const Eigen::VectorXd& x0,
                                  const Eigen::VectorXd& perturbation, const Scenario& sc) {
  const FarmSystem farm(spec);
  if (perturbation.size() != x0.size() || static_cast<std::size_t>(x0.size()) != farm.dim()) {
    throw StructuralError("linear_response: dimension mismatch");
  }
  const LinearSystem lin{jacobian_exact(farm, x0)};
  Timeseries ts;
  for (std::size_t i = 0; i < farm.dim(); ++i) ts.columns.push_back(farm.layout().name(i));
  const std::vector<double> times = detail::output_times(sc.t_end, sc.dt_out);
  std::size_t next_time = 0;
  auto sample = [&](double t, const Eigen::VectorXd& dx) {
    ts.t.push_back(t);
    ts.rows.push_back(x0 + dx);
  };
  auto check = [&](const Eigen::VectorXd& dx) -> std::optional<std::string> {
    if (!dx.allFinite()) return "non-finite state";
    return std::nullopt;
  };
  Eigen::VectorXd dx = perturbation;
  if (perturbation.isZero(0.0)) {
    for (double t : times) sample(t, Eigen::VectorXd::Zero(x0.size()));
  } else {
    dx = detail::integrate_segment(lin, dx, 0.0, sc.t_end, times, next_time, sc, check, sample, ts.escape);
    if (!ts.escape && next_time < times.size()) sample(times[next_time], dx);
  }
  ts.x_final = x0 + dx;
  return ts;
}

}  // namespace stabmap
