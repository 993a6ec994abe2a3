#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stabmap/aggregate.hpp"
#include "stabmap/config.hpp"
#include "stabmap/equilibrium.hpp"
#include "stabmap/modal.hpp"
#include "stabmap/sweep.hpp"
#include "stabmap/timedomain.hpp"

namespace stabmap::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kError = 1, kPartial = 2 };

namespace detail {

inline std::pair<double, double> parse_range(const std::string& text, const std::string& flag) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw StructuralError(flag + ": expected lo:hi, got '" + text + "'");
  try {
    std::size_t used_lo = 0, used_hi = 0;
    const std::string lo_text = text.substr(0, colon);
    const std::string hi_text = text.substr(colon + 1);
    const double lo = std::stod(lo_text, &used_lo);
    const double hi = std::stod(hi_text, &used_hi);
    if (used_lo != lo_text.size() || used_hi != hi_text.size()) throw std::invalid_argument("trailing");
    return {lo, hi};
  } catch (const std::logic_error&) {
    throw StructuralError(flag + ": expected lo:hi, got '" + text + "'");
  }
}

inline std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, sep);) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_number(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::logic_error&) {
  }
  throw StructuralError(what + ": '" + text + "' is not a number");
}

/// "path=value" -> binding.
inline ParameterBinding parse_assignment(const std::string& text, const std::string& flag) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw StructuralError(flag + ": expected path=value, got '" + text + "'");
  return {text.substr(0, eq), parse_number(text.substr(eq + 1), flag)};
}

/// "time:path=value" -> event.
inline Event parse_event(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw StructuralError("--event: expected t:path=value, got '" + text + "'");
  return {parse_number(text.substr(0, colon), "--event"), parse_assignment(text.substr(colon + 1), "--event")};
}

/// Empty path: ./default_farm.json, then ./config/default_farm.json.
inline SystemSpec load(std::string path, const std::vector<std::string>& sets) {
  if (path.empty()) {
    path = std::filesystem::exists("default_farm.json") ? "default_farm.json" : "config/default_farm.json";
  }
  SystemSpec spec = load_spec(path);
  for (const auto& s : sets) spec = stabmap::bind(spec, parse_assignment(s, "--set"));
  validate(spec);
  return spec;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes via a temporary file and rename so readers never see a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw StructuralError("cannot write '" + tmp.string() + "'");
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

inline nlohmann::json manifest(const std::string& subcommand, const SystemSpec& spec,
                               const nlohmann::json& options, const std::vector<std::string>& files,
                               double wall_seconds) {
  return {{"subcommand", subcommand},
          {"tool_version", kVersion},
          {"spec_hash", spec_hash(spec)},
          {"config", spec_to_json(spec)},
          {"options", options},
          {"outputs", files},
          {"wall_seconds", wall_seconds}};
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Entry point shared by the executable and the tests.  Data goes to files or
/// `out`; diagnostics go to `err`.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  using detail::fmt;
  const auto t0 = std::chrono::steady_clock::now();

  CLI::App app{"Small-signal stability maps for DFIG wind farms"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> sets;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "farm config file (JSON)");
    sub->add_option("--set", sets, "override one parameter, path=value (repeatable)");
  };

  auto* eq_cmd = app.add_subcommand("equilibrium", "solve the operating point; prints JSON");
  add_common(eq_cmd);

  auto* modes_cmd = app.add_subcommand("modes", "eigenvalues and participation factors");
  add_common(modes_cmd);
  std::string modes_out = ".";
  modes_cmd->add_option("--out", modes_out, "output directory");

  auto* sweep_cmd = app.add_subcommand("sweep", "stability region in a two-parameter plane");
  add_common(sweep_cmd);
  std::string plane_arg, range1_arg, range2_arg, sweep_out = ".";
  int rays = 100;
  double alpha = 1.05, s0 = 0.1, deadband = 1e-8;
  unsigned threads = 0;
  sweep_cmd->add_option("--plane", plane_arg, "path1,path2")->required();
  sweep_cmd->add_option("--range1", range1_arg, "lo:hi of axis 1 (original units)")->required();
  sweep_cmd->add_option("--range2", range2_arg, "lo:hi of axis 2 (original units)")->required();
  sweep_cmd->add_option("--rays", rays, "number of rays");
  sweep_cmd->add_option("--alpha", alpha, "predictor growth rate");
  sweep_cmd->add_option("--s0", s0, "initial distance");
  sweep_cmd->add_option("--deadband", deadband, "stability deadband on max Re(lambda)");
  sweep_cmd->add_option("--threads", threads, "worker count (0: all cores, capped by STABMAP_THREADS)");
  sweep_cmd->add_option("--out", sweep_out, "output directory");

  auto* sim_cmd = app.add_subcommand("simulate", "nonlinear time-domain run from the equilibrium");
  add_common(sim_cmd);
  double t_end = 10.0, dt_out = 1e-3, dt_max = 0.0;
  std::vector<std::string> events, perturb;
  std::string signals_arg, sim_out = ".";
  sim_cmd->add_option("--t-end", t_end, "end time (s)");
  sim_cmd->add_option("--dt-out", dt_out, "output interval (s)");
  sim_cmd->add_option("--dt-max", dt_max, "integrator step cap (s), 0 for none");
  sim_cmd->add_option("--event", events, "t:path=value (repeatable)");
  sim_cmd->add_option("--perturb", perturb, "initial offset state=delta (repeatable)");
  sim_cmd->add_option("--signals", signals_arg, "comma-separated signal names (default: all states)");
  sim_cmd->add_option("--out", sim_out, "output directory");

  auto* agg_cmd = app.add_subcommand("aggregate", "replace groups of units by equivalent units");
  add_common(agg_cmd);
  std::string groups_arg, agg_out = "aggregated.json";
  agg_cmd->add_option("--groups", groups_arg, "consecutive group sizes, e.g. 2:1")->required();
  agg_cmd->add_option("--out", agg_out, "output config file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kError;
  }

  try {
    namespace fs = std::filesystem;
    if (eq_cmd->parsed()) {
      const SystemSpec spec = detail::load(config, sets);
      const EquilibriumResult r = solve_equilibrium(spec);
      const StateLayout layout(spec.units.size());
      nlohmann::ordered_json j;
      for (std::size_t i = 0; i < layout.size(); ++i) j["x_star"][layout.name(i)] = r.x_star[static_cast<Eigen::Index>(i)];
      j["residual_norm"] = r.residual_norm;
      j["iterations"] = r.iterations;
      j["homotopy_steps"] = r.homotopy_steps;
      j["spec_hash"] = spec_hash(spec);
      out << j.dump(2) << '\n';
      return kOk;
    }

    if (modes_cmd->parsed()) {
      const SystemSpec spec = detail::load(config, sets);
      const EquilibriumResult r = solve_equilibrium(spec);
      const FarmSystem sys(spec);
      const ModalReport rep = spectrum(jacobian_exact(sys, r.x_star));
      fs::create_directories(modes_out);

      std::vector<Eigen::Index> order(static_cast<std::size_t>(rep.eigenvalues.size()));
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
      std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        const auto la = rep.eigenvalues[a], lb = rep.eigenvalues[b];
        if (la.real() != lb.real()) return la.real() > lb.real();
        return la.imag() > lb.imag();
      });
      std::ostringstream csv;
      csv << "index,re,im,freq_hz,damping_ratio,top_states\n";
      std::ostringstream part;
      part << "index";
      for (std::size_t k = 0; k < sys.dim(); ++k) part << ',' << sys.layout().name(k);
      part << '\n';
      int index = 0;
      for (const Eigen::Index i : order) {
        ++index;
        const auto lam = rep.eigenvalues[i];
        std::vector<Eigen::Index> states(sys.dim());
        for (std::size_t k = 0; k < states.size(); ++k) states[k] = static_cast<Eigen::Index>(k);
        std::stable_sort(states.begin(), states.end(), [&](Eigen::Index a, Eigen::Index b) {
          return rep.participation(a, i) > rep.participation(b, i);
        });
        std::string top;
        for (std::size_t k = 0; k < 5 && k < states.size(); ++k) {
          if (k) top += ';';
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.6f", rep.participation(states[k], i));
          top += sys.layout().name(static_cast<std::size_t>(states[k])) + ":" + buf;
        }
        csv << index << ',' << fmt(lam.real()) << ',' << fmt(lam.imag()) << ',' << fmt(rep.frequencies_hz[i])
            << ',' << fmt(rep.damping_ratio[i]) << ',' << top << '\n';
        part << index;
        for (std::size_t k = 0; k < sys.dim(); ++k) part << ',' << fmt(rep.participation(static_cast<Eigen::Index>(k), i));
        part << '\n';
      }
      detail::write_atomic(fs::path(modes_out) / "modes.csv", csv.str());
      detail::write_atomic(fs::path(modes_out) / "participation.csv", part.str());
      nlohmann::json opts = {{"equilibrium_residual", r.residual_norm}, {"max_real", rep.max_real},
                             {"stability", to_string(is_stable(rep))}};
      detail::write_atomic(fs::path(modes_out) / "meta.json",
                           detail::manifest("modes", spec, opts, {"modes.csv", "participation.csv"},
                                            detail::seconds_since(t0)).dump(2) + "\n");
      err << "modes: " << rep.eigenvalues.size() << " eigenvalues, max Re = " << rep.max_real << " ("
          << to_string(is_stable(rep)) << ")\n";
      return kOk;
    }

    if (sweep_cmd->parsed()) {
      const SystemSpec spec = detail::load(config, sets);
      const auto axes = detail::split(plane_arg, ',');
      if (axes.size() != 2) throw StructuralError("--plane: expected two comma-separated paths");
      const auto [lo1, hi1] = detail::parse_range(range1_arg, "--range1");
      const auto [lo2, hi2] = detail::parse_range(range2_arg, "--range2");
      const FarmFamily family(spec, {axes[0], axes[1]});
      SweepConfig cfg;
      cfg.rays = rays;
      cfg.alpha = alpha;
      cfg.s0 = s0;
      cfg.deadband = deadband;
      cfg.threads = threads;
      cfg.plane = normalize_plane({axes[0], axes[1]}, {{{lo1, hi1}, {lo2, hi2}}},
                                  Eigen::Vector2d(read(spec, axes[0]), read(spec, axes[1])));
      const StabilityRegion region = sweep_region(family, cfg);
      fs::create_directories(sweep_out);
      std::ostringstream csv;
      write_boundary_csv(region, csv);
      detail::write_atomic(fs::path(sweep_out) / "boundary.csv", csv.str());
      nlohmann::json opts = sweep_config_json(cfg);
      opts["workers"] = region.workers;
      double max_eq = 0.0;
      for (const auto& p : region.points) max_eq = std::max(max_eq, p.max_equilibrium_residual);
      opts["max_equilibrium_residual"] = max_eq;
      opts["failed_rays"] = region.failures();
      detail::write_atomic(fs::path(sweep_out) / "meta.json",
                           detail::manifest("sweep", spec, opts, {"boundary.csv"}, detail::seconds_since(t0)).dump(2) +
                               "\n");
      const int failed = region.failures();
      err << "sweep: " << region.points.size() << " rays, " << failed << " failed, "
          << fmt(region.wall_seconds) << " s on " << region.workers << " worker(s)\n";
      return failed > 0 ? kPartial : kOk;
    }

    if (sim_cmd->parsed()) {
      const SystemSpec spec = detail::load(config, sets);
      const EquilibriumResult r = solve_equilibrium(spec);
      const StateLayout layout(spec.units.size());
      Eigen::VectorXd x0 = r.x_star;
      for (const auto& p : perturb) {
        const ParameterBinding b = detail::parse_assignment(p, "--perturb");
        x0[static_cast<Eigen::Index>(layout.index(b.path))] += b.value;
      }
      Scenario sc;
      sc.t_end = t_end;
      sc.dt_out = dt_out;
      sc.dt_max = dt_max;
      for (const auto& e : events) sc.events.push_back(detail::parse_event(e));
      sc.outputs = detail::split(signals_arg, ',');
      const Timeseries ts = simulate(spec, x0, sc);
      fs::create_directories(sim_out);
      std::ostringstream csv;
      csv << 't';
      for (const auto& c : ts.columns) csv << ',' << c;
      csv << '\n';
      for (std::size_t i = 0; i < ts.t.size(); ++i) {
        csv << fmt(ts.t[i]);
        for (Eigen::Index c = 0; c < ts.rows[i].size(); ++c) csv << ',' << fmt(ts.rows[i][c]);
        csv << '\n';
      }
      detail::write_atomic(fs::path(sim_out) / "timeseries.csv", csv.str());
      nlohmann::json opts = {{"t_end", t_end}, {"dt_out", dt_out}, {"dt_max", dt_max},
                             {"events", events}, {"perturb", perturb}, {"signals", ts.columns}};
      if (ts.escape) {
        opts["finite_escape"] = {{"time", ts.escape->time}, {"reason", ts.escape->reason}};
        err << "simulate: finite escape at t = " << ts.escape->time << " s (" << ts.escape->reason << ")\n";
      }
      detail::write_atomic(fs::path(sim_out) / "meta.json",
                           detail::manifest("simulate", spec, opts, {"timeseries.csv"}, detail::seconds_since(t0))
                                   .dump(2) + "\n");
      return kOk;
    }

    if (agg_cmd->parsed()) {
      const SystemSpec spec = detail::load(config, sets);
      std::vector<std::size_t> sizes;
      for (const auto& g : detail::split(groups_arg, ':')) {
        const double v = detail::parse_number(g, "--groups");
        if (!(v >= 1.0) || v != std::floor(v)) throw StructuralError("--groups: sizes must be positive integers");
        sizes.push_back(static_cast<std::size_t>(v));
      }
      std::size_t total = 0;
      for (std::size_t n : sizes) total += n;
      if (total != spec.units.size()) {
        throw StructuralError("--groups: sizes sum to " + std::to_string(total) + " but the farm has " +
                              std::to_string(spec.units.size()) + " units");
      }
      const SystemSpec agg = aggregate(spec, consecutive_groups(sizes));
      const fs::path target(agg_out);
      if (target.has_parent_path()) fs::create_directories(target.parent_path());
      detail::write_atomic(target, spec_to_json(agg).dump(2) + "\n");
      err << "aggregate: " << spec.units.size() << " units -> " << agg.units.size() << " (hash "
          << spec_hash(agg) << ")\n";
      return kOk;
    }
  } catch (const StructuralError& e) {
    err << "error: " << e.what() << '\n';
    return kError;
  } catch (const AnchorUnstable& e) {
    err << "error: " << e.what() << '\n';
    return kError;
  } catch (const NoEquilibrium& e) {
    err << "error: " << e.what() << '\n';
    return kError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kError;
  }
  return kError;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace stabmap::cli
