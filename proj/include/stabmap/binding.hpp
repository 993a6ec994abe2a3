#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "stabmap/errors.hpp"
#include "stabmap/params.hpp"

namespace stabmap {

/// One scalar inside a SystemSpec, addressed by a dotted path:
///   unit<N>.<field>      e.g. unit1.Kp4, unit2.Qgref, unit3.feeder.L
///   unit*.<field>        every unit at once
///   trunk.R  trunk.L  grid.voltage  grid.angle  system_base_mva
///   model.cf_cross_sign  model.kcl_rate
struct ParameterBinding {
  std::string path;
  double value = 0.0;
};

namespace detail {

/// Scalar unit fields addressable as unit<N>.<name> (feeder.R/L excluded).
inline const char* const kUnitFieldNames[] = {
    "Rs",  "Rr",  "Ls",  "Lr",  "Lm",  "H",   "omega_b", "Rc",  "Lc",  "Cf",  "Cdc",
    "Kp1", "Kp2", "Kp3", "Kp4", "Kp5", "Kp6", "Kp7",     "Kp8", "Ki1", "Ki2", "Ki3",
    "Ki4", "Ki5", "Ki6", "Ki7", "Ki8", "omega_mref", "Qsref", "udcref", "Qgref", "Pm",
    "base_mva"};

inline double* unit_field(UnitParams& u, LineParams& feeder, std::string_view f) {
  auto& m = u.machine;
  auto& c = u.converter;
  auto& s = u.setpoints;
  if (f == "Rs") return &m.Rs;
  if (f == "Rr") return &m.Rr;
  if (f == "Ls") return &m.Ls;
  if (f == "Lr") return &m.Lr;
  if (f == "Lm") return &m.Lm;
  if (f == "H") return &m.H;
  if (f == "omega_b") return &m.omega_b;
  if (f == "Rc") return &c.Rc;
  if (f == "Lc") return &c.Lc;
  if (f == "Cf") return &c.Cf;
  if (f == "Cdc") return &c.Cdc;
  if (f == "omega_mref") return &s.omega_mref;
  if (f == "Qsref") return &s.Qsref;
  if (f == "udcref") return &s.udcref;
  if (f == "Qgref") return &s.Qgref;
  if (f == "Pm") return &s.Pm;
  if (f == "base_mva") return &u.base_mva;
  if (f == "feeder.R") return &feeder.R;
  if (f == "feeder.L") return &feeder.L;
  if (f.size() == 3 && (f.starts_with("Kp") || f.starts_with("Ki")) && f[2] >= '1' && f[2] <= '8') {
    const int loop = f[2] - '0';
    return f[1] == 'p' ? &u.gains.kp(loop) : &u.gains.ki(loop);
  }
  return nullptr;
}

inline std::vector<double*> resolve(SystemSpec& spec, std::string_view path) {
  auto fail = [&](const std::string& why) -> std::vector<double*> {
    throw StructuralError("parameter path '" + std::string(path) + "': " + why);
  };
  if (path == "trunk.R") return {&spec.trunk.R};
  if (path == "trunk.L") return {&spec.trunk.L};
  if (path == "grid.voltage") return {&spec.grid.voltage};
  if (path == "grid.angle") return {&spec.grid.angle};
  if (path == "system_base_mva") return {&spec.system_base_mva};
  if (path == "model.cf_cross_sign") return {&spec.options.cf_cross_sign};
  if (path == "model.kcl_rate") return {&spec.options.kcl_rate};

  if (!path.starts_with("unit")) return fail("unknown root");
  const auto dot = path.find('.');
  if (dot == std::string_view::npos) return fail("missing field");
  const std::string_view index = path.substr(4, dot - 4);
  const std::string_view field = path.substr(dot + 1);
  if (spec.feeders.size() != spec.units.size()) return fail("feeder/unit count mismatch");

  std::vector<double*> out;
  if (index == "*") {
    for (std::size_t i = 0; i < spec.units.size(); ++i) {
      double* p = unit_field(spec.units[i], spec.feeders[i], field);
      if (p == nullptr) return fail("unknown field");
      out.push_back(p);
    }
    return out;
  }
  std::size_t n = 0;
  const auto [ptr, ec] = std::from_chars(index.data(), index.data() + index.size(), n);
  if (ec != std::errc{} || ptr != index.data() + index.size() || n == 0) return fail("bad unit index");
  if (n > spec.units.size()) {
    return fail("unit index out of range (" + std::to_string(spec.units.size()) + " units)");
  }
  double* p = unit_field(spec.units[n - 1], spec.feeders[n - 1], field);
  if (p == nullptr) return fail("unknown field");
  out.push_back(p);
  return out;
}

}  // namespace detail

/// Copy of `spec` with the addressed scalar(s) replaced.
inline SystemSpec bind(SystemSpec spec, const ParameterBinding& binding) {
  for (double* p : detail::resolve(spec, binding.path)) *p = binding.value;
  return spec;
}

inline SystemSpec bind(SystemSpec spec, std::string_view path, double value) {
  for (double* p : detail::resolve(spec, path)) *p = value;
  return spec;
}

/// Current value at `path`.  A wildcard path must address equal values.
inline double read(const SystemSpec& spec, std::string_view path) {
  auto& mut = const_cast<SystemSpec&>(spec);
  const auto ptrs = detail::resolve(mut, path);
  for (const double* p : ptrs) {
    if (*p != *ptrs.front()) {
      throw StructuralError("parameter path '" + std::string(path) + "' addresses differing values");
    }
  }
  return *ptrs.front();
}

}  // namespace stabmap
