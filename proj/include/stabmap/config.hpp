#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "stabmap/binding.hpp"
#include "stabmap/errors.hpp"
#include "stabmap/params.hpp"

namespace stabmap {

// Config layout.  Every leaf key path equals its ParameterBinding path:
//   {
//     "units": 3,
//     "unit":  { "Kp4": 2.5, "feeder": { "L": 0.05 } },   // applied to every unit
//     "unit2": { "Qgref": -0.13 },                         // per-unit override
//     "trunk": { "R": 0.01, "L": 0.1 },
//     "grid":  { "voltage": 1.0, "angle": 0.0 },
//     "system_base_mva": 1.5,
//     "model": { "cf_cross_sign": -1, "kcl_rate": 200 }
//   }

namespace detail {

inline double number(const nlohmann::json& v, const std::string& path) {
  if (!v.is_number()) throw StructuralError("config: '" + path + "' must be a number");
  return v.get<double>();
}

inline void apply_unit_block(SystemSpec& spec, const std::string& prefix, const nlohmann::json& block) {
  if (!block.is_object()) throw StructuralError("config: '" + prefix + "' must be an object");
  for (const auto& [key, value] : block.items()) {
    if (key == "feeder") {
      if (!value.is_object()) throw StructuralError("config: '" + prefix + ".feeder' must be an object");
      for (const auto& [sub, leaf] : value.items()) {
        const std::string path = prefix + ".feeder." + sub;
        spec = stabmap::bind(std::move(spec), path, number(leaf, path));
      }
    } else {
      const std::string path = prefix + "." + key;
      spec = stabmap::bind(std::move(spec), path, number(value, path));
    }
  }
}

inline void apply_group(SystemSpec& spec, const std::string& root, const nlohmann::json& block) {
  if (!block.is_object()) throw StructuralError("config: '" + root + "' must be an object");
  for (const auto& [key, value] : block.items()) {
    const std::string path = root + "." + key;
    spec = stabmap::bind(std::move(spec), path, number(value, path));
  }
}

}  // namespace detail

inline SystemSpec spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw StructuralError("config: top level must be an object");
  if (!j.contains("units") || !j["units"].is_number_integer() || j["units"].get<long long>() < 1) {
    throw StructuralError("config: 'units' must be a positive integer");
  }
  SystemSpec spec = default_farm(static_cast<std::size_t>(j["units"].get<long long>()));

  if (j.contains("unit")) detail::apply_unit_block(spec, "unit*", j["unit"]);
  for (const auto& [key, value] : j.items()) {
    if (key == "units" || key == "unit") continue;
    if (key == "trunk" || key == "grid" || key == "model") {
      detail::apply_group(spec, key, value);
    } else if (key == "system_base_mva") {
      spec.system_base_mva = detail::number(value, key);
    } else if (key.starts_with("unit")) {
      detail::apply_unit_block(spec, key, value);
    } else {
      throw StructuralError("config: unknown key '" + key + "'");
    }
  }
  validate(spec);
  return spec;
}

/// Fully explicit form: every unit written out, no template block.
inline nlohmann::json spec_to_json(const SystemSpec& spec) {
  nlohmann::json j;
  j["units"] = spec.units.size();
  for (std::size_t i = 0; i < spec.units.size(); ++i) {
    const std::string prefix = "unit" + std::to_string(i + 1);
    nlohmann::json block;
    for (const char* f : detail::kUnitFieldNames) block[f] = read(spec, prefix + "." + f);
    block["feeder"] = {{"R", spec.feeders[i].R}, {"L", spec.feeders[i].L}};
    j[prefix] = block;
  }
  j["trunk"] = {{"R", spec.trunk.R}, {"L", spec.trunk.L}};
  j["grid"] = {{"voltage", spec.grid.voltage}, {"angle", spec.grid.angle}};
  j["system_base_mva"] = spec.system_base_mva;
  j["model"] = {{"cf_cross_sign", spec.options.cf_cross_sign}, {"kcl_rate", spec.options.kcl_rate}};
  return j;
}

inline SystemSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StructuralError("config: cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw StructuralError("config: '" + path.string() + "': " + e.what());
  }
  return spec_from_json(j);
}

inline void save_spec(const SystemSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw StructuralError("config: cannot write '" + path.string() + "'");
  out << spec_to_json(spec).dump(2) << '\n';
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// FNV-1a 64 of the canonical (sorted-key, compact) JSON form, as 16 hex digits.
inline std::string spec_hash(const SystemSpec& spec) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(spec_to_json(spec).dump())));
  return buf;
}

}  // namespace stabmap
