#pragma once

#include <complex>
#include <string>
#include <vector>

#include "stabmap/binding.hpp"
#include "stabmap/errors.hpp"
#include "stabmap/params.hpp"

namespace stabmap {

/// Partition of unit indices (0-based); each group becomes one equivalent unit.
using Grouping = std::vector<std::vector<std::size_t>>;

/// Consecutive groups of the given sizes, e.g. {2, 1} -> {{0, 1}, {2}}.
inline Grouping consecutive_groups(const std::vector<std::size_t>& sizes) {
  Grouping g;
  std::size_t next = 0;
  for (std::size_t n : sizes) {
    if (n == 0) throw StructuralError("aggregate: empty group");
    std::vector<std::size_t> members(n);
    for (auto& m : members) m = next++;
    g.push_back(std::move(members));
  }
  return g;
}

/// One unit per group.  Per-unit device parameters are copied from identical
/// members (MVA-weighted means otherwise) on a base equal to the members' total.
/// Each group feeder is the parallel combination of the member feeders, moved
/// to the group base so the series loss at rated current is unchanged.
inline SystemSpec aggregate(const SystemSpec& spec, const Grouping& groups) {
  validate(spec);
  const std::size_t n = spec.units.size();
  std::vector<int> seen(n, 0);
  for (const auto& g : groups) {
    if (g.empty()) throw StructuralError("aggregate: empty group");
    for (std::size_t i : g) {
      if (i >= n) throw StructuralError("aggregate: unit index " + std::to_string(i + 1) + " out of range");
      ++seen[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (seen[i] != 1) {
      throw StructuralError("aggregate: unit " + std::to_string(i + 1) + " must appear in exactly one group");
    }
  }

  SystemSpec out = spec;
  out.units.clear();
  out.feeders.clear();
  for (const auto& g : groups) {
    if (g.size() == 1) {
      out.units.push_back(spec.units[g.front()]);
      out.feeders.push_back(spec.feeders[g.front()]);
      continue;
    }
    double base = 0.0;
    for (std::size_t i : g) base += spec.units[i].base_mva;

    bool identical = true;
    for (std::size_t i : g) {
      UnitParams a = spec.units[i];
      UnitParams b = spec.units[g.front()];
      a.base_mva = b.base_mva = 0.0;
      identical = identical && a == b;
    }
    UnitParams unit = spec.units[g.front()];
    if (!identical) {
      LineParams scratch;
      for (const char* f : detail::kUnitFieldNames) {
        double mean = 0.0;
        for (std::size_t i : g) {
          UnitParams member = spec.units[i];
          mean += *detail::unit_field(member, scratch, f) * member.base_mva / base;
        }
        *detail::unit_field(unit, scratch, f) = mean;
      }
    }
    unit.base_mva = base;

    std::complex<double> admittance = 0.0;
    for (std::size_t i : g) {
      const auto& line = spec.feeders[i];
      admittance += 1.0 / (std::complex<double>(line.R, line.L) * (base / spec.units[i].base_mva));
    }
    const std::complex<double> z = 1.0 / admittance;
    out.units.push_back(unit);
    out.feeders.push_back(LineParams{z.real(), z.imag()});
  }
  validate(out);
  return out;
}

}  // namespace stabmap
