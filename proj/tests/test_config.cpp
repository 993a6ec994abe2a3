#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "stabmap/config.hpp"

namespace {

using namespace stabmap;

TEST(Config, RoundTripsEverySpec) {
  SystemSpec spec = default_farm(3);
  spec = stabmap::bind(spec, "unit2.Qgref", -0.13);
  spec = stabmap::bind(spec, "unit3.feeder.L", 0.08);
  spec = stabmap::bind(spec, "unit1.base_mva", 3.0);
  spec = stabmap::bind(spec, "model.cf_cross_sign", 1.0);
  spec = stabmap::bind(spec, "grid.angle", 0.1);
  const SystemSpec back = spec_from_json(nlohmann::json::parse(spec_to_json(spec).dump()));
  EXPECT_TRUE(back == spec);
  EXPECT_EQ(spec_hash(back), spec_hash(spec));
}

TEST(Config, TemplateThenOverrides) {
  const auto j = nlohmann::json::parse(R"({
    "units": 3,
    "unit": {"Kp4": 1.5, "feeder": {"R": 0.02}},
    "unit2": {"Qgref": -0.1},
    "trunk": {"L": 0.2}
  })");
  const SystemSpec spec = spec_from_json(j);
  ASSERT_EQ(spec.units.size(), 3u);
  for (const auto& u : spec.units) EXPECT_EQ(u.gains.kp(4), 1.5);
  for (const auto& f : spec.feeders) EXPECT_EQ(f.R, 0.02);
  EXPECT_EQ(spec.units[1].setpoints.Qgref, -0.1);
  EXPECT_EQ(spec.units[0].setpoints.Qgref, 0.0);
  EXPECT_EQ(spec.trunk.L, 0.2);
}

TEST(Config, RejectsMalformedInput) {
  using nlohmann::json;
  EXPECT_THROW(spec_from_json(json::parse(R"({"unit": {}})")), StructuralError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"units": 0})")), StructuralError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"units": 2, "colour": 1})")), StructuralError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"units": 2, "unit": {"Kp9": 1}})")), StructuralError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"units": 2, "unit3": {"Kp1": 1}})")), StructuralError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"units": 2, "unit": {"Kp1": "x"}})")), StructuralError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"units": 1, "unit": {"Cdc": -1}})")), StructuralError);
  EXPECT_THROW(load_spec("/nonexistent/farm.json"), StructuralError);
}

TEST(Config, HashTracksContent) {
  const SystemSpec a = default_farm(2);
  const SystemSpec b = stabmap::bind(a, "unit2.Pm", 0.7);
  EXPECT_EQ(spec_hash(a).size(), 16u);
  EXPECT_EQ(spec_hash(a), spec_hash(default_farm(2)));
  EXPECT_NE(spec_hash(a), spec_hash(b));
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Config, ShippedDefaultMatchesBuiltIn) {
  const SystemSpec spec = load_spec(std::filesystem::path(STABMAP_SOURCE_DIR) / "config" / "default_farm.json");
  EXPECT_TRUE(spec == default_farm(2));
}

TEST(Config, SaveThenLoad) {
  const auto path = std::filesystem::temp_directory_path() / "stabmap_config_test.json";
  const SystemSpec spec = stabmap::bind(default_farm(2), "unit1.omega_mref", 1.1);
  save_spec(spec, path);
  EXPECT_TRUE(load_spec(path) == spec);
  std::filesystem::remove(path);
}

}  // namespace
