#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "cli/manifest.hpp"

using namespace cavlat::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cavlat_test_" + name);
  fs::remove_all(p);
  return p;
}

const json kRoots = json::parse(R"({
  "schema_version": 1,
  "params": {"eta": 6.0, "u0": -10.0, "kappa": 1.0},
  "branch": {"model": "harmonic", "level": 0},
  "scan": {"delta_c_values": [-12.0, -8.0]}
})");

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("every shipped config round-trips through its canonical form") {
  const std::map<std::string, std::string> command = {
      {"wannier_band4", "bands"},           {"contour_band4", "contour"},
      {"contour_harmonic0", "contour"},     {"roots_band4", "roots"},
      {"stability_band4", "stability"},     {"trajectory_multistable", "mcwf"},
      {"joint_distribution_scan", "ensemble"}, {"kinetic_energy_scan", "ensemble"},
      {"occupancy_band4", "occupancy"},     {"oracle_small", "oracle"},
      {"meanfield_relax", "meanfield"}};
  std::size_t seen = 0;
  for (const auto& entry : fs::directory_iterator(fs::path(CAVLAT_SOURCE_DIR) / "configs")) {
    const std::string stem = entry.path().stem().string();
    CAPTURE(stem);
    REQUIRE(command.count(stem) == 1);
    const json canonical = canonicalize(command.at(stem), load_config_file(entry.path().string()));
    CHECK(canonicalize(command.at(stem), canonical) == canonical);
    CHECK(canonicalize(command.at(stem), json::parse(canonical.dump())) == canonical);
    ++seen;
  }
  CHECK(seen == command.size());
}

TEST_CASE("strict schema") {
  json c = kRoots;
  CHECK_NOTHROW(canonicalize("roots", c));
  c["params"]["gamma"] = 1.0;
  CHECK_THROWS_AS(canonicalize("roots", c), ConfigError);
  c = kRoots;
  c["extra"] = 1;
  CHECK_THROWS_AS(canonicalize("roots", c), ConfigError);
  c = kRoots;
  c["schema_version"] = 2;
  CHECK_THROWS_AS(canonicalize("roots", c), ConfigError);
  c = kRoots;
  c.erase("schema_version");
  CHECK_THROWS_AS(canonicalize("roots", c), ConfigError);
  c = kRoots;
  c["params"].erase("eta");
  CHECK_THROWS_AS(canonicalize("roots", c), ConfigError);
  c = kRoots;
  c["params"]["kappa"] = "one";
  CHECK_THROWS_AS(canonicalize("roots", c), ConfigError);
  c = kRoots;
  c["params"]["kappa"] = -1.0;
  CHECK_THROWS_AS(canonicalize("roots", c), ConfigError);
  c = kRoots;
  c["branch"]["model"] = "gaussian";
  CHECK_THROWS_AS(canonicalize("roots", c), ConfigError);
  CHECK_THROWS_AS(canonicalize("plot", kRoots), ConfigError);
}

TEST_CASE("overrides address nested keys") {
  json c = kRoots;
  apply_override(c, "params.eta=4.5");
  apply_override(c, "branch.model=wannier");
  apply_override(c, "scan.delta_c_values=[-3, -2]");
  CHECK(c["params"]["eta"] == 4.5);
  CHECK(c["branch"]["model"] == "wannier");
  CHECK(c["scan"]["delta_c_values"].size() == 2);
  CHECK_THROWS_AS(apply_override(c, "params.eta"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "params.eta.x=1"), ConfigError);
}

TEST_CASE("a rejected config writes nothing") {
  const fs::path out = scratch("rejected");
  json c = kRoots;
  c["grid"] = {{"points", 1}};
  CHECK_THROWS_AS(run_command("roots", c, {out.string(), true}), ConfigError);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("runs are reproducible and the manifest checksums every output") {
  const fs::path a = scratch("repro_a"), b = scratch("repro_b");
  CHECK(run_command("roots", kRoots, {a.string(), true}) == kExitOk);
  CHECK(run_command("roots", kRoots, {b.string(), true}) == kExitOk);
  const json m = json::parse(slurp(a / "manifest.json"));
  CHECK(m["command"] == "roots");
  CHECK(m["config"] == canonicalize("roots", kRoots));
  REQUIRE(m["outputs"].size() == 2);
  for (const auto& o : m["outputs"]) {
    const std::string path = o["path"];
    const std::string data = slurp(a / path);
    CHECK(o["sha256"] == sha256_hex(data));
    CHECK(o["bytes"] == data.size());
    CHECK(data == slurp(b / path));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("empty root set is a valid empty table") {
  const fs::path out = scratch("empty");
  json c = kRoots;
  c["params"]["eta"] = 0.0;
  CHECK(run_command("roots", c, {out.string(), true}) == kExitOk);
  CHECK(slurp(out / "roots.csv") == "model,m,delta_c,n,b,delta_eff,stable,slope,marginal,bound,valid\n");
  fs::remove_all(out);
}

TEST_CASE("depth zero gives free-particle rows") {
  const fs::path out = scratch("bands");
  const json c = json::parse(R"({"schema_version": 1,
    "bands": {"depths": [0.0, -50.0], "bands": [1, 4], "window_periods": 4}})");
  CHECK(run_command("bands", c, {out.string(), true}) == kExitOk);
  const json s = json::parse(slurp(out / "summary.json"));
  REQUIRE(s.size() == 4);
  CHECK(s[0]["b_m"] == 0.5);
  CHECK(s[0]["free_particle"] == true);
  CHECK(s[1]["b_m"] == 0.5);
  CHECK(s[3]["b_m"].get<double>() < 0.5);
  CHECK(fs::exists(out / "wannier" / "depth_001_m4.csv"));
  CHECK_FALSE(fs::exists(out / "wannier" / "depth_000_m4.csv"));
  fs::remove_all(out);
}

TEST_CASE("truncated trajectories return the warning status") {
  const fs::path out = scratch("trunc");
  const json c = json::parse(R"({"schema_version": 1, "seed": 4,
    "params": {"eta": 3.0, "delta_c": -2.0, "u0": -2.0, "kappa": 1.0},
    "trajectory": {"geometry": {"n_ph_max": 2, "j_max": 4}, "t_final": 2.0}})");
  CHECK(run_command("mcwf", c, {out.string(), true}) == kExitTruncation);
  const json m = json::parse(slurp(out / "manifest.json"));
  CHECK(m["truncation_warnings"].size() == 1);
  CHECK(m["seeds"][0] == 4);
  fs::remove_all(out);
}

TEST_CASE("numbers keep 17 significant digits") {
  CHECK(format_number(0.1) == "0.10000000000000001");
  CsvTable t({"a", "b"});
  t.row().add(1.0 / 3.0).add(2L);
  CHECK(t.str() == "a,b\n0.33333333333333331,2\n");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}
