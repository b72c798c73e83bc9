#pragma once
// Run configuration: strict JSON reading with defaults, canonical echo and
// --set overrides.

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cavlat/mcwf.hpp"

namespace cavlat::cli {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Reads one JSON object, remembering which keys were consumed. Every value read
// (given or defaulted) is copied into canonical(), so re-reading the canonical
// form reproduces it exactly.
class Section {
public:
  Section(const json& source, std::string path);

  double number(const std::string& key, double fallback);
  double number(const std::string& key);  // required
  long integer(const std::string& key, long fallback);
  bool boolean(const std::string& key, bool fallback);
  std::string text(const std::string& key, const std::string& fallback,
                   const std::vector<std::string>& allowed = {});
  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback);
  std::vector<long> integers(const std::string& key, const std::vector<long>& fallback);
  std::vector<std::pair<double, double>> intervals(const std::string& key,
                                                   const std::vector<std::pair<double, double>>& fallback);
  bool has(const std::string& key) const;

  Section child(const std::string& key);
  void adopt(const std::string& key, Section& child);

  // Throws ConfigError naming any key that was never read.
  void finish();
  const json& canonical() const { return canonical_; }
  const std::string& path() const { return path_; }

private:
  const json* lookup(const std::string& key);
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  json source_;
  std::string path_;
  std::vector<std::string> used_;
  json canonical_ = json::object();
};

// Parses the file; ConfigError on I/O or syntax errors.
json load_config_file(const std::string& path);

// "a.b.c=value": value is parsed as JSON when possible, else taken as a string.
void apply_override(json& config, const std::string& assignment);

// delta_c is required unless the command scans its own detunings.
ModelParams read_params(Section& s, bool need_detuning = true);
HilbertGeometry read_geometry(Section& s, const HilbertGeometry& fallback);
// Trajectory block shared by mcwf, ensemble and occupancy.
TrajectoryConfig read_trajectory(Section& s, const ModelParams& params);

// Detuning list: explicit "delta_c_values" or a "delta_c_range" {from, to, steps};
// falls back to params.delta_c.
std::vector<double> read_detunings(Section& s, double fallback);

}  // namespace cavlat::cli
