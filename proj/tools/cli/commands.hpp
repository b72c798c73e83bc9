#pragma once
// Subcommands of the cavlat front end.

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace cavlat::cli {

using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitTruncation = 3;

const std::vector<std::string>& command_names();

// Validates the configuration for a command and returns its canonical form:
// every key spelled out, defaults included. Throws ConfigError.
json canonicalize(const std::string& command, const json& config);

struct RunOptions {
  std::string out_dir = ".";
  bool quiet = false;
};

// Parses, computes, and only then writes outputs and manifest.json. Returns
// kExitOk or kExitTruncation. Throws ConfigError before anything is written.
int run_command(const std::string& command, const json& config, const RunOptions& options);

// Thread count from the config value (> 0 wins), then CAVLAT_THREADS, then the hardware.
int resolve_threads(long configured);

}  // namespace cavlat::cli
