#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cli/commands.hpp"
#include "cli/config.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<long> seed;
  std::optional<long> threads;
  std::string out_dir = ".";
  std::vector<std::string> overrides;
  bool print_config = false;
  bool quiet = false;
};

int dispatch(const std::string& command, const Flags& f) {
  using namespace cavlat::cli;
  json config;
  try {
    config = load_config_file(f.config);
    for (const auto& o : f.overrides) apply_override(config, o);
    if (f.seed) config["seed"] = *f.seed;
    if (f.threads) config["threads"] = *f.threads;
    if (f.print_config) {
      std::cout << canonicalize(command, config).dump(2) << "\n";
      return kExitOk;
    }
    return run_command(command, config, {f.out_dir, f.quiet});
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Particle in a driven, lossy cavity lattice: bands, self-consistent branches, "
               "quantum trajectories."};
  app.set_version_flag("--version", CAVLAT_VERSION);
  app.require_subcommand(1);

  Flags flags;
  std::string chosen;
  for (const auto& name : cavlat::cli::command_names()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", flags.config, "JSON config file")->required();
    sub->add_option("--seed", flags.seed, "base random seed (overrides config)");
    sub->add_option("-o,--out-dir", flags.out_dir, "output directory");
    sub->add_option("-j,--threads", flags.threads, "worker threads (overrides config and CAVLAT_THREADS)");
    sub->add_option("--set", flags.overrides, "override a config key, e.g. params.eta=6");
    sub->add_flag("--print-config", flags.print_config, "print the canonical config and exit");
    sub->add_flag("-q,--quiet", flags.quiet, "no progress output");
    sub->callback([&chosen, name] { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cavlat::cli::kExitConfig;
  }
  return dispatch(chosen, flags);
}
