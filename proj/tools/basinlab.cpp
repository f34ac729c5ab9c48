// basinlab <command> --config path [--out dir] [--seed N]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure, 1 other.

#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "basinlab/config.hpp"
#include "basinlab/errors.hpp"
#include "basinlab/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

}  // namespace

int main(int argc, char** argv) {
  using namespace basinlab;

  CLI::App app{"Equilibrium-selection experiments for multi-agent policy gradient"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool print_config = false;
  for (const auto& tag : experiment_tags()) {
    CLI::App* sub = app.add_subcommand(tag, "Run the '" + tag + "' experiment");
    sub->add_option("--config", config_path, "JSON config file (defaults are used when omitted)");
    sub->add_option("--out", out_dir, "Output directory (overrides the config's output)");
    sub->add_option("--seed", seed, "Master seed (overrides the config's master_seed)");
    sub->add_flag("--print-config", print_config, "Print the resolved config and exit");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    ExperimentConfig cfg = config_path.empty() ? default_config(command) : load_config(config_path, command);
    if (seed) cfg.master_seed = *seed;
    if (!out_dir.empty()) cfg.output = out_dir;
    if (print_config) {
      std::cout << config_to_json(cfg).dump(2) << "\n";
      return 0;
    }
    const std::string started = utc_now();
    const CommandResult result = run_experiment(cfg);
    const auto manifest = write_outputs(cfg.output, cfg, result, started, utc_now());
    std::cout << "wrote " << manifest["files"].size() + 1 << " files to " << cfg.output << "\n";
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure in " << e.operation() << ": " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
