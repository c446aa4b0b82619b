#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fedccea/config.hpp"
#include "fedccea/errors.hpp"
#include "fedccea/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Federated client contribution evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;

  for (const auto* name : {"simulate", "train-aam", "value", "baseline", "experiment", "all"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "master seed (overrides seed)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? fedccea::kExitOk : fedccea::kExitConfig;
  }

  fedccea::RunConfig config;
  try {
    config = fedccea::parse_config(config_path);
  } catch (const fedccea::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return fedccea::kExitConfig;
  }
  if (out_dir) config.output_dir = *out_dir;
  if (seed) config.seed = *seed;

  const std::string subcommand = app.get_subcommands().front()->get_name();
  return fedccea::dispatch(subcommand, config, std::cout, std::cerr);
}
