#include <CLI11.hpp>

#include <iostream>

#include "stoqmps/cli.hpp"

namespace {

enum Exit { ok = 0, usage = 1, config_error = 2, runtime_error = 3, missing_artifact = 4 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thermal-state free energies with holographic quantum circuits"};
  app.require_subcommand(1);
  std::string config_path, out_dir, artifact;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  app.add_option("--config", config_path, "YAML run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (overrides the config)");
  app.add_option("--seed", seed, "global seed (overrides the config)");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  auto* optimize = app.add_subcommand("optimize", "layer-growing optimization with per-depth artifacts");
  auto* oracle = app.add_subcommand("oracle", "exact free-energy scan");
  auto* sample = app.add_subcommand("sample", "shot-based estimates on optimized parameters");
  auto* scan = app.add_subcommand("scan", "final-depth temperature scan");
  sample->add_option("--artifact", artifact, "level artifact to sample (default: tau_max of every configured run)");
  for (auto* sub : {optimize, oracle, sample, scan}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage;
  }

  try {
    stoqmps::RunConfig config = config_path.empty() ? stoqmps::RunConfig{} : stoqmps::load_config(config_path);
    if (!out_dir.empty()) config.output = out_dir;
    if (seed) config.seed = *seed;
    if (jobs) config.optimizer.jobs = config.sampler.jobs = *jobs;
    config.validate();

    stoqmps::CommandReport report;
    if (*optimize) report = stoqmps::cmd_optimize(config, std::cerr);
    else if (*oracle) report = stoqmps::cmd_oracle(config, std::cerr);
    else if (*sample)
      report = stoqmps::cmd_sample(config, artifact.empty() ? std::nullopt : std::optional<std::filesystem::path>(artifact),
                                   std::cerr);
    else report = stoqmps::cmd_scan(config, std::cerr);
    for (const auto& f : report.files) std::cout << f.string() << '\n';
    return ok;
  } catch (const stoqmps::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const stoqmps::MissingArtifact& e) {
    std::cerr << "error: " << e.what() << '\n';
    return missing_artifact;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return runtime_error;
  }
}
