#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stoqmps/config.hpp"
#include "stoqmps/io.hpp"

namespace stoqmps {

/// A required input artifact does not exist.
class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommandReport {
  std::vector<std::filesystem::path> files;
  int levels_optimized = 0;
  int levels_resumed = 0;
};

/// "<model_key>_T<T>_q<q>_<kind>", the run directory name under <out>/runs.
std::string run_key(const HamiltonianSpec& ham, double temperature, int q, SpectrumKind kind);
std::filesystem::path level_artifact(const std::filesystem::path& run_dir, int tau);
std::filesystem::path level_marker(const std::filesystem::path& run_dir, int tau);

/// Layer-growing optimization for every (spectrum, q, T) of the config with one
/// JSON artifact and completion marker per depth, resuming after the last
/// marked depth. Writes errors_q<q>_T<T>.csv, comparison.csv when both spectra
/// are configured, and summary.json.
CommandReport cmd_optimize(const RunConfig& config, std::ostream& log);

/// Final-depth temperature scans without per-depth persistence:
/// scan_<model>_q<q>_<kind>.csv.
CommandReport cmd_scan(const RunConfig& config, std::ostream& log);

/// Exact (T, f, energy, entropy) over oracle.temperatures, with the
/// free-fermion columns for the transverse-field Ising model.
CommandReport cmd_oracle(const RunConfig& config, std::ostream& log);

/// Shot-based estimates on optimized parameters, noiseless and noisy side by
/// side with the exact contraction. Uses `artifact` when given, otherwise the
/// tau_max artifact of every configured run. Throws MissingArtifact.
CommandReport cmd_sample(const RunConfig& config, const std::optional<std::filesystem::path>& artifact,
                         std::ostream& log);

}  // namespace stoqmps
