#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stoqmps/optimize.hpp"
#include "stoqmps/sampler.hpp"

namespace stoqmps {

/// Invalid configuration. what() is "<source>:<line>:<column>: <message>"
/// when the offending node is known.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  std::string name = "sdim";  ///< sdim | heisenberg
  double V = 0.0;
  HamiltonianSpec build() const;
};

/// Default temperature grid of the oracle subcommand: 0.2, 0.4, ..., 3.0.
std::vector<double> default_oracle_grid();

struct OracleConfig {
  int ed_length = 14;
  Boundary boundary = Boundary::periodic;
  bool cache = true;  ///< cache spectra under <out>/oracle_cache
  std::vector<double> temperatures = default_oracle_grid();  ///< oracle subcommand grid
};

struct CorrelatorConfig {
  int max_distance = 4;
  std::vector<char> bases{'x', 'z'};
};

struct RunConfig {
  ModelConfig model;
  std::vector<double> temperatures{1.0};
  std::vector<int> q{1};
  int tau_start = 1;
  int tau_max = 1;
  Geometry geometry = Geometry::ladder;
  Parameterization mode = Parameterization::angles;
  std::vector<SpectrumKind> spectra{SpectrumKind::psa};
  NetworkOptions network;
  OptimizerConfig optimizer;
  SamplerConfig sampler;
  NoiseModel noise = NoiseModel::depolarizing();
  CorrelatorConfig correlators;
  OracleConfig oracle;
  std::filesystem::path output = "stoqmps-out";
  std::uint64_t seed = 0;

  /// Settings for one (q, kind) batch run.
  BatchSettings batch_settings(int q, SpectrumKind kind) const;
  /// Throws ConfigError.
  void validate() const;
};

/// Parses a YAML document. Unknown keys, wrong types and out-of-range values
/// raise ConfigError with the line and column of the offending node.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Fully resolved configuration as YAML; parse_config(to_yaml(c)) == c.
std::string to_yaml(const RunConfig& config);

}  // namespace stoqmps
