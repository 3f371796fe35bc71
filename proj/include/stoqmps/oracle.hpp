#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stoqmps/models.hpp"

namespace stoqmps {

enum class Boundary { periodic, open };

std::string to_string(Boundary b);

struct OracleResult {
  double free_energy = 0.0;  ///< per site
  double energy = 0.0;       ///< per site
  double entropy = 0.0;      ///< per site, nats
  double temperature = 0.0;
  std::string method;        ///< "ed{L}" or "free-fermion"
};

enum class EdMethod { automatic, dense, momentum };

struct EdOptions {
  Boundary boundary = Boundary::periodic;
  EdMethod method = EdMethod::automatic;
  /// Directory for the JSON spectrum cache; no caching when empty.
  std::optional<std::filesystem::path> cache_dir;
};

/// All 2^L eigenvalues of sum_i h_i, ascending. Periodic chains are block
/// diagonalized by lattice momentum (and Z-parity when every term conserves
/// it); open chains and small L use one dense diagonalization.
std::vector<double> ed_spectrum(const HamiltonianSpec& ham, int length, const EdOptions& options = {});

/// Per-site thermodynamics of a finite spectrum. T = 0 is the ground-state
/// limit with s = ln(degeneracy) / L.
OracleResult thermodynamics(const std::vector<double>& spectrum, int length, double temperature);

OracleResult ed_thermodynamics(const HamiltonianSpec& ham, int length, double temperature,
                               const EdOptions& options = {});

/// Thermodynamic limit of H = -sum (XX + Z) from Jordan-Wigner fermions with
/// dispersion 4 sin(k/2), integrated by adaptive Gauss-Kronrod quadrature.
/// T = 0 returns the ground-state energy density -4/pi.
OracleResult tfim_free_energy(double temperature);

/// Exact reference for the model when one exists (TFIM), otherwise periodic ED
/// at the given length.
OracleResult reference_free_energy(const HamiltonianSpec& ham, double temperature, int ed_length = 14,
                                   const EdOptions& options = {});

}  // namespace stoqmps
