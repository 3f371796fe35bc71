#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stoqmps/ansatz.hpp"
#include "stoqmps/common.hpp"
#include "stoqmps/models.hpp"
#include "stoqmps/spectrum.hpp"

namespace stoqmps {

enum class EvaluationMode { finite, infinite };

std::string to_string(EvaluationMode m);
EvaluationMode parse_evaluation_mode(const std::string& s);

struct NetworkOptions {
  EvaluationMode mode = EvaluationMode::infinite;
  int length = 60;        ///< finite chain length L
  int window_first = 48;  ///< first measured window start (0-based site)
  int window_last = 54;   ///< last measured window start, inclusive
  double fixed_point_tol = 1e-11;
  long max_iterations = 100000;
  bool check_degeneracy = true;  ///< second power-iteration start to flag degenerate fixed points
};

/// Circuit + spectrum + evaluation mode. The left boundary of the bond
/// register is |0...0>.
struct StoQmpsNetwork {
  CircuitAnsatz ansatz;
  SpectrumParams spectrum;
  NetworkOptions options;

  /// Throws InvalidArgument unless the window of `range`-site cells fits in [0, L).
  void validate(int range = 1) const;
};

/// Density operator on the bond register, one block per classical index
/// (one block for PSA, two for CSA, indexed by the previous input bit).
/// The sum of block traces is 1.
struct BondEnvironment {
  std::vector<Matrix> blocks;
  bool degenerate = false;  ///< set when two power-iteration starts disagree
  long iterations = 0;
  double residual = 0.0;

  double trace() const;
  /// Block-diagonal matrix over (classical index, bond).
  Matrix dense() const;
};

/// One application of the site channel with input kernel w: each block is
/// mixed into the input bit, U is applied, and the physical output traced.
BondEnvironment apply_channel(const Matrix& site_unitary, const InputKernel& w, int classical_dim,
                              const BondEnvironment& env);

/// Bulk channel of the network (stationary kernel) in the column-major vec
/// basis of the block list, size (C D^2)^2.
Matrix channel_matrix(const StoQmpsNetwork& net);

/// Environment with C(rho) = rho, tr rho = 1, by power iteration started from
/// the maximally mixed state. Throws NumericalError on non-convergence.
BondEnvironment fixed_point(const StoQmpsNetwork& net);

/// Environment of the finite chain in front of `site` (0-based).
BondEnvironment finite_environment(const StoQmpsNetwork& net, int site);

/// Reduced density matrix of `range` consecutive physical outputs: the bulk
/// value in infinite mode, the window average in finite mode.
Matrix reduced_density_matrix(const StoQmpsNetwork& net, int range);

/// Per-window-start energies of the finite chain.
std::vector<double> site_energies(const StoQmpsNetwork& net, const HamiltonianSpec& ham);

double energy_density(const StoQmpsNetwork& net, const HamiltonianSpec& ham);

/// Per-term expectation values per translation cell, in ham.terms order.
std::vector<double> term_expectations(const StoQmpsNetwork& net, const HamiltonianSpec& ham);

struct RunMetadata {
  std::string model;
  std::string spectrum_kind;
  std::string geometry;
  std::string mode;
  int q = 0;
  int tau = 0;
  std::uint64_t seed = 0;
};

struct FreeEnergyResult {
  double energy = 0.0;
  double entropy = 0.0;
  double free_energy = 0.0;
  double temperature = 0.0;
  std::optional<double> exact_free_energy;
  std::optional<double> relative_error;  ///< |f - f_exact| / |f_exact|
  RunMetadata metadata;
};

/// f = eps - T s with s the spectrum's entropy density.
FreeEnergyResult free_energy_density(const StoQmpsNetwork& net, const HamiltonianSpec& ham, double temperature,
                                     std::optional<double> exact_free_energy = std::nullopt);

RunMetadata metadata_of(const StoQmpsNetwork& net, const HamiltonianSpec& ham, std::uint64_t seed = 0);

/// Objective value with its gradient over (flatten(ansatz), spectrum.flatten()).
struct Evaluation {
  double energy = 0.0;
  double entropy = 0.0;
  double free_energy = 0.0;
  RealVector circuit_gradient;
  RealVector spectrum_gradient;
};

Evaluation evaluate(const StoQmpsNetwork& net, const HamiltonianSpec& ham, double temperature, bool with_gradient);

struct CorrelatorPoint {
  int distance = 0;
  double raw = 0.0;
  double connected = 0.0;
};

struct CorrelatorResult {
  std::string op_a;
  std::string op_b;
  std::vector<CorrelatorPoint> points;
  std::optional<double> correlation_length;
};

/// <A_0 B_d> for d = 1..max_distance, where B_d starts d sites after A.
/// Operators are Pauli strings of range <= 2. In finite mode A sits at the
/// first window site.
CorrelatorResult correlator(const StoQmpsNetwork& net, const PauliString& a, const PauliString& b,
                            int max_distance);

/// Least-squares xi from ln|c(d)| = const - d / xi over d >= 2 with |c| > 1e-10.
std::optional<double> fit_correlation_length(const std::vector<CorrelatorPoint>& points);

struct BruteForceState {
  Matrix rho;              ///< 2^L x 2^L, first site most significant
  double shannon_entropy;  ///< H(P) of the L-site input distribution
};

/// Explicit sum over all 2^L input strings of P[n] |psi[n]><psi[n]|, with the
/// bond register traced out at the end. Requires q + L <= 14.
BruteForceState brute_force_rho(const StoQmpsNetwork& net, int length);

// --- serialization ----------------------------------------------------------

std::string free_energy_csv_header();
std::string to_csv_row(const FreeEnergyResult& r);
std::string correlator_csv_header();
std::vector<std::string> to_csv_rows(const CorrelatorResult& r);
std::string to_json(const FreeEnergyResult& r);
std::string to_json(const CorrelatorResult& r);

}  // namespace stoqmps
