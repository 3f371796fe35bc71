#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stoqmps/ansatz.hpp"
#include "stoqmps/models.hpp"
#include "stoqmps/network.hpp"
#include "stoqmps/spectrum.hpp"

namespace stoqmps {

struct NoiseModel {
  double eps_1q = 5e-4;
  double eps_2q = 8e-3;
  bool enabled = false;

  static NoiseModel noiseless() { return {}; }
  static NoiseModel depolarizing(double eps_1q = 5e-4, double eps_2q = 8e-3) { return {eps_1q, eps_2q, true}; }
  void validate() const;
};

struct SamplerConfig {
  long shots = 1200;  ///< per measurement group
  int burn_in = 5;
  int window = 6;     ///< measured sites after burn-in
  bool ancilla_init = false;
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
};

struct ShotEstimate {
  std::string observable;
  double estimate = 0.0;
  double standard_error = 0.0;  ///< sample std / sqrt(shots)
  long shots = 0;
  bool noisy = false;
};

/// Terms sharing one per-site measurement basis ('x', 'y' or 'z').
struct MeasurementGroup {
  char basis = 'z';
  std::vector<int> terms;  ///< indices into ham.terms
};

/// Minimal grouping of the Hamiltonian terms into uniform product bases,
/// ordered x, y, z. Throws InvalidArgument for terms that mix Pauli labels.
std::vector<MeasurementGroup> measurement_groups(const HamiltonianSpec& ham);

// --- register operations ------------------------------------------------------
// Registers are dense density matrices with wire 0 as the most significant bit.

/// rho -> (1 - eps) rho + eps tr_S(rho) (x) 1/2^|S| on the wires in `support`.
Matrix depolarize(const Matrix& rho, const std::vector<int>& support, double eps);

/// Conjugate by a 2x2 or 4x4 gate on wire `wire` (and wire + 1).
Matrix apply_gate(const Matrix& rho, const Matrix& gate, int wire);

/// Physical-qubit state produced by the ancilla gadget: Ry on the physical
/// qubit, CNOT onto the ancilla, ancilla measured. Returns the 2x2 physical
/// state averaged over (outcome_out == nullptr) or conditioned on a sampled
/// ancilla outcome, which is written to *outcome_out.
Matrix ancilla_init(double p, const NoiseModel& noise, Rng* rng = nullptr, int* outcome_out = nullptr);

// --- protocol -----------------------------------------------------------------

/// Per-term estimates of coefficient * <P> for the terms of `group`, averaged
/// over the window placements of each shot, followed by the summed group
/// energy (observable "group_<basis>"). Each shot resets the bond register to
/// |0...0>, streams burn_in + window sites, and measures the window in the
/// group basis.
std::vector<ShotEstimate> run_protocol(const CircuitAnsatz& ansatz, const SpectrumParams& spectrum,
                                       const MeasurementGroup& group, const HamiltonianSpec& ham,
                                       const SamplerConfig& config, const NoiseModel& noise);

/// Exact contraction of the same finite chain and placements that run_protocol
/// samples, per term in ham.terms order.
std::vector<double> protocol_exact_terms(const CircuitAnsatz& ansatz, const SpectrumParams& spectrum,
                                         const HamiltonianSpec& ham, const SamplerConfig& config);

struct SampledFreeEnergy {
  std::vector<ShotEstimate> terms;  ///< ham.terms order
  double energy = 0.0;
  double free_energy = 0.0;
  double standard_error = 0.0;  ///< combined over independent groups
  double exact_energy = 0.0;  ///< protocol_exact_terms summed
};

SampledFreeEnergy sample_free_energy(const CircuitAnsatz& ansatz, const SpectrumParams& spectrum,
                                     const HamiltonianSpec& ham, double temperature, const SamplerConfig& config,
                                     const NoiseModel& noise);

/// Raw <s_0 s_d> in a uniform basis for d = 1..max_distance, site 0 being the
/// first post-burn-in site, preceded by the single-site estimates <s_0> and
/// <s_d> (observables "<b>0", "<b><b>d", "<b>d").
std::vector<ShotEstimate> sample_correlator(const CircuitAnsatz& ansatz, const SpectrumParams& spectrum, char basis,
                                            int max_distance, const SamplerConfig& config, const NoiseModel& noise);

/// Pairwise (cascade) summation.
double pairwise_sum(const double* x, std::size_t n);

std::string shot_csv_header();
std::string to_csv_row(const ShotEstimate& e);

}  // namespace stoqmps
