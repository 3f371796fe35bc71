#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "stoqmps/common.hpp"

namespace stoqmps {

// Classical distributions P over the physical-qubit input bits n_x in {0, 1}.
// Spin variables are s = (-1)^n, so n = 0 <-> s = +1. Correlated spectra are
// Boltzmann weights of W = -sum_i [J s_i s_{i+1} + h s_i].

enum class SpectrumKind { psa, csa };

std::string to_string(SpectrumKind k);
SpectrumKind parse_spectrum_kind(const std::string& s);

struct SpectrumParams {
  SpectrumKind kind = SpectrumKind::psa;
  double p = 0.5;  ///< PSA: probability of initializing |1>
  double J = 0.0;  ///< CSA coupling
  double h = 0.0;  ///< CSA field

  static SpectrumParams product(double p);
  static SpectrumParams correlated(double J, double h);

  void validate() const;
  int parameter_count() const { return kind == SpectrumKind::psa ? 1 : 2; }
  RealVector flatten() const;
  void unflatten(const Eigen::Ref<const RealVector>& x);
};

/// P(n = 1) of an uncorrelated chain with field h, i.e. e^{-h} / (2 cosh h).
double psa_probability_from_field(double h);

/// Binary Shannon entropy in nats, with 0 ln 0 = 0.
double binary_entropy(double p);

struct TransferSpectrum {
  double lambda_plus = 0.0;
  double lambda_minus = 0.0;
  Eigen::Vector2d vector_plus;   ///< unit eigenvector of lambda_plus, positive entries
  Eigen::Vector2d vector_minus;  ///< unit eigenvector of lambda_minus
  double a_plus = 0.0;           ///< <1|vector_plus> with |1> = (1, 1)
  double a_minus = 0.0;
};

/// [[e^{b(J+h)}, e^{-bJ}], [e^{-bJ}, e^{b(J-h)}]], rows/columns ordered s = +1, -1.
/// Throws NumericalError when |bJ| or |bh| exceeds 300.
Eigen::Matrix2d transfer_matrix(const SpectrumParams& params, double beta);
TransferSpectrum eigenvalues(const SpectrumParams& params, double beta);

/// Thermodynamic-limit entropy density (nats per site).
double entropy_density(const SpectrumParams& params);
/// Gradient of entropy_density over SpectrumParams::flatten().
RealVector entropy_density_gradient(const SpectrumParams& params);

/// Exact Shannon entropy of the L-site open chain distribution. For CSA this
/// uses both transfer-matrix eigenvalues.
double finite_entropy(const SpectrumParams& params, int length);

using Bitstring = std::vector<int>;

/// Exact log-probability under the open-chain distribution (field on every site).
double log_prob(const SpectrumParams& params, std::span<const int> bits);

Bitstring sample_bitstring(const SpectrumParams& params, int length, Rng& rng);

/// Entropy density of P ~ exp(-sum_i w(n_i..n_{i+k-1})) with w given as a
/// 2^k table (first site is the most significant index bit). Uses the
/// 2^k x 2^k transfer matrix over k-bit windows and a central difference in
/// beta with step 1e-6. Throws NumericalError for a degenerate dominant
/// eigenvalue (relative gap < 1e-10).
double entropy_density_general(std::span<const double> table, int k);

// --- per-site input distributions -------------------------------------------
//
// A kernel gives w[c][n], the probability that the next input bit is n given
// the classical index c. PSA carries a single classical index (c = 0); CSA
// carries the previous input bit. The first CSA kernel holds the first-site
// marginal in both rows.

struct InputKernel {
  std::array<std::array<double, 2>, 2> w{};
};

/// Derivative of each kernel entry with respect to the spectrum parameters:
/// d[param][c][n].
struct KernelDerivative {
  std::array<std::array<std::array<double, 2>, 2>, 2> d{};
};

int classical_dim(const SpectrumParams& params);

/// Exact sequential conditionals of the L-site open chain, one per site.
std::vector<InputKernel> finite_kernels(const SpectrumParams& params, int length,
                                        std::vector<KernelDerivative>* derivative = nullptr);

/// Bulk conditionals of the infinite chain (Markov kernel of the dominant
/// transfer-matrix eigenvector).
InputKernel stationary_kernel(const SpectrumParams& params, KernelDerivative* derivative = nullptr);

/// Stationary marginal of the bulk chain, indexed by bit.
std::array<double, 2> stationary_marginal(const SpectrumParams& params);

}  // namespace stoqmps
