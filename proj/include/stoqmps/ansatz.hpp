#pragma once

#include <array>
#include <string>
#include <vector>

#include "stoqmps/common.hpp"

namespace stoqmps {

// Wire convention for a site unitary on 1 physical + q bond qubits:
// wire 0 is the physical qubit (most significant bit of the 2^(q+1) index),
// wires 1..q are bond qubits in order. A two-qubit gate always acts on an
// adjacent pair (w, w+1) with wire w as the gate's first (most significant)
// qubit.

/// Fifteen angles of one two-qubit gate.
///
///   [0..2]   A1 = Rx(t0) Rz(t1) Rx(t2) on the gate's first qubit, applied first
///   [3..5]   A2, same form, on the second qubit, applied first
///   [6..8]   A3 on the first qubit, applied last
///   [9..11]  A4 on the second qubit, applied last
///   [12..14] core angles: Rz(t12) (x) Ry(t13) between the first two CNOTs,
///            then 1 (x) Ry(t14) between the last two
///
/// The full gate is e^{i pi/4} (A3 (x) A4) CX10 (1 (x) Ry) CX01 (Rz (x) Ry) CX10 (A1 (x) A2),
/// where CX01 has control on the first qubit and CX10 on the second.
/// The global phase places the result in SU(4).
using GateParams = std::array<double, 15>;

enum class Geometry { ladder, brick };
enum class Parameterization { angles, raw_matrix };

std::string to_string(Geometry g);
std::string to_string(Parameterization p);
Geometry parse_geometry(const std::string& s);
Parameterization parse_parameterization(const std::string& s);

/// Circuit geometry plus per-gate parameters for one translation-invariant site.
struct CircuitAnsatz {
  int q = 1;    ///< bond qubits
  int tau = 1;  ///< layers
  Geometry geometry = Geometry::ladder;
  Parameterization mode = Parameterization::angles;
  std::vector<GateParams> angles;  ///< angle mode, one entry per gate slot
  std::vector<Matrix> raw;         ///< raw-matrix mode, 4x4 each, re-unitarized before use

  int bond_dim() const { return 1 << q; }
  int site_dim() const { return 2 << q; }
  std::size_t gate_count() const;
  std::size_t parameters_per_gate() const { return mode == Parameterization::angles ? 15 : 32; }
  std::size_t parameter_count() const { return gate_count() * parameters_per_gate(); }

  /// Throws InvalidArgument when the geometry or parameter storage is inconsistent.
  void validate() const;
};

/// Ordered gate slots; entry i is the upper wire of gate i, in time order.
std::vector<int> gate_layout(int q, int tau, Geometry geometry);
std::size_t layer_gate_count(int q, int layer, Geometry geometry);

Matrix build_su4(const GateParams& params);

/// d(build_su4)/d(params[k]) for all 15 angles.
std::array<Matrix, 15> su4_derivatives(const GateParams& params);

/// Angles with build_su4(identity_gate_params()) == 1 (up to rounding).
const GateParams& identity_gate_params();

/// Q factor of M = QR with real positive diag(R). Throws NumericalError when
/// cond(M) > 1e12.
Matrix reunitarize(const Matrix& m);

/// Pull back a gradient through reunitarize. With Q = reunitarize(M) and
/// df = 2 Re tr(gq^H dQ), returns gm such that df = 2 Re tr(gm^H dM).
Matrix reunitarize_pullback(const Matrix& m, const Matrix& gq);

/// The 4x4 unitaries actually applied, one per slot.
std::vector<Matrix> gate_unitaries(const CircuitAnsatz& ansatz);

/// Embed a 4x4 gate on wires (w, w+1) of an n-wire register.
Matrix embed_gate(const Matrix& gate, int wire, int n_wires);

Matrix build_site_unitary(const CircuitAnsatz& ansatz);

/// Flat parameter vector: gates in slot order, 15 angles or 32 interleaved
/// (re, im) row-major entries per gate.
RealVector flatten(const CircuitAnsatz& ansatz);
void unflatten(CircuitAnsatz& ansatz, const Eigen::Ref<const RealVector>& x);

/// Given gamma = df/d(conj U) for the site unitary (df = 2 Re tr(gamma^H dU)),
/// returns df/dx over the flat parameter vector.
RealVector site_unitary_gradient(const CircuitAnsatz& ansatz, const Matrix& gamma);

/// Random initialization: angles iid uniform [0, 2pi); raw mode uses
/// re-unitarized complex Gaussian matrices.
CircuitAnsatz random_ansatz(int q, int tau, Geometry geometry, Parameterization mode, Rng& rng);

/// Copy with one more layer whose gates are all identity.
CircuitAnsatz append_identity_layer(const CircuitAnsatz& ansatz);

/// Trivial ansatz with q = 0, tau = 0: the site unitary is the 2x2 identity.
CircuitAnsatz trivial_ansatz();

}  // namespace stoqmps
