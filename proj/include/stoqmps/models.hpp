#pragma once

#include <string>
#include <vector>

#include "stoqmps/common.hpp"

namespace stoqmps {

/// Product of Pauli labels on consecutive sites 0..range-1 with a real
/// coefficient. Labels are from "IXYZ"; the first and last label are
/// non-identity so that range() is the true support.
struct PauliString {
  std::string labels;
  double coefficient = 1.0;

  int range() const { return static_cast<int>(labels.size()); }
  void validate() const;
};

/// One translation cell h_i of H = sum_i h_i.
struct HamiltonianSpec {
  std::string name;
  std::vector<PauliString> terms;
  double V = 0.0;  ///< SDIM perturbation; 0 for other models

  int max_range() const;
  void validate() const;
};

/// -(XX + Z) + V (ZZ + X I X). At V = 0 only the transverse-field Ising terms remain.
HamiltonianSpec sdim(double V);
/// XX + YY + ZZ.
HamiltonianSpec heisenberg();

Matrix pauli_matrix(char label);
/// Kronecker product over the labels, first label most significant.
Matrix dense_term_matrix(const PauliString& term);
/// Sum of all terms of one cell, each padded with identities on the right to `range` sites.
Matrix cell_matrix(const HamiltonianSpec& ham, int range);

/// Stable identifier for caches and file names, e.g. "sdim_V=1".
std::string model_key(const HamiltonianSpec& ham);

}  // namespace stoqmps
