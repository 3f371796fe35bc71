#include "stoqmps/models.hpp"

#include <cmath>
#include <sstream>

namespace stoqmps {

void PauliString::validate() const {
  if (labels.empty() || labels.size() > 3) throw InvalidArgument("Pauli string range must be 1..3");
  for (char c : labels)
    if (c != 'I' && c != 'X' && c != 'Y' && c != 'Z')
      throw InvalidArgument(std::string("invalid Pauli label '") + c + "'");
  if (labels.front() == 'I' || labels.back() == 'I')
    throw InvalidArgument("Pauli string '" + labels + "' must start and end with a non-identity label");
  if (!std::isfinite(coefficient)) throw InvalidArgument("Pauli coefficient must be finite");
}

int HamiltonianSpec::max_range() const {
  int r = 0;
  for (const auto& t : terms) r = std::max(r, t.range());
  return r;
}

void HamiltonianSpec::validate() const {
  if (terms.empty()) throw InvalidArgument("Hamiltonian has no terms");
  for (const auto& t : terms) t.validate();
  if (!std::isfinite(V)) throw InvalidArgument("model parameter V must be finite");
}

HamiltonianSpec sdim(double V) {
  if (!std::isfinite(V)) throw InvalidArgument("model parameter V must be finite");
  HamiltonianSpec h;
  h.name = "sdim";
  h.V = V;
  h.terms = {{"XX", -1.0}, {"Z", -1.0}};
  if (V != 0.0) {
    h.terms.push_back({"ZZ", V});
    h.terms.push_back({"XIX", V});
  }
  return h;
}

HamiltonianSpec heisenberg() {
  HamiltonianSpec h;
  h.name = "heisenberg";
  h.terms = {{"XX", 1.0}, {"YY", 1.0}, {"ZZ", 1.0}};
  return h;
}

Matrix pauli_matrix(char label) {
  Matrix m = Matrix::Zero(2, 2);
  switch (label) {
    case 'I': m(0, 0) = m(1, 1) = 1.0; break;
    case 'X': m(0, 1) = m(1, 0) = 1.0; break;
    case 'Y': m(0, 1) = Complex(0, -1); m(1, 0) = Complex(0, 1); break;
    case 'Z': m(0, 0) = 1.0; m(1, 1) = -1.0; break;
    default: throw InvalidArgument(std::string("invalid Pauli label '") + label + "'");
  }
  return m;
}

namespace {

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

}  // namespace

Matrix dense_term_matrix(const PauliString& term) {
  term.validate();
  Matrix m = Matrix::Ones(1, 1);
  for (char c : term.labels) m = kron(m, pauli_matrix(c));
  return term.coefficient * m;
}

Matrix cell_matrix(const HamiltonianSpec& ham, int range) {
  ham.validate();
  if (range < ham.max_range()) throw InvalidArgument("cell range smaller than the Hamiltonian's support");
  const Eigen::Index dim = Eigen::Index(1) << range;
  Matrix h = Matrix::Zero(dim, dim);
  for (const auto& t : ham.terms) {
    const Eigen::Index pad = Eigen::Index(1) << (range - t.range());
    h += kron(dense_term_matrix(t), Matrix::Identity(pad, pad));
  }
  return h;
}

std::string model_key(const HamiltonianSpec& ham) {
  if (ham.name == "sdim") {
    std::ostringstream os;
    os.precision(12);
    os << "sdim_V=" << ham.V;
    return os.str();
  }
  return ham.name;
}

}  // namespace stoqmps
