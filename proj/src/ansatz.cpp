#include "stoqmps/ansatz.hpp"

#include <cmath>
#include <numbers>

namespace stoqmps {

namespace {

using Mat2 = Eigen::Matrix2cd;
using Mat4 = Eigen::Matrix4cd;

const Complex I1{0.0, 1.0};

enum class Axis { x, y, z };

Mat2 pauli(Axis a) {
  Mat2 s;
  switch (a) {
    case Axis::x: s << 0, 1, 1, 0; break;
    case Axis::y: s << 0, -I1, I1, 0; break;
    case Axis::z: s << 1, 0, 0, -1; break;
  }
  return s;
}

// R_a(t) = exp(-i t sigma_a / 2)
Mat2 rotation(Axis a, double t) {
  return std::cos(t / 2) * Mat2::Identity() - I1 * std::sin(t / 2) * pauli(a);
}

Mat2 rotation_derivative(Axis a, double t) {
  return -0.5 * I1 * pauli(a) * rotation(a, t);
}

Mat4 kron2(const Mat2& a, const Mat2& b) {
  Mat4 r;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) r.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  return r;
}

Mat4 cx_first_controls() {
  Mat4 m = Mat4::Zero();
  m(0, 0) = m(1, 1) = m(2, 3) = m(3, 2) = 1;
  return m;
}

Mat4 cx_second_controls() {
  Mat4 m = Mat4::Zero();
  m(0, 0) = m(2, 2) = m(1, 3) = m(3, 1) = 1;
  return m;
}

constexpr std::array<Axis, 3> kEuler{Axis::x, Axis::z, Axis::x};
constexpr std::array<Axis, 3> kCore{Axis::z, Axis::y, Axis::y};

// Single-qubit rotations making up the gate. Indices follow GateParams.
std::array<Mat2, 15> rotations(const GateParams& t) {
  std::array<Mat2, 15> r;
  for (int k = 0; k < 12; ++k) r[k] = rotation(kEuler[k % 3], t[k]);
  for (int k = 12; k < 15; ++k) r[k] = rotation(kCore[k - 12], t[k]);
  return r;
}

Mat4 assemble(const std::array<Mat2, 15>& r) {
  static const Mat4 cx01 = cx_first_controls();
  static const Mat4 cx10 = cx_second_controls();
  const Complex phase = std::polar(1.0, std::numbers::pi / 4);
  const Mat4 pre = kron2(r[0] * r[1] * r[2], r[3] * r[4] * r[5]);
  const Mat4 post = kron2(r[6] * r[7] * r[8], r[9] * r[10] * r[11]);
  const Mat4 core = cx10 * kron2(Mat2::Identity(), r[14]) * cx01 * kron2(r[12], r[13]) * cx10;
  return phase * post * core * pre;
}

void check_finite(const GateParams& p) {
  for (double v : p)
    if (!std::isfinite(v)) throw InvalidArgument("gate angle is not finite");
}

}  // namespace

std::string to_string(Geometry g) { return g == Geometry::ladder ? "ladder" : "brick"; }

std::string to_string(Parameterization p) {
  return p == Parameterization::angles ? "angles" : "raw-matrix";
}

Geometry parse_geometry(const std::string& s) {
  if (s == "ladder") return Geometry::ladder;
  if (s == "brick") return Geometry::brick;
  throw InvalidArgument("unknown geometry '" + s + "' (expected ladder or brick)");
}

Parameterization parse_parameterization(const std::string& s) {
  if (s == "angles") return Parameterization::angles;
  if (s == "raw-matrix" || s == "raw") return Parameterization::raw_matrix;
  throw InvalidArgument("unknown parameterization '" + s + "' (expected angles or raw-matrix)");
}

std::size_t layer_gate_count(int q, int layer, Geometry geometry) {
  if (geometry == Geometry::ladder) return static_cast<std::size_t>(q);
  // brick: even layers pair (0,1),(2,3),...; odd layers pair (1,2),(3,4),...
  const int first = layer % 2;
  return q > first ? static_cast<std::size_t>((q - first + 1) / 2) : 0;
}

std::vector<int> gate_layout(int q, int tau, Geometry geometry) {
  std::vector<int> wires;
  for (int layer = 0; layer < tau; ++layer) {
    if (geometry == Geometry::ladder) {
      for (int w = 0; w < q; ++w) wires.push_back(w);
    } else {
      for (int w = layer % 2; w + 1 <= q; w += 2) wires.push_back(w);
    }
  }
  return wires;
}

std::size_t CircuitAnsatz::gate_count() const { return gate_layout(q, tau, geometry).size(); }

void CircuitAnsatz::validate() const {
  if (q < 0 || tau < 0) throw InvalidArgument("q and tau must be non-negative");
  if (q == 0 && tau > 0) throw InvalidArgument("q = 0 leaves no two-qubit gate slots; tau must be 0");
  if (q > 0 && tau < 1) throw InvalidArgument("tau must be at least 1 when q > 0");
  if (q > 10) throw InvalidArgument("q > 10 is not supported by dense contraction");
  const std::size_t n = gate_count();
  if (mode == Parameterization::angles) {
    if (angles.size() != n)
      throw InvalidArgument("expected " + std::to_string(n) + " gate parameter sets, got " +
                            std::to_string(angles.size()));
    for (const auto& g : angles) check_finite(g);
  } else {
    if (raw.size() != n)
      throw InvalidArgument("expected " + std::to_string(n) + " raw gate matrices, got " +
                            std::to_string(raw.size()));
    for (const auto& m : raw) {
      if (m.rows() != 4 || m.cols() != 4) throw InvalidArgument("raw gate must be 4x4");
      if (!m.allFinite()) throw InvalidArgument("raw gate entries must be finite");
    }
  }
}

Matrix build_su4(const GateParams& params) {
  check_finite(params);
  return assemble(rotations(params));
}

std::array<Matrix, 15> su4_derivatives(const GateParams& params) {
  check_finite(params);
  const auto r = rotations(params);
  std::array<Matrix, 15> d;
  for (int k = 0; k < 15; ++k) {
    auto rk = r;
    rk[k] = rotation_derivative(k < 12 ? kEuler[k % 3] : kCore[k - 12], params[k]);
    d[k] = assemble(rk);
  }
  return d;
}

const GateParams& identity_gate_params() {
  constexpr double h = std::numbers::pi / 2;
  static const GateParams g0{0, 0, 0, 0, 0, 0, 0, -h, -2 * h, 0, -h, -2 * h, -h, -h, 3 * h};
  return g0;
}

Matrix reunitarize(const Matrix& m) {
  if (m.rows() != m.cols()) throw InvalidArgument("reunitarize expects a square matrix");
  if (!m.allFinite()) throw InvalidArgument("reunitarize: non-finite entries");
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) <= 0.0 || sv(0) / sv(sv.size() - 1) > 1e12)
    throw NumericalError("reunitarize: matrix is rank deficient (condition number above 1e12)");
  Eigen::HouseholderQR<Matrix> qr(m);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    const Complex d = r(i, i);
    q.col(i) *= d / std::abs(d);
  }
  return q;
}

Matrix reunitarize_pullback(const Matrix& m, const Matrix& gq) {
  const Matrix q = reunitarize(m);
  const Matrix r = q.adjoint() * m;  // upper triangular, positive diagonal
  const Matrix g = q.adjoint() * gq;
  const Eigen::Index n = g.rows();
  Matrix p = Matrix::Zero(n, n);
  const Matrix gh = g.adjoint();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) p(i, j) = g(i, j) - gh(i, j);
    p(i, i) = Complex(0.0, g(i, i).imag());
  }
  // gm = Q p R^{-H}, solved as (R^{-1} p^H Q^H)^H.
  const Matrix rt = r.triangularView<Eigen::Upper>();
  const Matrix x = rt.triangularView<Eigen::Upper>().solve(Matrix(p.adjoint() * q.adjoint()));
  return x.adjoint();
}

std::vector<Matrix> gate_unitaries(const CircuitAnsatz& ansatz) {
  std::vector<Matrix> gates;
  if (ansatz.mode == Parameterization::angles) {
    gates.reserve(ansatz.angles.size());
    for (const auto& p : ansatz.angles) gates.push_back(build_su4(p));
  } else {
    gates.reserve(ansatz.raw.size());
    for (const auto& m : ansatz.raw) gates.push_back(reunitarize(m));
  }
  return gates;
}

Matrix embed_gate(const Matrix& gate, int wire, int n_wires) {
  const Eigen::Index left = Eigen::Index(1) << wire;
  const Eigen::Index right = Eigen::Index(1) << (n_wires - wire - 2);
  const Eigen::Index dim = left * 4 * right;
  Matrix e = Matrix::Zero(dim, dim);
  for (Eigen::Index l = 0; l < left; ++l)
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        const Complex v = gate(a, b);
        if (v == Complex(0.0)) continue;
        for (Eigen::Index r = 0; r < right; ++r)
          e((l * 4 + a) * right + r, (l * 4 + b) * right + r) = v;
      }
  return e;
}

Matrix build_site_unitary(const CircuitAnsatz& ansatz) {
  ansatz.validate();
  const int n_wires = ansatz.q + 1;
  Matrix u = Matrix::Identity(ansatz.site_dim(), ansatz.site_dim());
  const auto layout = gate_layout(ansatz.q, ansatz.tau, ansatz.geometry);
  const auto gates = gate_unitaries(ansatz);
  for (std::size_t g = 0; g < gates.size(); ++g) u = embed_gate(gates[g], layout[g], n_wires) * u;
  return u;
}

RealVector flatten(const CircuitAnsatz& ansatz) {
  RealVector x(static_cast<Eigen::Index>(ansatz.parameter_count()));
  Eigen::Index k = 0;
  if (ansatz.mode == Parameterization::angles) {
    for (const auto& g : ansatz.angles)
      for (double v : g) x(k++) = v;
  } else {
    for (const auto& m : ansatz.raw)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          x(k++) = m(i, j).real();
          x(k++) = m(i, j).imag();
        }
  }
  return x;
}

void unflatten(CircuitAnsatz& ansatz, const Eigen::Ref<const RealVector>& x) {
  const std::size_t n = ansatz.gate_count();
  if (static_cast<std::size_t>(x.size()) != n * ansatz.parameters_per_gate())
    throw InvalidArgument("parameter vector length does not match the ansatz");
  Eigen::Index k = 0;
  if (ansatz.mode == Parameterization::angles) {
    ansatz.angles.assign(n, GateParams{});
    for (auto& g : ansatz.angles)
      for (double& v : g) v = x(k++);
  } else {
    ansatz.raw.assign(n, Matrix(4, 4));
    for (auto& m : ansatz.raw)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          m(i, j) = Complex(x(k), x(k + 1));
          k += 2;
        }
  }
}

RealVector site_unitary_gradient(const CircuitAnsatz& ansatz, const Matrix& gamma) {
  const auto layout = gate_layout(ansatz.q, ansatz.tau, ansatz.geometry);
  const auto gates = gate_unitaries(ansatz);
  const std::size_t n = gates.size();
  const int n_wires = ansatz.q + 1;
  const Eigen::Index dim = ansatz.site_dim();
  RealVector grad(static_cast<Eigen::Index>(ansatz.parameter_count()));
  if (n == 0) return grad;

  std::vector<Matrix> embedded(n);
  for (std::size_t g = 0; g < n; ++g) embedded[g] = embed_gate(gates[g], layout[g], n_wires);
  // suffix[g] = E_{n-1} ... E_{g+1}
  std::vector<Matrix> suffix(n);
  suffix[n - 1] = Matrix::Identity(dim, dim);
  for (std::size_t g = n - 1; g > 0; --g) suffix[g - 1] = suffix[g] * embedded[g];

  Matrix prefix = Matrix::Identity(dim, dim);  // E_{g-1} ... E_0
  const std::size_t per_gate = ansatz.parameters_per_gate();
  for (std::size_t g = 0; g < n; ++g) {
    const Matrix ge = suffix[g].adjoint() * gamma * prefix.adjoint();
    // Partial trace over wires outside (w, w+1).
    const Eigen::Index left = Eigen::Index(1) << layout[g];
    const Eigen::Index right = Eigen::Index(1) << (n_wires - layout[g] - 2);
    Matrix gg = Matrix::Zero(4, 4);
    for (Eigen::Index l = 0; l < left; ++l)
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          for (Eigen::Index r = 0; r < right; ++r)
            gg(a, b) += ge((l * 4 + a) * right + r, (l * 4 + b) * right + r);

    const Eigen::Index offset = static_cast<Eigen::Index>(g * per_gate);
    if (ansatz.mode == Parameterization::angles) {
      const auto d = su4_derivatives(ansatz.angles[g]);
      for (int k = 0; k < 15; ++k) grad(offset + k) = 2.0 * (gg.conjugate().cwiseProduct(d[k])).sum().real();
    } else {
      const Matrix gm = reunitarize_pullback(ansatz.raw[g], gg);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          grad(offset + 2 * (4 * i + j)) = 2.0 * gm(i, j).real();
          grad(offset + 2 * (4 * i + j) + 1) = 2.0 * gm(i, j).imag();
        }
    }
    prefix = embedded[g] * prefix;
  }
  return grad;
}

CircuitAnsatz random_ansatz(int q, int tau, Geometry geometry, Parameterization mode, Rng& rng) {
  CircuitAnsatz a;
  a.q = q;
  a.tau = tau;
  a.geometry = geometry;
  a.mode = mode;
  const std::size_t n = gate_layout(q, tau, geometry).size();
  if (mode == Parameterization::angles) {
    std::uniform_real_distribution<double> angle(0.0, 2 * std::numbers::pi);
    a.angles.resize(n);
    for (auto& g : a.angles)
      for (double& v : g) v = angle(rng);
  } else {
    std::normal_distribution<double> normal;
    for (std::size_t g = 0; g < n; ++g) {
      Matrix m(4, 4);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) m(i, j) = Complex(normal(rng), normal(rng));
      a.raw.push_back(reunitarize(m));
    }
  }
  a.validate();
  return a;
}

CircuitAnsatz append_identity_layer(const CircuitAnsatz& ansatz) {
  if (ansatz.q == 0) throw InvalidArgument("cannot add a gate layer with q = 0");
  CircuitAnsatz out = ansatz;
  const std::size_t added = layer_gate_count(ansatz.q, ansatz.tau, ansatz.geometry);
  out.tau += 1;
  for (std::size_t i = 0; i < added; ++i) {
    if (out.mode == Parameterization::angles)
      out.angles.push_back(identity_gate_params());
    else
      out.raw.push_back(Matrix::Identity(4, 4));
  }
  return out;
}

CircuitAnsatz trivial_ansatz() {
  CircuitAnsatz a;
  a.q = 0;
  a.tau = 0;
  return a;
}

}  // namespace stoqmps
