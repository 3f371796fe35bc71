#include "stoqmps/spectrum.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "stoqmps/dual.hpp"

namespace stoqmps {

namespace {

using std::cosh;
using std::exp;
using std::log;
using std::sinh;
using std::sqrt;

constexpr double kOverflowGuard = 300.0;

void check_range(double J, double h, double beta) {
  if (!std::isfinite(J) || !std::isfinite(h) || !std::isfinite(beta))
    throw InvalidArgument("spectrum parameters must be finite");
  if (std::abs(beta * J) > kOverflowGuard || std::abs(beta * h) > kOverflowGuard)
    throw NumericalError("|beta J| or |beta h| exceeds 300; rescale the couplings");
}

inline int spin(int n) { return 1 - 2 * n; }

template <class S>
struct Transfer {
  S t[2][2];
  S v[2];  // open-boundary half-field vector
};

template <class S>
Transfer<S> make_transfer(const S& J, const S& h, const S& beta) {
  Transfer<S> tr;
  for (int n = 0; n < 2; ++n) {
    tr.v[n] = exp(beta * h * (0.5 * spin(n)));
    for (int m = 0; m < 2; ++m)
      tr.t[n][m] = exp(beta * (J * double(spin(n) * spin(m)) + h * (0.5 * (spin(n) + spin(m)))));
  }
  return tr;
}

// lambda_+ - T00 without cancellation: (lambda - a)(lambda - d) = b^2.
template <class S>
S dominant_minus_first(const S& a, const S& b, const S& d, const S& lambda) {
  if (value_of(a) >= value_of(d)) return b * b / (lambda - d);
  const S half = (d - a) * 0.5;
  return half + sqrt(half * half + b * b);
}

template <class S>
S dominant_eigenvalue(const S& a, const S& b, const S& d) {
  const S half = (a - d) * 0.5;
  return (a + d) * 0.5 + sqrt(half * half + b * b);
}

using Kernel = std::array<std::array<double, 2>, 2>;

template <class S>
using KernelT = std::array<std::array<S, 2>, 2>;

template <class S>
std::vector<KernelT<S>> finite_kernels_t(const S& J, const S& h, int length) {
  const auto tr = make_transfer(J, h, S(1.0));
  std::vector<std::array<S, 2>> b(length);
  b[length - 1] = {tr.v[0], tr.v[1]};
  for (int k = length - 2; k >= 0; --k) {
    std::array<S, 2> x;
    for (int n = 0; n < 2; ++n) x[n] = tr.t[n][0] * b[k + 1][0] + tr.t[n][1] * b[k + 1][1];
    const S norm = x[0] + x[1];
    b[k] = {x[0] / norm, x[1] / norm};
  }
  std::vector<KernelT<S>> kernels(length);
  {
    const S w0 = tr.v[0] * b[0][0];
    const S w1 = tr.v[1] * b[0][1];
    const S z = w0 + w1;
    for (int c = 0; c < 2; ++c) kernels[0][c] = {w0 / z, w1 / z};
  }
  for (int k = 1; k < length; ++k)
    for (int c = 0; c < 2; ++c) {
      const S w0 = tr.t[c][0] * b[k][0];
      const S w1 = tr.t[c][1] * b[k][1];
      const S z = w0 + w1;
      kernels[k][c] = {w0 / z, w1 / z};
    }
  return kernels;
}

template <class S>
KernelT<S> stationary_kernel_t(const S& J, const S& h) {
  const auto tr = make_transfer(J, h, S(1.0));
  const S& a = tr.t[0][0];
  const S& b = tr.t[0][1];
  const S& d = tr.t[1][1];
  const S lambda = dominant_eigenvalue(a, b, d);
  const std::array<S, 2> r{b, dominant_minus_first(a, b, d, lambda)};
  KernelT<S> k;
  for (int c = 0; c < 2; ++c) {
    const S w0 = tr.t[c][0] * r[0];
    const S w1 = tr.t[c][1] * r[1];
    const S z = w0 + w1;
    k[c] = {w0 / z, w1 / z};
  }
  return k;
}

template <class S>
S csa_entropy_density_t(const S& J, const S& h) {
  const S eJ = exp(J);
  const S e2J = eJ * eJ;
  const S em2J = 1.0 / e2J;
  const S ch = cosh(h);
  const S sh = sinh(h);
  const S a = eJ * ch;
  const S r = sqrt(e2J * sh * sh + em2J);
  const S lambda = a + r;
  const S da = J * eJ * ch + h * eJ * sh;
  const S dr = (J * e2J * sh * sh + h * e2J * sh * ch - J * em2J) / r;
  return log(lambda) - (da + dr) / lambda;
}

template <class S>
S power(S base, int exponent) {
  S result(1.0);
  while (exponent > 0) {
    if (exponent & 1) result = result * base;
    base = base * base;
    exponent >>= 1;
  }
  return result;
}

Kernel to_double(const KernelT<double>& k) { return k; }

}  // namespace

std::string to_string(SpectrumKind k) { return k == SpectrumKind::psa ? "psa" : "csa"; }

SpectrumKind parse_spectrum_kind(const std::string& s) {
  if (s == "psa") return SpectrumKind::psa;
  if (s == "csa") return SpectrumKind::csa;
  throw InvalidArgument("unknown spectrum kind '" + s + "' (expected psa or csa)");
}

SpectrumParams SpectrumParams::product(double p) {
  SpectrumParams s;
  s.kind = SpectrumKind::psa;
  s.p = p;
  s.validate();
  return s;
}

SpectrumParams SpectrumParams::correlated(double J, double h) {
  SpectrumParams s;
  s.kind = SpectrumKind::csa;
  s.J = J;
  s.h = h;
  s.validate();
  return s;
}

void SpectrumParams::validate() const {
  if (kind == SpectrumKind::psa) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("PSA probability must lie in [0, 1]");
  } else {
    if (!std::isfinite(J) || !std::isfinite(h)) throw InvalidArgument("CSA couplings must be finite");
  }
}

RealVector SpectrumParams::flatten() const {
  if (kind == SpectrumKind::psa) return RealVector::Constant(1, p);
  RealVector x(2);
  x << J, h;
  return x;
}

void SpectrumParams::unflatten(const Eigen::Ref<const RealVector>& x) {
  if (x.size() != parameter_count()) throw InvalidArgument("spectrum parameter vector has wrong length");
  if (kind == SpectrumKind::psa) {
    p = x(0);
  } else {
    J = x(0);
    h = x(1);
  }
}

double psa_probability_from_field(double h) { return std::exp(-h) / (2.0 * std::cosh(h)); }

double binary_entropy(double p) {
  double s = 0.0;
  if (p > 0.0) s -= p * std::log(p);
  if (p < 1.0) s -= (1.0 - p) * std::log1p(-p);
  return s;
}

Eigen::Matrix2d transfer_matrix(const SpectrumParams& params, double beta) {
  if (params.kind != SpectrumKind::csa) throw InvalidArgument("transfer_matrix expects CSA parameters");
  check_range(params.J, params.h, beta);
  const auto tr = make_transfer(params.J, params.h, beta);
  Eigen::Matrix2d m;
  m << tr.t[0][0], tr.t[0][1], tr.t[1][0], tr.t[1][1];
  return m;
}

TransferSpectrum eigenvalues(const SpectrumParams& params, double beta) {
  const Eigen::Matrix2d t = transfer_matrix(params, beta);
  const double bj = beta * params.J;
  const double bh = beta * params.h;
  const double a = std::exp(bj) * std::cosh(bh);
  const double root = std::sqrt(std::exp(2 * bj) * std::sinh(bh) * std::sinh(bh) + std::exp(-2 * bj));
  TransferSpectrum ts;
  ts.lambda_plus = a + root;
  ts.lambda_minus = a - root;
  const double gap = dominant_minus_first(t(0, 0), t(0, 1), t(1, 1), ts.lambda_plus);
  ts.vector_plus = Eigen::Vector2d(t(0, 1), gap).normalized();
  ts.vector_minus = Eigen::Vector2d(-ts.vector_plus(1), ts.vector_plus(0));
  ts.a_plus = ts.vector_plus.sum();
  ts.a_minus = ts.vector_minus.sum();
  return ts;
}

double entropy_density(const SpectrumParams& params) {
  params.validate();
  if (params.kind == SpectrumKind::psa) return binary_entropy(params.p);
  check_range(params.J, params.h, 1.0);
  return std::clamp(csa_entropy_density_t(params.J, params.h), 0.0, std::log(2.0));
}

RealVector entropy_density_gradient(const SpectrumParams& params) {
  params.validate();
  if (params.kind == SpectrumKind::psa) {
    const double p = std::clamp(params.p, 1e-15, 1.0 - 1e-15);
    return RealVector::Constant(1, std::log1p(-p) - std::log(p));
  }
  check_range(params.J, params.h, 1.0);
  const auto s = csa_entropy_density_t(Dual<2>::variable(params.J, 0), Dual<2>::variable(params.h, 1));
  RealVector g(2);
  g << s.d[0], s.d[1];
  return g;
}

double finite_entropy(const SpectrumParams& params, int length) {
  params.validate();
  if (length < 1) throw InvalidArgument("chain length must be at least 1");
  if (params.kind == SpectrumKind::psa) return length * binary_entropy(params.p);
  check_range(params.J, params.h, 1.0);
  using D = Dual<1>;
  const D beta = D::variable(1.0, 0);
  const auto tr = make_transfer(D(params.J), D(params.h), beta);
  const D& a = tr.t[0][0];
  const D& b = tr.t[0][1];
  const D& d = tr.t[1][1];
  const D lp = dominant_eigenvalue(a, b, d);
  const D lm = a + d - lp;
  const D g = dominant_minus_first(a, b, d, lp);
  const D norm = sqrt(b * b + g * g);
  const D rp0 = b / norm, rp1 = g / norm;  // dominant eigenvector
  const D rm0 = -rp1, rm1 = rp0;           // orthogonal complement
  const D cp = tr.v[0] * rp0 + tr.v[1] * rp1;
  const D cm = tr.v[0] * rm0 + tr.v[1] * rm1;
  const D ratio = power(lm / lp, length - 1);
  const D log_z = double(length - 1) * log(lp) + log(cp * cp + cm * cm * ratio);
  return log_z.v - log_z.d[0];
}

double log_prob(const SpectrumParams& params, std::span<const int> bits) {
  params.validate();
  if (bits.empty()) throw InvalidArgument("bitstring must have at least one site");
  for (int n : bits)
    if (n != 0 && n != 1) throw InvalidArgument("bit values must be 0 or 1");
  if (params.kind == SpectrumKind::psa) {
    double lp = 0.0;
    for (int n : bits) lp += n == 1 ? std::log(params.p) : std::log1p(-params.p);
    return lp;
  }
  check_range(params.J, params.h, 1.0);
  const auto tr = make_transfer(params.J, params.h, 1.0);
  // log Z = log(v^T T^{L-1} v), accumulated with per-step normalization.
  std::array<double, 2> x{tr.v[0], tr.v[1]};
  double log_scale = 0.0;
  for (std::size_t i = 1; i < bits.size(); ++i) {
    std::array<double, 2> y{};
    for (int n = 0; n < 2; ++n) y[n] = tr.t[n][0] * x[0] + tr.t[n][1] * x[1];
    const double norm = y[0] + y[1];
    log_scale += std::log(norm);
    x = {y[0] / norm, y[1] / norm};
  }
  const double log_z = log_scale + std::log(tr.v[0] * x[0] + tr.v[1] * x[1]);
  double minus_w = 0.0;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    minus_w += params.h * spin(bits[i]);
    if (i + 1 < bits.size()) minus_w += params.J * spin(bits[i]) * spin(bits[i + 1]);
  }
  return minus_w - log_z;
}

Bitstring sample_bitstring(const SpectrumParams& params, int length, Rng& rng) {
  if (length < 1) throw InvalidArgument("chain length must be at least 1");
  const auto kernels = finite_kernels(params, length);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Bitstring bits(length);
  int previous = 0;
  for (int k = 0; k < length; ++k) {
    bits[k] = uniform(rng) < kernels[k].w[previous][1] ? 1 : 0;
    if (params.kind == SpectrumKind::csa) previous = bits[k];
  }
  return bits;
}

double entropy_density_general(std::span<const double> table, int k) {
  if (k < 1 || k > 6) throw InvalidArgument("entropy_density_general supports 1 <= k <= 6");
  const int states = 1 << k;
  if (static_cast<int>(table.size()) != states) throw InvalidArgument("energy table must have 2^k entries");
  for (double w : table)
    if (!std::isfinite(w)) throw InvalidArgument("energy table entries must be finite");

  auto log_lambda = [&](double beta, bool check_gap) {
    RealMatrix t = RealMatrix::Zero(states, states);
    const int overlap_mask = (1 << (k - 1)) - 1;
    for (int a = 0; a < states; ++a)
      for (int b = 0; b < states; ++b)
        if ((a & overlap_mask) == (b >> 1)) t(a, b) = std::exp(-beta * table[b]);
    Eigen::EigenSolver<RealMatrix> es(t, false);
    std::vector<double> moduli;
    double best = -1.0;
    double best_real = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
      const auto ev = es.eigenvalues()(i);
      moduli.push_back(std::abs(ev));
      if (std::abs(ev) > best) {
        best = std::abs(ev);
        best_real = ev.real();
      }
    }
    std::sort(moduli.begin(), moduli.end(), std::greater<>());
    if (check_gap && moduli.size() > 1 && moduli[0] - moduli[1] < 1e-10 * moduli[0])
      throw NumericalError("degenerate dominant transfer-matrix eigenvalue: thermodynamic limit is not unique");
    return std::log(best_real);
  };

  constexpr double step = 1e-6;
  const double l0 = log_lambda(1.0, true);
  const double derivative = (log_lambda(1.0 + step, false) - log_lambda(1.0 - step, false)) / (2 * step);
  return l0 - derivative;
}

int classical_dim(const SpectrumParams& params) { return params.kind == SpectrumKind::psa ? 1 : 2; }

std::vector<InputKernel> finite_kernels(const SpectrumParams& params, int length,
                                        std::vector<KernelDerivative>* derivative) {
  params.validate();
  if (length < 1) throw InvalidArgument("chain length must be at least 1");
  std::vector<InputKernel> out(length);
  if (derivative) derivative->assign(length, KernelDerivative{});
  if (params.kind == SpectrumKind::psa) {
    for (auto& k : out)
      for (int c = 0; c < 2; ++c) k.w[c] = {1.0 - params.p, params.p};
    if (derivative)
      for (auto& d : *derivative)
        for (int c = 0; c < 2; ++c) d.d[0][c] = {-1.0, 1.0};
    return out;
  }
  check_range(params.J, params.h, 1.0);
  if (!derivative) {
    const auto kt = finite_kernels_t(params.J, params.h, length);
    for (int i = 0; i < length; ++i) out[i].w = to_double(kt[i]);
    return out;
  }
  const auto kt = finite_kernels_t(Dual<2>::variable(params.J, 0), Dual<2>::variable(params.h, 1), length);
  for (int i = 0; i < length; ++i)
    for (int c = 0; c < 2; ++c)
      for (int n = 0; n < 2; ++n) {
        out[i].w[c][n] = kt[i][c][n].v;
        for (int p = 0; p < 2; ++p) (*derivative)[i].d[p][c][n] = kt[i][c][n].d[p];
      }
  return out;
}

InputKernel stationary_kernel(const SpectrumParams& params, KernelDerivative* derivative) {
  params.validate();
  InputKernel out;
  if (params.kind == SpectrumKind::psa) {
    for (int c = 0; c < 2; ++c) out.w[c] = {1.0 - params.p, params.p};
    if (derivative) {
      *derivative = KernelDerivative{};
      for (int c = 0; c < 2; ++c) derivative->d[0][c] = {-1.0, 1.0};
    }
    return out;
  }
  check_range(params.J, params.h, 1.0);
  const auto kt = stationary_kernel_t(Dual<2>::variable(params.J, 0), Dual<2>::variable(params.h, 1));
  if (derivative) *derivative = KernelDerivative{};
  for (int c = 0; c < 2; ++c)
    for (int n = 0; n < 2; ++n) {
      out.w[c][n] = kt[c][n].v;
      if (derivative)
        for (int p = 0; p < 2; ++p) derivative->d[p][c][n] = kt[c][n].d[p];
    }
  return out;
}

std::array<double, 2> stationary_marginal(const SpectrumParams& params) {
  if (params.kind == SpectrumKind::psa) return {1.0 - params.p, params.p};
  const auto ts = eigenvalues(params, 1.0);
  const double r0 = ts.vector_plus(0) * ts.vector_plus(0);
  const double r1 = ts.vector_plus(1) * ts.vector_plus(1);
  return {r0 / (r0 + r1), r1 / (r0 + r1)};
}

}  // namespace stoqmps
