#include "stoqmps/network.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace stoqmps {

namespace {

using Kernel2 = std::array<std::array<double, 2>, 2>;

// Density-matrix register over [kept outputs (dim K), bond (dim D)], one block
// per classical index.
struct Register {
  int kept = 1;
  std::vector<Matrix> x;
};

int output_index(int classical, int n) { return classical == 1 ? 0 : n; }

// (I_K (x) M) X, with M of shape a x b and X of K*b rows.
Matrix left_apply(const Matrix& m, const Matrix& x, int k) {
  const Eigen::Index a = m.rows(), b = m.cols();
  Matrix out(k * a, x.cols());
  for (int i = 0; i < k; ++i) out.middleRows(i * a, a).noalias() = m * x.middleRows(i * b, b);
  return out;
}

// (I_K (x) M) X (I_K (x) M)^H
Matrix sandwich(const Matrix& m, const Matrix& x, int k) {
  const Matrix t = left_apply(m, x, k);
  return left_apply(m, t.adjoint(), k).adjoint();
}

Matrix hermitian_part(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

struct Context {
  Matrix u;  // site unitary, 2D x 2D
  int bond = 1;
  int classical = 1;
};

Context make_context(const StoQmpsNetwork& net) {
  Context c;
  c.u = build_site_unitary(net.ansatz);
  c.bond = net.ansatz.bond_dim();
  c.classical = classical_dim(net.spectrum);
  return c;
}

Register keep_step(const Context& ctx, const Register& in, const Kernel2& w) {
  const int d = ctx.bond, k = in.kept;
  Register out;
  out.kept = 2 * k;
  out.x.assign(ctx.classical, Matrix::Zero(2 * k * d, 2 * k * d));
  for (int n = 0; n < 2; ++n) {
    Matrix sigma = Matrix::Zero(k * d, k * d);
    bool any = false;
    for (int c = 0; c < ctx.classical; ++c)
      if (w[c][n] != 0.0) {
        sigma += w[c][n] * in.x[c];
        any = true;
      }
    if (!any) continue;
    out.x[output_index(ctx.classical, n)] += sandwich(ctx.u.middleCols(n * d, d), sigma, k);
  }
  return out;
}

// Cotangents follow df = Re tr(L^H dX) for registers and df = 2 Re tr(G^H dU)
// for the site unitary.
void keep_step_backward(const Context& ctx, const Register& in, const Kernel2& w, const std::vector<Matrix>& lam_out,
                        std::vector<Matrix>* lam_in, Matrix& gamma_u, Kernel2& dw) {
  const int d = ctx.bond, k = in.kept;
  if (lam_in) lam_in->assign(ctx.classical, Matrix::Zero(k * d, k * d));
  for (int n = 0; n < 2; ++n) {
    Matrix sigma = Matrix::Zero(k * d, k * d);
    bool any = false;
    for (int c = 0; c < ctx.classical; ++c)
      if (w[c][n] != 0.0) {
        sigma += w[c][n] * in.x[c];
        any = true;
      }
    const Matrix lam = hermitian_part(lam_out[output_index(ctx.classical, n)]);
    const Matrix v = ctx.u.middleCols(n * d, d);
    const Matrix vh = v.adjoint();
    const Matrix lam_sigma = left_apply(vh, left_apply(vh, lam, k).adjoint(), k).adjoint();
    for (int c = 0; c < ctx.classical; ++c) {
      dw[c][n] += (lam_sigma.conjugate().cwiseProduct(in.x[c])).sum().real();
      if (lam_in && w[c][n] != 0.0) (*lam_in)[c] += w[c][n] * lam_sigma;
    }
    if (!any) continue;
    const Matrix t = left_apply(v, sigma, k);
    Matrix gv = Matrix::Zero(2 * d, d);
    for (int i = 0; i < k; ++i)
      gv.noalias() += lam.middleRows(i * 2 * d, 2 * d) * t.middleCols(i * d, d);
    gamma_u.middleCols(n * d, d) += gv;
  }
}

// Trace out the kept outputs.
std::vector<Matrix> trace_kept(const Register& r, int bond) {
  std::vector<Matrix> out;
  for (const auto& x : r.x) {
    Matrix y = Matrix::Zero(bond, bond);
    for (int i = 0; i < r.kept; ++i) y += x.block(i * bond, i * bond, bond, bond);
    out.push_back(y);
  }
  return out;
}

std::vector<Matrix> propagate(const Context& ctx, const std::vector<Matrix>& env, const Kernel2& w) {
  return trace_kept(keep_step(ctx, Register{1, env}, w), ctx.bond);
}

void propagate_backward(const Context& ctx, const std::vector<Matrix>& env, const Kernel2& w,
                        const std::vector<Matrix>& lam_out, std::vector<Matrix>* lam_in, Matrix& gamma_u, Kernel2& dw) {
  std::vector<Matrix> lam_keep;
  for (const auto& l : lam_out) {
    Matrix big = Matrix::Zero(2 * ctx.bond, 2 * ctx.bond);
    big.topLeftCorner(ctx.bond, ctx.bond) = l;
    big.bottomRightCorner(ctx.bond, ctx.bond) = l;
    lam_keep.push_back(big);
  }
  keep_step_backward(ctx, Register{1, env}, w, lam_keep, lam_in, gamma_u, dw);
}

// Reduced density matrix of the kept outputs (bond traced, classical index summed).
Matrix outputs_of(const Register& r, int bond) {
  Matrix rho = Matrix::Zero(r.kept, r.kept);
  for (const auto& x : r.x)
    for (int i = 0; i < r.kept; ++i)
      for (int j = 0; j < r.kept; ++j) rho(i, j) += x.block(i * bond, j * bond, bond, bond).trace();
  return rho;
}

std::vector<Matrix> outputs_backward(const Matrix& lam, int bond, int classical) {
  Matrix big = Matrix::Zero(lam.rows() * bond, lam.cols() * bond);
  for (Eigen::Index i = 0; i < lam.rows(); ++i)
    for (Eigen::Index j = 0; j < lam.cols(); ++j)
      big.block(i * bond, j * bond, bond, bond).diagonal().setConstant(lam(i, j));
  return std::vector<Matrix>(classical, big);
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Eigen::VectorXcd vec(const std::vector<Matrix>& blocks) {
  const Eigen::Index n = blocks.front().size();
  Eigen::VectorXcd v(n * static_cast<Eigen::Index>(blocks.size()));
  for (std::size_t c = 0; c < blocks.size(); ++c)
    v.segment(c * n, n) = Eigen::Map<const Eigen::VectorXcd>(blocks[c].data(), n);
  return v;
}

std::vector<Matrix> unvec(const Eigen::VectorXcd& v, int bond, int classical) {
  std::vector<Matrix> blocks;
  const Eigen::Index n = Eigen::Index(bond) * bond;
  for (int c = 0; c < classical; ++c) blocks.push_back(Eigen::Map<const Matrix>(v.data() + c * n, bond, bond));
  return blocks;
}

Matrix channel_matrix_of(const Context& ctx, const Kernel2& w) {
  const int d = ctx.bond;
  const Eigen::Index dd = Eigen::Index(d) * d;
  Matrix s = Matrix::Zero(ctx.classical * dd, ctx.classical * dd);
  for (int n = 0; n < 2; ++n) {
    Matrix kn = Matrix::Zero(dd, dd);
    for (int m = 0; m < 2; ++m) {
      const Matrix a = ctx.u.block(m * d, n * d, d, d);
      kn += kron(a.conjugate(), a);
    }
    const int co = output_index(ctx.classical, n);
    for (int c = 0; c < ctx.classical; ++c)
      if (w[c][n] != 0.0) s.block(co * dd, c * dd, dd, dd) += w[c][n] * kn;
  }
  return s;
}

Eigen::VectorXcd maximally_mixed(int bond, int classical) {
  std::vector<Matrix> blocks(classical, Matrix::Identity(bond, bond) / double(bond * classical));
  return vec(blocks);
}

Eigen::VectorXcd identity_vec(int bond, int classical) {
  return vec(std::vector<Matrix>(classical, Matrix::Identity(bond, bond)));
}

struct PowerResult {
  Eigen::VectorXcd x;
  long iterations = 0;
  double residual = 0.0;
};

PowerResult power_iterate(const Matrix& s, Eigen::VectorXcd x, const Eigen::VectorXcd& e, double tol, long max_iter) {
  auto normalize = [&](Eigen::VectorXcd& v) { v /= e.dot(v); };  // unit trace
  PowerResult r;
  constexpr long kPlainSteps = 400;
  for (long it = 0; it < std::min(max_iter, kPlainSteps); ++it) {
    Eigen::VectorXcd y = s * x;
    normalize(y);
    r.residual = (y - x).norm();
    x.swap(y);
    r.iterations = it + 1;
    if (r.residual < tol) {
      r.x = x;
      r.residual = (s * x - x).norm();
      if (r.residual < tol) return r;
    }
  }
  // Slow mixing: with e^T S = e^T, the fixed point solves (1 - S + v e^T) x = v
  // whenever 1 is a simple eigenvalue.
  {
    const Eigen::Index n = s.rows();
    const Eigen::VectorXcd v = x;
    Matrix a = Matrix::Identity(n, n) - s + v * e.transpose();
    Eigen::PartialPivLU<Matrix> lu(a);
    Eigen::VectorXcd y = lu.solve(v);
    for (int k = 0; k < 3 && y.allFinite(); ++k) y += lu.solve(v - a * y);
    if (y.allFinite() && std::abs(e.dot(y)) > 0.5) {
      normalize(y);
      const double res = (s * y - y).norm();
      if (res < tol) {
        r.x = y;
        r.residual = res;
        return r;
      }
    }
  }
  // Apply S^(2^k) by repeated squaring.
  Matrix p = s;
  long stride = 1;
  while (r.iterations < max_iter) {
    if (s.rows() <= 1024) {
      p = (p * p).eval();
      stride *= 2;
    }
    Eigen::VectorXcd y = p * x;
    normalize(y);
    x.swap(y);
    r.iterations += stride;
    r.residual = (s * x - x).norm();
    if (r.residual < tol) {
      r.x = x;
      return r;
    }
    if (stride > max_iter) break;
  }
  throw NumericalError("fixed point: power iteration did not converge (residual " + std::to_string(r.residual) +
                       ")");
}

Kernel2 stationary_w(const StoQmpsNetwork& net, KernelDerivative* d = nullptr) {
  return stationary_kernel(net.spectrum, d).w;
}

int window_count(const NetworkOptions& o) { return o.window_last - o.window_first + 1; }

struct FiniteChain {
  std::vector<Kernel2> kernels;
  std::vector<KernelDerivative> derivatives;
  std::vector<std::vector<Matrix>> env;  // env[s] in front of site s
};

FiniteChain build_chain(const Context& ctx, const StoQmpsNetwork& net, int last_site, bool with_derivative) {
  FiniteChain chain;
  const auto kernels = finite_kernels(net.spectrum, net.options.length,
                                      with_derivative ? &chain.derivatives : nullptr);
  for (const auto& k : kernels) chain.kernels.push_back(k.w);
  std::vector<Matrix> start(ctx.classical, Matrix::Zero(ctx.bond, ctx.bond));
  start[0](0, 0) = 1.0;
  chain.env.push_back(start);
  for (int s = 0; s < last_site; ++s) chain.env.push_back(propagate(ctx, chain.env.back(), chain.kernels[s]));
  return chain;
}

// Forward keep steps from an environment; returns every intermediate register.
std::vector<Register> keep_steps(const Context& ctx, const std::vector<Matrix>& env,
                                 const std::vector<Kernel2>& kernels) {
  std::vector<Register> regs{Register{1, env}};
  for (const auto& w : kernels) regs.push_back(keep_step(ctx, regs.back(), w));
  return regs;
}

// Backward through keep steps; returns the cotangent on the environment.
std::vector<Matrix> keep_steps_backward(const Context& ctx, const std::vector<Register>& regs,
                                        const std::vector<Kernel2>& kernels, const Matrix& lam_outputs,
                                        Matrix& gamma_u, std::vector<Kernel2*> dws) {
  std::vector<Matrix> lam = outputs_backward(lam_outputs, ctx.bond, ctx.classical);
  for (int i = static_cast<int>(kernels.size()) - 1; i >= 0; --i) {
    std::vector<Matrix> lam_in;
    keep_step_backward(ctx, regs[i], kernels[i], lam, &lam_in, gamma_u, *dws[i]);
    lam.swap(lam_in);
  }
  return lam;
}

struct Measurement {
  double value = 0.0;
  Matrix gamma_u;
  RealVector spectrum_gradient;
};

// Adjoint of the fixed-point condition: returns the cotangent to feed into one
// channel step at rho*.
std::vector<Matrix> fixed_point_adjoint(const Context& ctx, const Matrix& s, const BondEnvironment& fp,
                                        const std::vector<Matrix>& g) {
  const Eigen::VectorXcd x = vec(fp.blocks);
  const Eigen::VectorXcd e = identity_vec(ctx.bond, ctx.classical);
  const Eigen::Index n = s.rows();
  Matrix mh = Matrix::Identity(n, n) - s.adjoint();
  mh.noalias() += e * x.adjoint();
  const Eigen::VectorXcd l = Eigen::PartialPivLU<Matrix>(mh).solve(vec(g));
  return unvec(l, ctx.bond, ctx.classical);
}

RealVector kernel_gradient(const SpectrumParams& spectrum, const Kernel2& dw, const KernelDerivative& d) {
  RealVector g = RealVector::Zero(spectrum.parameter_count());
  for (int p = 0; p < spectrum.parameter_count(); ++p)
    for (int c = 0; c < 2; ++c)
      for (int n = 0; n < 2; ++n) g(p) += dw[c][n] * d.d[p][c][n];
  return g;
}

BondEnvironment fixed_point_of(const StoQmpsNetwork& net, const Context& ctx, const Matrix& s) {
  const Eigen::VectorXcd e = identity_vec(ctx.bond, ctx.classical);
  const auto r = power_iterate(s, maximally_mixed(ctx.bond, ctx.classical), e, net.options.fixed_point_tol,
                               net.options.max_iterations);
  BondEnvironment env;
  env.blocks = unvec(r.x, ctx.bond, ctx.classical);
  for (auto& b : env.blocks) b = hermitian_part(b);
  env.iterations = r.iterations;
  env.residual = r.residual;
  if (net.options.check_degeneracy) {
    Eigen::VectorXcd start = Eigen::VectorXcd::Zero(r.x.size());
    start(0) = 1.0;
    try {
      const auto r2 = power_iterate(s, start, e, net.options.fixed_point_tol, net.options.max_iterations);
      env.degenerate = (r2.x - r.x).norm() > 1e-8;
    } catch (const NumericalError&) {
      env.degenerate = true;
    }
  }
  return env;
}

// Expectation of `op` (2^r x 2^r) on r consecutive outputs, optionally with
// gradients. Finite mode averages over the window.
Measurement measure(const StoQmpsNetwork& net, const Matrix& op, bool with_gradient) {
  const int range = static_cast<int>(std::lround(std::log2(double(op.rows()))));
  net.validate(range);
  const Context ctx = make_context(net);
  Measurement out;
  out.gamma_u = Matrix::Zero(ctx.u.rows(), ctx.u.cols());
  out.spectrum_gradient = RealVector::Zero(net.spectrum.parameter_count());

  if (net.options.mode == EvaluationMode::infinite) {
    KernelDerivative kd;
    const Kernel2 w = stationary_w(net, &kd);
    const Matrix s = channel_matrix_of(ctx, w);
    StoQmpsNetwork quiet = net;
    if (with_gradient) quiet.options.check_degeneracy = false;
    const BondEnvironment fp = fixed_point_of(quiet, ctx, s);
    const std::vector<Kernel2> ks(range, w);
    const auto regs = keep_steps(ctx, fp.blocks, ks);
    out.value = (op.transpose().cwiseProduct(outputs_of(regs.back(), ctx.bond))).sum().real();
    if (!with_gradient) return out;
    Kernel2 dw{};
    std::vector<Kernel2*> dws(range, &dw);
    const auto g = keep_steps_backward(ctx, regs, ks, op.adjoint(), out.gamma_u, dws);
    const auto lam = fixed_point_adjoint(ctx, s, fp, g);
    propagate_backward(ctx, fp.blocks, w, lam, nullptr, out.gamma_u, dw);
    out.spectrum_gradient = kernel_gradient(net.spectrum, dw, kd);
    return out;
  }

  const auto& o = net.options;
  const int n_starts = window_count(o);
  const FiniteChain chain = build_chain(ctx, net, o.window_last, with_gradient);
  std::vector<Kernel2> dw(o.length, Kernel2{});
  std::vector<std::vector<Matrix>> lam_env(o.window_last + 1);
  const bool uniform = net.spectrum.kind == SpectrumKind::psa;

  auto window_kernels = [&](int start) {
    return std::vector<Kernel2>(chain.kernels.begin() + start, chain.kernels.begin() + start + range);
  };
  auto dw_ptrs = [&](int start) {
    std::vector<Kernel2*> p;
    for (int i = 0; i < range; ++i) p.push_back(&dw[start + i]);
    return p;
  };

  if (uniform) {
    std::vector<Matrix> mean(ctx.classical, Matrix::Zero(ctx.bond, ctx.bond));
    for (int i = o.window_first; i <= o.window_last; ++i)
      for (int c = 0; c < ctx.classical; ++c) mean[c] += chain.env[i][c] / double(n_starts);
    const auto ks = window_kernels(o.window_first);
    const auto regs = keep_steps(ctx, mean, ks);
    out.value = (op.transpose().cwiseProduct(outputs_of(regs.back(), ctx.bond))).sum().real();
    if (!with_gradient) return out;
    const auto g = keep_steps_backward(ctx, regs, ks, op.adjoint(), out.gamma_u, dw_ptrs(o.window_first));
    for (int i = o.window_first; i <= o.window_last; ++i) {
      lam_env[i] = g;
      for (auto& m : lam_env[i]) m /= double(n_starts);
    }
  } else {
    for (int i = o.window_first; i <= o.window_last; ++i) {
      const auto ks = window_kernels(i);
      const auto regs = keep_steps(ctx, chain.env[i], ks);
      out.value += (op.transpose().cwiseProduct(outputs_of(regs.back(), ctx.bond))).sum().real() / n_starts;
      if (with_gradient)
        lam_env[i] = keep_steps_backward(ctx, regs, ks, op.adjoint() / double(n_starts), out.gamma_u, dw_ptrs(i));
    }
    if (!with_gradient) return out;
  }

  std::vector<Matrix> lam = lam_env[o.window_last];
  for (int s = o.window_last; s >= 1; --s) {
    std::vector<Matrix> lam_in;
    propagate_backward(ctx, chain.env[s - 1], chain.kernels[s - 1], lam, &lam_in, out.gamma_u, dw[s - 1]);
    if (!lam_env[s - 1].empty())
      for (int c = 0; c < ctx.classical; ++c) lam_in[c] += lam_env[s - 1][c];
    lam.swap(lam_in);
  }
  for (int s = 0; s < o.length; ++s)
    out.spectrum_gradient += kernel_gradient(net.spectrum, dw[s], chain.derivatives[s]);
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string opt_fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

}  // namespace

std::string to_string(EvaluationMode m) { return m == EvaluationMode::finite ? "finite" : "infinite"; }

EvaluationMode parse_evaluation_mode(const std::string& s) {
  if (s == "finite") return EvaluationMode::finite;
  if (s == "infinite") return EvaluationMode::infinite;
  throw InvalidArgument("unknown evaluation mode '" + s + "' (expected finite or infinite)");
}

void StoQmpsNetwork::validate(int range) const {
  ansatz.validate();
  spectrum.validate();
  if (options.mode == EvaluationMode::finite) {
    if (options.length < 1) throw InvalidArgument("finite chain length must be positive");
    if (options.window_first < 0 || options.window_last < options.window_first)
      throw InvalidArgument("measurement window must satisfy 0 <= first <= last");
    if (options.window_last + range > options.length)
      throw InvalidArgument("measurement window of " + std::to_string(range) + "-site cells exceeds the chain length " +
                            std::to_string(options.length));
  }
  if (!(options.fixed_point_tol > 0) || options.max_iterations < 1)
    throw InvalidArgument("fixed-point tolerance and iteration budget must be positive");
}

double BondEnvironment::trace() const {
  double t = 0.0;
  for (const auto& b : blocks) t += b.trace().real();
  return t;
}

Matrix BondEnvironment::dense() const {
  Eigen::Index n = 0;
  for (const auto& b : blocks) n += b.rows();
  Matrix m = Matrix::Zero(n, n);
  Eigen::Index off = 0;
  for (const auto& b : blocks) {
    m.block(off, off, b.rows(), b.cols()) = b;
    off += b.rows();
  }
  return m;
}

BondEnvironment apply_channel(const Matrix& site_unitary, const InputKernel& w, int classical_dim,
                              const BondEnvironment& env) {
  Context ctx;
  ctx.u = site_unitary;
  ctx.bond = static_cast<int>(site_unitary.rows() / 2);
  ctx.classical = classical_dim;
  if (static_cast<int>(env.blocks.size()) != classical_dim)
    throw InvalidArgument("environment block count does not match the classical dimension");
  BondEnvironment out;
  out.blocks = propagate(ctx, env.blocks, w.w);
  return out;
}

Matrix channel_matrix(const StoQmpsNetwork& net) {
  net.validate();
  const Context ctx = make_context(net);
  return channel_matrix_of(ctx, stationary_w(net));
}

BondEnvironment fixed_point(const StoQmpsNetwork& net) {
  net.validate();
  const Context ctx = make_context(net);
  return fixed_point_of(net, ctx, channel_matrix_of(ctx, stationary_w(net)));
}

BondEnvironment finite_environment(const StoQmpsNetwork& net, int site) {
  net.validate();
  if (site < 0 || site >= net.options.length) throw InvalidArgument("site outside the finite chain");
  const Context ctx = make_context(net);
  BondEnvironment env;
  env.blocks = build_chain(ctx, net, site, false).env.back();
  return env;
}

Matrix reduced_density_matrix(const StoQmpsNetwork& net, int range) {
  if (range < 1 || range > 4) throw InvalidArgument("reduced density matrix range must be 1..4");
  const Eigen::Index dim = Eigen::Index(1) << range;
  net.validate(range);
  const Context ctx = make_context(net);
  Matrix rho = Matrix::Zero(dim, dim);
  auto accumulate = [&](const std::vector<Matrix>& env, const std::vector<Kernel2>& ks, double weight) {
    rho += weight * outputs_of(keep_steps(ctx, env, ks).back(), ctx.bond);
  };
  if (net.options.mode == EvaluationMode::infinite) {
    const Kernel2 w = stationary_w(net);
    const auto fp = fixed_point_of(net, ctx, channel_matrix_of(ctx, w));
    accumulate(fp.blocks, std::vector<Kernel2>(range, w), 1.0);
  } else {
    const auto& o = net.options;
    const FiniteChain chain = build_chain(ctx, net, o.window_last, false);
    for (int i = o.window_first; i <= o.window_last; ++i)
      accumulate(chain.env[i], std::vector<Kernel2>(chain.kernels.begin() + i, chain.kernels.begin() + i + range),
                 1.0 / window_count(o));
  }
  return hermitian_part(rho);
}

std::vector<double> site_energies(const StoQmpsNetwork& net, const HamiltonianSpec& ham) {
  if (net.options.mode != EvaluationMode::finite) throw InvalidArgument("site_energies requires finite mode");
  const int range = ham.max_range();
  net.validate(range);
  const Matrix h = cell_matrix(ham, range);
  std::vector<double> out;
  for (int i = net.options.window_first; i <= net.options.window_last; ++i) {
    StoQmpsNetwork single = net;
    single.options.window_first = single.options.window_last = i;
    out.push_back((h.transpose().cwiseProduct(reduced_density_matrix(single, range))).sum().real());
  }
  return out;
}

double energy_density(const StoQmpsNetwork& net, const HamiltonianSpec& ham) {
  const int range = ham.max_range();
  return measure(net, cell_matrix(ham, range), false).value;
}

std::vector<double> term_expectations(const StoQmpsNetwork& net, const HamiltonianSpec& ham) {
  const int range = ham.max_range();
  const Matrix rho = reduced_density_matrix(net, range);
  std::vector<double> out;
  for (const auto& t : ham.terms) {
    HamiltonianSpec single;
    single.name = ham.name;
    single.terms = {t};
    out.push_back((cell_matrix(single, range).transpose().cwiseProduct(rho)).sum().real());
  }
  return out;
}

RunMetadata metadata_of(const StoQmpsNetwork& net, const HamiltonianSpec& ham, std::uint64_t seed) {
  RunMetadata m;
  m.model = model_key(ham);
  m.spectrum_kind = to_string(net.spectrum.kind);
  m.geometry = to_string(net.ansatz.geometry);
  m.mode = to_string(net.options.mode);
  m.q = net.ansatz.q;
  m.tau = net.ansatz.tau;
  m.seed = seed;
  return m;
}

FreeEnergyResult free_energy_density(const StoQmpsNetwork& net, const HamiltonianSpec& ham, double temperature,
                                     std::optional<double> exact_free_energy) {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw InvalidArgument("temperature must be >= 0");
  FreeEnergyResult r;
  r.temperature = temperature;
  r.energy = energy_density(net, ham);
  r.entropy = entropy_density(net.spectrum);
  r.free_energy = r.energy - temperature * r.entropy;
  r.exact_free_energy = exact_free_energy;
  if (exact_free_energy && *exact_free_energy != 0.0)
    r.relative_error = std::abs(r.free_energy - *exact_free_energy) / std::abs(*exact_free_energy);
  r.metadata = metadata_of(net, ham);
  return r;
}

Evaluation evaluate(const StoQmpsNetwork& net, const HamiltonianSpec& ham, double temperature, bool with_gradient) {
  const int range = ham.max_range();
  const Measurement m = measure(net, cell_matrix(ham, range), with_gradient);
  Evaluation e;
  e.energy = m.value;
  e.entropy = entropy_density(net.spectrum);
  e.free_energy = e.energy - temperature * e.entropy;
  if (with_gradient) {
    e.circuit_gradient = site_unitary_gradient(net.ansatz, m.gamma_u);
    e.spectrum_gradient = m.spectrum_gradient;
    if (temperature != 0.0) e.spectrum_gradient -= temperature * entropy_density_gradient(net.spectrum);
  }
  return e;
}

std::optional<double> fit_correlation_length(const std::vector<CorrelatorPoint>& points) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (const auto& p : points) {
    if (p.distance < 2 || !(std::abs(p.connected) > 1e-10)) continue;
    const double x = p.distance, y = std::log(std::abs(p.connected));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) return std::nullopt;
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  if (!(slope < 0)) return std::nullopt;
  return -1.0 / slope;
}

CorrelatorResult correlator(const StoQmpsNetwork& net, const PauliString& a, const PauliString& b, int max_distance) {
  a.validate();
  b.validate();
  if (a.range() > 2 || b.range() > 2) throw InvalidArgument("correlator operators must have range 1 or 2");
  if (max_distance < 1) throw InvalidArgument("max_distance must be positive");
  const Context ctx = make_context(net);
  const bool finite = net.options.mode == EvaluationMode::finite;
  const int s0 = finite ? net.options.window_first : 0;
  if (finite && s0 + max_distance + b.range() > net.options.length)
    throw InvalidArgument("correlator distances exceed the finite chain");
  net.validate(std::max(a.range(), b.range()));

  std::vector<Kernel2> kernels;
  std::vector<std::vector<Matrix>> env;
  Kernel2 bulk{};
  if (finite) {
    const FiniteChain chain = build_chain(ctx, net, s0 + max_distance, false);
    kernels = chain.kernels;
    env = chain.env;
  } else {
    bulk = stationary_w(net);
    env.push_back(fixed_point_of(net, ctx, channel_matrix_of(ctx, bulk)).blocks);
  }
  auto kernel_at = [&](int site) { return finite ? kernels[site] : bulk; };
  auto env_at = [&](int site) { return finite ? env[site] : env[0]; };
  auto kernels_from = [&](int site, int count) {
    std::vector<Kernel2> ks;
    for (int i = 0; i < count; ++i) ks.push_back(kernel_at(site + i));
    return ks;
  };
  const Matrix ma = dense_term_matrix(a);
  const Matrix mb = dense_term_matrix(b);
  auto expect = [&](const std::vector<Matrix>& e, int site, const Matrix& op, int range) {
    const auto regs = keep_steps(ctx, e, kernels_from(site, range));
    return (op.transpose().cwiseProduct(outputs_of(regs.back(), ctx.bond))).sum();
  };
  const double mean_a = expect(env_at(s0), s0, ma, a.range()).real();

  // Insert A, then carry the (non-Hermitian) operator-weighted register along the chain.
  const auto regs = keep_steps(ctx, env_at(s0), kernels_from(s0, a.range()));
  std::vector<Matrix> cur;
  const int k = regs.back().kept;
  for (const auto& x : regs.back().x) {
    Matrix y = Matrix::Zero(ctx.bond, ctx.bond);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j)
        if (ma(j, i) != Complex(0.0)) y += ma(j, i) * x.block(i * ctx.bond, j * ctx.bond, ctx.bond, ctx.bond);
    cur.push_back(y);
  }
  CorrelatorResult result;
  result.op_a = a.labels;
  result.op_b = b.labels;
  int site = s0 + a.range();
  for (int d = a.range(); d <= max_distance; ++d) {
    const double raw = expect(cur, site, mb, b.range()).real();
    const double mean_b = finite ? expect(env_at(s0 + d), s0 + d, mb, b.range()).real()
                                 : expect(env_at(0), 0, mb, b.range()).real();
    result.points.push_back({d, raw, raw - mean_a * mean_b});
    cur = propagate(ctx, cur, kernel_at(site));
    ++site;
  }
  result.correlation_length = fit_correlation_length(result.points);
  return result;
}

BruteForceState brute_force_rho(const StoQmpsNetwork& net, int length) {
  net.ansatz.validate();
  net.spectrum.validate();
  if (length < 1 || length + net.ansatz.q > 14) throw InvalidArgument("brute_force_rho requires q + L <= 14");
  const Matrix u = build_site_unitary(net.ansatz);
  const int d = net.ansatz.bond_dim();
  const Eigen::Index phys = Eigen::Index(1) << length;
  BruteForceState out;
  out.rho = Matrix::Zero(phys, phys);
  out.shannon_entropy = 0.0;
  Bitstring bits(length);
  for (Eigen::Index n = 0; n < phys; ++n) {
    for (int i = 0; i < length; ++i) bits[i] = (n >> (length - 1 - i)) & 1;
    const double lp = log_prob(net.spectrum, bits);
    const double p = std::exp(lp);
    if (p == 0.0) continue;
    out.shannon_entropy -= p * lp;
    // psi(phys string, bond) as a phys x D matrix
    Matrix psi = Matrix::Zero(phys, d);
    psi(n, 0) = 1.0;
    for (int i = 0; i < length; ++i) {
      const Eigen::Index stride = Eigen::Index(1) << (length - 1 - i);
      Matrix next = Matrix::Zero(phys, d);
      for (Eigen::Index row = 0; row < phys; ++row) {
        if ((row / stride) & 1) continue;  // visit pairs once, from the bit-0 member
        for (int m = 0; m < 2; ++m) {
          const Eigen::Index out_row = row + m * stride;
          for (int nin = 0; nin < 2; ++nin) {
            const Eigen::Index in_row = row + nin * stride;
            next.row(out_row) += (u.block(m * d, nin * d, d, d) * psi.row(in_row).transpose()).transpose();
          }
        }
      }
      psi.swap(next);
    }
    out.rho.noalias() += p * psi * psi.adjoint();
  }
  return out;
}

std::string free_energy_csv_header() {
  return "model,spectrum,geometry,mode,q,tau,seed,T,energy,entropy,free_energy,f_exact,rel_error";
}

std::string to_csv_row(const FreeEnergyResult& r) {
  const auto& m = r.metadata;
  std::ostringstream os;
  os << m.model << ',' << m.spectrum_kind << ',' << m.geometry << ',' << m.mode << ',' << m.q << ',' << m.tau << ','
     << m.seed << ',' << fmt(r.temperature) << ',' << fmt(r.energy) << ',' << fmt(r.entropy) << ','
     << fmt(r.free_energy) << ',' << opt_fmt(r.exact_free_energy) << ',' << opt_fmt(r.relative_error);
  return os.str();
}

std::string correlator_csv_header() { return "op_a,op_b,distance,raw,connected,xi"; }

std::vector<std::string> to_csv_rows(const CorrelatorResult& r) {
  std::vector<std::string> rows;
  for (const auto& p : r.points)
    rows.push_back(r.op_a + ',' + r.op_b + ',' + std::to_string(p.distance) + ',' + fmt(p.raw) + ',' +
                   fmt(p.connected) + ',' + opt_fmt(r.correlation_length));
  return rows;
}

std::string to_json(const FreeEnergyResult& r) {
  nlohmann::json j;
  j["T"] = r.temperature;
  j["energy"] = r.energy;
  j["entropy"] = r.entropy;
  j["free_energy"] = r.free_energy;
  j["f_exact"] = r.exact_free_energy ? nlohmann::json(*r.exact_free_energy) : nlohmann::json();
  j["rel_error"] = r.relative_error ? nlohmann::json(*r.relative_error) : nlohmann::json();
  j["metadata"] = {{"model", r.metadata.model}, {"spectrum", r.metadata.spectrum_kind},
                   {"geometry", r.metadata.geometry}, {"mode", r.metadata.mode},
                   {"q", r.metadata.q}, {"tau", r.metadata.tau}, {"seed", r.metadata.seed}};
  return j.dump(2);
}

std::string to_json(const CorrelatorResult& r) {
  nlohmann::json j;
  j["op_a"] = r.op_a;
  j["op_b"] = r.op_b;
  j["xi"] = r.correlation_length ? nlohmann::json(*r.correlation_length) : nlohmann::json();
  for (const auto& p : r.points) j["points"].push_back({{"d", p.distance}, {"raw", p.raw}, {"connected", p.connected}});
  return j.dump(2);
}

}  // namespace stoqmps
