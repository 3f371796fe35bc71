#include "stoqmps/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>
#include <thread>

namespace stoqmps {

void NoiseModel::validate() const {
  if (!(eps_1q >= 0 && eps_1q <= 1) || !(eps_2q >= 0 && eps_2q <= 1))
    throw InvalidArgument("depolarizing rates must lie in [0, 1]");
}

void SamplerConfig::validate() const {
  if (shots < 1) throw InvalidArgument("shots must be >= 1");
  if (burn_in < 0) throw InvalidArgument("burn_in must be >= 0");
  if (window < 1) throw InvalidArgument("window must be >= 1");
  if (jobs < 1) throw InvalidArgument("jobs must be >= 1");
}

std::vector<MeasurementGroup> measurement_groups(const HamiltonianSpec& ham) {
  ham.validate();
  std::vector<MeasurementGroup> groups;
  for (char basis : {'x', 'y', 'z'}) {
    MeasurementGroup g{basis, {}};
    for (std::size_t i = 0; i < ham.terms.size(); ++i) {
      char label = 0;
      for (char c : ham.terms[i].labels) {
        if (c == 'I') continue;
        if (label && c != label)
          throw InvalidArgument("term " + ham.terms[i].labels + " mixes Pauli labels; no uniform basis measures it");
        label = c;
      }
      if (label == basis - 'a' + 'A') g.terms.push_back(static_cast<int>(i));
    }
    if (!g.terms.empty()) groups.push_back(std::move(g));
  }
  return groups;
}

double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

// --- register operations ------------------------------------------------------

namespace {

int wires_of(const Matrix& rho) {
  int n = 0;
  while ((Eigen::Index(1) << n) < rho.rows()) ++n;
  return n;
}

}  // namespace

Matrix depolarize(const Matrix& rho, const std::vector<int>& support, double eps) {
  if (!(eps >= 0 && eps <= 1)) throw InvalidArgument("depolarizing rate must lie in [0, 1]");
  if (eps == 0.0 || support.empty()) return rho;
  const int n = wires_of(rho);
  Eigen::Index mask = 0;
  for (int w : support) {
    if (w < 0 || w >= n) throw InvalidArgument("depolarizing support outside the register");
    mask |= Eigen::Index(1) << (n - 1 - w);
  }
  const Eigen::Index dim = rho.rows();
  const double d = double(Eigen::Index(1) << support.size());
  // tr_S rho (x) 1/d: entries with matching S-bits get the sum over S-configurations.
  std::vector<Eigen::Index> sub;
  for (Eigen::Index s = mask;; s = (s - 1) & mask) {
    sub.push_back(s);
    if (s == 0) break;
  }
  Matrix out = (1 - eps) * rho;
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) {
      if ((i & mask) != (j & mask)) continue;
      Complex acc = 0.0;
      const Eigen::Index bi = i & ~mask, bj = j & ~mask;
      for (Eigen::Index s : sub) acc += rho(bi | s, bj | s);
      out(i, j) += eps * acc / d;
    }
  return out;
}

Matrix apply_gate(const Matrix& rho, const Matrix& gate, int wire) {
  const int n = wires_of(rho);
  const int k = gate.rows() == 2 ? 1 : 2;
  if (gate.rows() != gate.cols() || (gate.rows() != 2 && gate.rows() != 4)) throw InvalidArgument("gate must be 2x2 or 4x4");
  if (wire < 0 || wire + k > n) throw InvalidArgument("gate outside the register");
  const Eigen::Index span = Eigen::Index(1) << k;
  const Eigen::Index right = Eigen::Index(1) << (n - wire - k);
  const Eigen::Index left = Eigen::Index(1) << wire;
  const Eigen::Index dim = rho.rows();
  Matrix out = rho;
  Eigen::VectorXcd v(span);
  // rows: G rho
  for (Eigen::Index j = 0; j < dim; ++j)
    for (Eigen::Index l = 0; l < left; ++l)
      for (Eigen::Index r = 0; r < right; ++r) {
        for (Eigen::Index a = 0; a < span; ++a) v(a) = out((l * span + a) * right + r, j);
        const Eigen::VectorXcd w = gate * v;
        for (Eigen::Index a = 0; a < span; ++a) out((l * span + a) * right + r, j) = w(a);
      }
  // columns: (G rho) G^H
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index l = 0; l < left; ++l)
      for (Eigen::Index r = 0; r < right; ++r) {
        for (Eigen::Index a = 0; a < span; ++a) v(a) = out(i, (l * span + a) * right + r);
        const Eigen::VectorXcd w = gate.conjugate() * v;
        for (Eigen::Index a = 0; a < span; ++a) out(i, (l * span + a) * right + r) = w(a);
      }
  return out;
}

namespace {

Matrix ry(double theta) {
  Matrix m(2, 2);
  m << std::cos(theta / 2), -std::sin(theta / 2), std::sin(theta / 2), std::cos(theta / 2);
  return m;
}

Matrix cnot() {
  Matrix m = Matrix::Zero(4, 4);
  m(0, 0) = m(1, 1) = m(2, 3) = m(3, 2) = 1.0;
  return m;
}

Matrix hadamard() {
  Matrix m(2, 2);
  m << 1, 1, 1, -1;
  return m / std::sqrt(2.0);
}

Matrix s_dagger() {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = Complex(0, -1);
  return m;
}

double eps1(const NoiseModel& n) { return n.enabled ? n.eps_1q : 0.0; }
double eps2(const NoiseModel& n) { return n.enabled ? n.eps_2q : 0.0; }

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Probability that wire 0 reads 1, and the normalized post-measurement state
// of the remaining wires for outcome m.
double prob_one(const Matrix& rho) {
  const Eigen::Index h = rho.rows() / 2;
  return std::clamp(rho.diagonal().tail(h).real().sum(), 0.0, 1.0);
}

Matrix collapse_first(const Matrix& rho, int m) {
  const Eigen::Index h = rho.rows() / 2;
  Matrix b = rho.block(m * h, m * h, h, h);
  const double t = b.trace().real();
  return t > 0 ? Matrix(b / t) : b;
}

Matrix trace_first(const Matrix& rho) {
  const Eigen::Index h = rho.rows() / 2;
  return rho.block(0, 0, h, h) + rho.block(h, h, h, h);
}

struct Streamer {
  const CircuitAnsatz& ansatz;
  std::vector<Matrix> gates;
  std::vector<int> layout;
  std::vector<InputKernel> kernels;
  int classical;
  NoiseModel noise;
  bool ancilla;

  // Returns the (q+1)-wire state after the site unitary, given the bond state
  // and the classical index; updates c with the drawn input bit.
  Matrix step(const Matrix& bond, int site, int& c, Rng& rng) const {
    const auto& w = kernels[site].w[c];
    const double p1 = w[1] / (w[0] + w[1]);
    Matrix phys = Matrix::Zero(2, 2);
    int n = 0;
    if (ancilla) {
      phys = ancilla_init(p1, noise, &rng, &n);
    } else {
      n = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p1 ? 1 : 0;
      phys(n, n) = 1.0;
    }
    c = classical == 1 ? 0 : n;
    Matrix rho = kron(phys, bond);
    for (std::size_t g = 0; g < gates.size(); ++g) {
      rho = apply_gate(rho, gates[g], layout[g]);
      rho = depolarize(rho, {layout[g], layout[g] + 1}, eps2(noise));
    }
    return rho;
  }

  // Rotates wire 0 into `basis`, samples it, and returns (eigenvalue, bond state).
  std::pair<int, Matrix> measure(Matrix rho, char basis, Rng& rng) const {
    if (basis == 'y') {
      rho = apply_gate(rho, s_dagger(), 0);
      rho = depolarize(rho, {0}, eps1(noise));
    }
    if (basis == 'x' || basis == 'y') {
      rho = apply_gate(rho, hadamard(), 0);
      rho = depolarize(rho, {0}, eps1(noise));
    }
    const int m = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < prob_one(rho) ? 1 : 0;
    return {m ? -1 : 1, collapse_first(rho, m)};
  }
};

Streamer make_streamer(const CircuitAnsatz& ansatz, const SpectrumParams& spectrum, int sites,
                       const NoiseModel& noise, bool ancilla) {
  ansatz.validate();
  spectrum.validate();
  noise.validate();
  return Streamer{ansatz,
                  gate_unitaries(ansatz),
                  gate_layout(ansatz.q, ansatz.tau, ansatz.geometry),
                  finite_kernels(spectrum, sites),
                  classical_dim(spectrum),
                  noise,
                  ancilla};
}

Matrix initial_bond(int q) {
  const Eigen::Index d = Eigen::Index(1) << q;
  Matrix b = Matrix::Zero(d, d);
  b(0, 0) = 1.0;
  return b;
}

// Runs `shots` independent shots; shot s writes `values` row s.
template <class F>
void for_each_shot(long shots, int jobs, F&& shot) {
  const int workers = static_cast<int>(std::min<long>(jobs, shots));
  if (workers <= 1) {
    for (long s = 0; s < shots; ++s) shot(s);
    return;
  }
  std::atomic<long> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (long s; (s = next++) < shots;) shot(s);
    });
  for (auto& t : pool) t.join();
}

ShotEstimate summarize(const std::string& name, const std::vector<double>& v, bool noisy) {
  ShotEstimate e;
  e.observable = name;
  e.shots = static_cast<long>(v.size());
  e.noisy = noisy;
  e.estimate = pairwise_sum(v.data(), v.size()) / double(v.size());
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - e.estimate) * (v[i] - e.estimate);
  const double var = v.size() > 1 ? pairwise_sum(sq.data(), sq.size()) / double(v.size() - 1) : 0.0;
  e.standard_error = std::sqrt(var / double(v.size()));
  return e;
}

char basis_code(char basis) {
  switch (basis) {
    case 'x': return 0;
    case 'y': return 1;
    case 'z': return 2;
  }
  throw InvalidArgument(std::string("unknown measurement basis '") + basis + "'");
}

}  // namespace

Matrix ancilla_init(double p, const NoiseModel& noise, Rng* rng, int* outcome_out) {
  if (!(p >= 0 && p <= 1)) throw InvalidArgument("ancilla_init probability must lie in [0, 1]");
  noise.validate();
  Matrix rho = Matrix::Zero(4, 4);
  rho(0, 0) = 1.0;
  rho = apply_gate(rho, ry(2 * std::asin(std::sqrt(p))), 0);
  rho = depolarize(rho, {0}, eps1(noise));
  rho = apply_gate(rho, cnot(), 0);
  rho = depolarize(rho, {0, 1}, eps2(noise));
  // ancilla is wire 1; swap it to the front to reuse the wire-0 helpers
  Matrix swapped(4, 4);
  const int perm[4] = {0, 2, 1, 3};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) swapped(perm[i], perm[j]) = rho(i, j);
  if (!rng) return trace_first(swapped);
  const int m = std::uniform_real_distribution<double>(0.0, 1.0)(*rng) < prob_one(swapped) ? 1 : 0;
  if (outcome_out) *outcome_out = m;
  return collapse_first(swapped, m);
}

std::vector<ShotEstimate> run_protocol(const CircuitAnsatz& ansatz, const SpectrumParams& spectrum,
                                       const MeasurementGroup& group, const HamiltonianSpec& ham,
                                       const SamplerConfig& config, const NoiseModel& noise) {
  config.validate();
  const int range = ham.max_range();
  if (config.window < range) throw InvalidArgument("window shorter than the interaction range");
  if (ansatz.q > 6) throw InvalidArgument("sampler supports q <= 6");
  const int sites = config.burn_in + config.window;
  const int placements = config.window - range + 1;
  const Streamer st = make_streamer(ansatz, spectrum, sites, noise, config.ancilla_init);
  const std::size_t nt = group.terms.size();
  const std::uint64_t code = static_cast<std::uint64_t>(basis_code(group.basis));
  for (int t : group.terms)
    if (t < 0 || t >= static_cast<int>(ham.terms.size())) throw InvalidArgument("group term index out of range");

  std::vector<std::vector<double>> values(nt + 1, std::vector<double>(config.shots));
  for_each_shot(config.shots, config.jobs, [&](long shot) {
    Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(shot), code);
    Matrix bond = initial_bond(ansatz.q);
    int c = 0;
    std::vector<int> out(config.window);
    for (int x = 0; x < sites; ++x) {
      const Matrix rho = st.step(bond, x, c, rng);
      if (x < config.burn_in) {
        bond = trace_first(rho);
      } else {
        auto [e, b] = st.measure(rho, group.basis, rng);
        out[x - config.burn_in] = e;
        bond = std::move(b);
      }
    }
    double total = 0.0;
    for (std::size_t k = 0; k < nt; ++k) {
      const auto& term = ham.terms[group.terms[k]];
      double acc = 0.0;
      for (int s = 0; s < placements; ++s) {
        int prod = 1;
        for (int j = 0; j < term.range(); ++j)
          if (term.labels[j] != 'I') prod *= out[s + j];
        acc += prod;
      }
      values[k][shot] = term.coefficient * acc / placements;
      total += values[k][shot];
    }
    values[nt][shot] = total;
  });

  std::vector<ShotEstimate> est;
  for (std::size_t k = 0; k < nt; ++k) est.push_back(summarize(ham.terms[group.terms[k]].labels, values[k], noise.enabled));
  est.push_back(summarize(std::string("group_") + group.basis, values[nt], noise.enabled));
  return est;
}

std::vector<double> protocol_exact_terms(const CircuitAnsatz& ansatz, const SpectrumParams& spectrum,
                                         const HamiltonianSpec& ham, const SamplerConfig& config) {
  config.validate();
  StoQmpsNetwork net{ansatz, spectrum, {}};
  net.options.mode = EvaluationMode::finite;
  net.options.length = config.burn_in + config.window;
  net.options.window_first = config.burn_in;
  net.options.window_last = config.burn_in + config.window - ham.max_range();
  return term_expectations(net, ham);
}

SampledFreeEnergy sample_free_energy(const CircuitAnsatz& ansatz, const SpectrumParams& spectrum,
                                     const HamiltonianSpec& ham, double temperature, const SamplerConfig& config,
                                     const NoiseModel& noise) {
  SampledFreeEnergy r;
  r.terms.resize(ham.terms.size());
  double var = 0.0;
  for (const auto& g : measurement_groups(ham)) {
    const auto est = run_protocol(ansatz, spectrum, g, ham, config, noise);
    for (std::size_t k = 0; k < g.terms.size(); ++k) r.terms[g.terms[k]] = est[k];
    r.energy += est.back().estimate;
    var += est.back().standard_error * est.back().standard_error;
  }
  r.standard_error = std::sqrt(var);
  r.free_energy = r.energy - temperature * entropy_density(spectrum);
  for (double v : protocol_exact_terms(ansatz, spectrum, ham, config)) r.exact_energy += v;
  return r;
}

std::vector<ShotEstimate> sample_correlator(const CircuitAnsatz& ansatz, const SpectrumParams& spectrum, char basis,
                                            int max_distance, const SamplerConfig& config, const NoiseModel& noise) {
  config.validate();
  if (max_distance < 1) throw InvalidArgument("max_distance must be positive");
  const int sites = config.burn_in + max_distance + 1;
  const Streamer st = make_streamer(ansatz, spectrum, sites, noise, config.ancilla_init);
  const std::uint64_t code = 3 + static_cast<std::uint64_t>(basis_code(basis));
  std::vector<std::vector<double>> values(2 * max_distance + 1, std::vector<double>(config.shots));
  for_each_shot(config.shots, config.jobs, [&](long shot) {
    Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(shot), code);
    Matrix bond = initial_bond(ansatz.q);
    int c = 0;
    std::vector<int> out(max_distance + 1);
    for (int x = 0; x < sites; ++x) {
      const Matrix rho = st.step(bond, x, c, rng);
      if (x < config.burn_in) {
        bond = trace_first(rho);
      } else {
        auto [e, b] = st.measure(rho, basis, rng);
        out[x - config.burn_in] = e;
        bond = std::move(b);
      }
    }
    values[0][shot] = out[0];
    for (int d = 1; d <= max_distance; ++d) {
      values[2 * d - 1][shot] = out[0] * out[d];
      values[2 * d][shot] = out[d];
    }
  });
  const char up = static_cast<char>(basis - 'a' + 'A');
  std::vector<ShotEstimate> est{summarize(std::string(1, up) + "0", values[0], noise.enabled)};
  for (int d = 1; d <= max_distance; ++d) {
    est.push_back(summarize(std::string(2, up) + std::to_string(d), values[2 * d - 1], noise.enabled));
    est.push_back(summarize(std::string(1, up) + std::to_string(d), values[2 * d], noise.enabled));
  }
  return est;
}

std::string shot_csv_header() { return "observable,estimate,stderr,shots,noise"; }

std::string to_csv_row(const ShotEstimate& e) {
  std::ostringstream os;
  os.precision(17);
  os << e.observable << ',' << e.estimate << ',' << e.standard_error << ',' << e.shots << ',' << (e.noisy ? 1 : 0);
  return os.str();
}

}  // namespace stoqmps
