#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "stoqmps/sampler.hpp"

using namespace stoqmps;

namespace {

Matrix random_density(int dim, Rng& rng) {
  std::normal_distribution<double> n;
  Matrix a(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) a(i, j) = Complex(n(rng), n(rng));
  Matrix rho = a * a.adjoint();
  return rho / rho.trace();
}

Matrix pauli(int k) {
  Matrix m = Matrix::Zero(2, 2);
  switch (k) {
    case 0: m(0, 0) = m(1, 1) = 1; break;
    case 1: m(0, 1) = m(1, 0) = 1; break;
    case 2: m(0, 1) = Complex(0, -1); m(1, 0) = Complex(0, 1); break;
    default: m(0, 0) = 1; m(1, 1) = -1; break;
  }
  return m;
}

Matrix embed_single(const Matrix& g, int wire, int n) {
  Matrix out = Matrix::Ones(1, 1);
  for (int w = 0; w < n; ++w) {
    const Matrix f = w == wire ? g : Matrix::Identity(2, 2);
    Matrix k(out.rows() * 2, out.cols() * 2);
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (Eigen::Index j = 0; j < out.cols(); ++j) k.block(2 * i, 2 * j, 2, 2) = out(i, j) * f;
    out = k;
  }
  return out;
}

// Depolarizing channel as the Pauli twirl (1 - eps) rho + eps/4^k sum_P P rho P.
Matrix twirl(const Matrix& rho, const std::vector<int>& support, double eps, int n) {
  Matrix avg = Matrix::Zero(rho.rows(), rho.cols());
  const int k = static_cast<int>(support.size());
  const int count = 1 << (2 * k);
  for (int code = 0; code < count; ++code) {
    Matrix p = Matrix::Identity(rho.rows(), rho.cols());
    for (int s = 0; s < k; ++s) p = embed_single(pauli((code >> (2 * s)) & 3), support[s], n) * p;
    avg += p * rho * p.adjoint();
  }
  return (1 - eps) * rho + eps * avg / count;
}

// Smallest number of uniform bases covering all terms, by enumeration.
int brute_force_group_count(const HamiltonianSpec& ham) {
  std::vector<std::vector<char>> options;
  for (const auto& t : ham.terms) {
    std::vector<char> ok;
    for (char b : {'X', 'Y', 'Z'})
      if (std::all_of(t.labels.begin(), t.labels.end(), [&](char c) { return c == 'I' || c == b; })) ok.push_back(b);
    options.push_back(ok);
  }
  int best = 99;
  std::vector<std::size_t> pick(options.size(), 0);
  while (true) {
    std::vector<char> used;
    for (std::size_t i = 0; i < pick.size(); ++i) used.push_back(options[i][pick[i]]);
    std::sort(used.begin(), used.end());
    best = std::min<int>(best, static_cast<int>(std::unique(used.begin(), used.end()) - used.begin()));
    std::size_t i = 0;
    while (i < pick.size() && ++pick[i] == options[i].size()) pick[i++] = 0;
    if (i == pick.size()) break;
  }
  return best;
}

StoQmpsNetwork random_network(int q, int tau, SpectrumKind kind, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto spec = kind == SpectrumKind::psa ? SpectrumParams::product(0.1 + 0.8 * u(rng))
                                              : SpectrumParams::correlated(2 * u(rng) - 1, 2 * u(rng) - 1);
  return {random_ansatz(q, tau, Geometry::ladder, Parameterization::angles, rng), spec, {}};
}

}  // namespace

TEST_CASE("measurement groups") {
  for (const auto& ham : {sdim(1.0), sdim(0.0), heisenberg()}) {
    const auto groups = measurement_groups(ham);
    CHECK(static_cast<int>(groups.size()) == brute_force_group_count(ham));
    std::size_t covered = 0;
    for (const auto& g : groups) covered += g.terms.size();
    CHECK(covered == ham.terms.size());
  }
  const auto g1 = measurement_groups(sdim(1.0));
  REQUIRE(g1.size() == 2);
  CHECK(g1[0].basis == 'x');
  CHECK(g1[0].terms == std::vector<int>{0, 3});
  CHECK(g1[1].basis == 'z');
  CHECK(g1[1].terms == std::vector<int>{1, 2});
  CHECK(measurement_groups(heisenberg()).size() == 3);
  CHECK(measurement_groups(sdim(0.0)).size() == 2);
  HamiltonianSpec mixed;
  mixed.name = "mixed";
  mixed.terms = {{"XZ", 1.0}};
  CHECK_THROWS_AS(measurement_groups(mixed), InvalidArgument);
}

TEST_CASE("depolarizing channel") {
  Rng rng(1);
  const int n = 3;
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix rho = random_density(1 << n, rng);
    CHECK((depolarize(rho, {0, 1}, 0.0) - rho).norm() == 0.0);
    const double eps = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    for (const std::vector<int>& s : {std::vector<int>{0}, {2}, {1, 2}, {0, 1}}) {
      const Matrix out = depolarize(rho, s, eps);
      CHECK(std::abs(out.trace() - Complex(1.0)) < 1e-14);
      CHECK((out - twirl(rho, s, eps, n)).norm() < 1e-13);
    }
    const Matrix full = depolarize(rho, {0, 1, 2}, 1.0);
    CHECK((full - Matrix::Identity(8, 8) / 8.0).norm() < 1e-14);
  }
  CHECK_THROWS_AS(depolarize(Matrix::Identity(2, 2), {0}, 1.5), InvalidArgument);
  CHECK_THROWS_AS(depolarize(Matrix::Identity(2, 2), {1}, 0.5), InvalidArgument);
}

TEST_CASE("local gate application matches the embedded gate") {
  Rng rng(2);
  const Matrix rho = random_density(16, rng);
  GateParams p{};
  std::uniform_real_distribution<double> a(0.0, 6.0);
  for (double& v : p) v = a(rng);
  const Matrix g = build_su4(p);
  for (int w = 0; w < 3; ++w) {
    const Matrix e = embed_gate(g, w, 4);
    CHECK((apply_gate(rho, g, w) - e * rho * e.adjoint()).norm() < 1e-13);
  }
  Matrix h(2, 2);
  h << 0, 1, 1, 0;
  const Matrix e = embed_single(h, 3, 4);
  CHECK((apply_gate(rho, h, 3) - e * rho * e.adjoint()).norm() < 1e-13);
  CHECK_THROWS_AS(apply_gate(rho, g, 3), InvalidArgument);
}

TEST_CASE("register stays a density matrix through noisy gates") {
  Rng rng(3);
  Matrix rho = random_density(8, rng);
  GateParams p{};
  std::uniform_real_distribution<double> a(0.0, 6.0);
  for (int step = 0; step < 20; ++step) {
    for (double& v : p) v = a(rng);
    const int w = step % 2;
    rho = depolarize(apply_gate(rho, build_su4(p), w), {w, w + 1}, 8e-3);
  }
  CHECK((rho - rho.adjoint()).norm() < 1e-12);
  CHECK(std::abs(rho.trace() - Complex(1.0)) < 1e-12);
  Eigen::SelfAdjointEigenSolver<Matrix> es(rho);
  CHECK(es.eigenvalues().minCoeff() > -1e-12);
}

TEST_CASE("ancilla gadget") {
  const auto off = NoiseModel::noiseless();
  const Matrix zero = ancilla_init(0.0, off);
  CHECK(std::abs(zero(0, 0) - 1.0) < 1e-15);
  CHECK(zero.norm() == doctest::Approx(1.0));
  const Matrix half = ancilla_init(0.5, off);
  CHECK(std::abs((half * half).trace().real() - 0.5) < 1e-12);
  for (double p : {0.0, 0.13, 0.5, 0.77, 1.0}) {
    Matrix direct = Matrix::Zero(2, 2);
    direct(0, 0) = 1 - p;
    direct(1, 1) = p;
    CHECK((ancilla_init(p, off) - direct).norm() < 1e-12);
  }
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    int m = -1;
    const Matrix s = ancilla_init(0.4, off, &rng, &m);
    REQUIRE((m == 0 || m == 1));
    CHECK(std::abs(s(m, m) - 1.0) < 1e-12);
  }
  const Matrix noisy = ancilla_init(0.0, NoiseModel::depolarizing());
  CHECK(noisy(1, 1).real() > 0.0);
  CHECK(std::abs(noisy.trace() - Complex(1.0)) < 1e-14);
  CHECK_THROWS_AS(ancilla_init(1.2, off), InvalidArgument);
}

TEST_CASE("noiseless protocol matches the exact contraction") {
  Rng rng(5);
  SamplerConfig cfg;
  cfg.shots = 4000;
  int checked = 0;
  for (auto kind : {SpectrumKind::psa, SpectrumKind::csa})
    for (int q : {1, 2}) {
      const auto net = random_network(q, 2, kind, rng);
      for (const auto& ham : {sdim(1.0), heisenberg()}) {
        const auto exact = protocol_exact_terms(net.ansatz, net.spectrum, ham, cfg);
        for (const auto& g : measurement_groups(ham)) {
          cfg.seed = static_cast<std::uint64_t>(++checked);
          const auto est = run_protocol(net.ansatz, net.spectrum, g, ham, cfg, NoiseModel::noiseless());
          REQUIRE(est.size() == g.terms.size() + 1);
          double group_exact = 0.0;
          for (std::size_t k = 0; k < g.terms.size(); ++k) {
            CAPTURE(est[k].observable);
            const double z = (est[k].estimate - exact[g.terms[k]]) / std::max(est[k].standard_error, 1e-12);
            CHECK(std::abs(z) < 4.0);
            group_exact += exact[g.terms[k]];
          }
          CHECK(std::abs(est.back().estimate - group_exact) < 4 * est.back().standard_error + 1e-12);
        }
      }
    }
}

TEST_CASE("ancilla initialization leaves the statistics unchanged") {
  Rng rng(6);
  const auto net = random_network(1, 2, SpectrumKind::csa, rng);
  SamplerConfig cfg;
  cfg.shots = 4000;
  cfg.ancilla_init = true;
  const auto ham = sdim(1.0);
  const auto exact = protocol_exact_terms(net.ansatz, net.spectrum, ham, cfg);
  for (const auto& g : measurement_groups(ham)) {
    const auto est = run_protocol(net.ansatz, net.spectrum, g, ham, cfg, NoiseModel::noiseless());
    for (std::size_t k = 0; k < g.terms.size(); ++k)
      CHECK(std::abs(est[k].estimate - exact[g.terms[k]]) < 4 * est[k].standard_error);
  }
}

TEST_CASE("z-scores of repeated noiseless runs are standard normal") {
  Rng rng(7);
  const auto net = random_network(1, 1, SpectrumKind::psa, rng);
  const auto ham = sdim(0.0);
  SamplerConfig cfg;
  cfg.shots = 300;
  const auto exact = protocol_exact_terms(net.ansatz, net.spectrum, ham, cfg);
  const auto groups = measurement_groups(ham);
  std::vector<double> z;
  for (int run = 0; run < 100; ++run) {
    cfg.seed = 1000 + run;
    const auto est = run_protocol(net.ansatz, net.spectrum, groups[0], ham, cfg, NoiseModel::noiseless());
    z.push_back((est[0].estimate - exact[groups[0].terms[0]]) / est[0].standard_error);
  }
  std::sort(z.begin(), z.end());
  const boost::math::normal normal;
  double d = 0.0;
  const double n = double(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double c = boost::math::cdf(normal, z[i]);
    d = std::max({d, c - i / n, (i + 1) / n - c});
  }
  // Kolmogorov-Smirnov critical value at the 1% level: 1.628 / sqrt(n).
  CHECK(d < 1.628 / std::sqrt(n));
}

TEST_CASE("burn-in of 5 and 10 sites agree") {
  Rng rng(8);
  SamplerConfig a, b;
  a.shots = b.shots = 6000;
  b.burn_in = 10;
  b.seed = 99;
  const auto ham = sdim(1.0);
  for (int trial = 0; trial < 2; ++trial) {
    // Fast-mixing network: gates near identity leave short correlations.
    StoQmpsNetwork net = random_network(1, 1, SpectrumKind::psa, rng);
    const auto groups = measurement_groups(ham);
    for (const auto& g : groups) {
      const auto ea = run_protocol(net.ansatz, net.spectrum, g, ham, a, NoiseModel::noiseless());
      const auto eb = run_protocol(net.ansatz, net.spectrum, g, ham, b, NoiseModel::noiseless());
      const double s = std::hypot(ea.back().standard_error, eb.back().standard_error);
      CHECK(std::abs(ea.back().estimate - eb.back().estimate) < 4 * s);
    }
  }
}

TEST_CASE("sampling is deterministic per seed and independent of thread count") {
  Rng rng(9);
  const auto net = random_network(2, 1, SpectrumKind::csa, rng);
  const auto ham = heisenberg();
  SamplerConfig cfg;
  cfg.shots = 300;
  cfg.seed = 5;
  const auto g = measurement_groups(ham)[1];
  const auto a = run_protocol(net.ansatz, net.spectrum, g, ham, cfg, NoiseModel::depolarizing());
  cfg.jobs = 3;
  const auto b = run_protocol(net.ansatz, net.spectrum, g, ham, cfg, NoiseModel::depolarizing());
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].estimate == b[i].estimate);
    CHECK(a[i].standard_error == b[i].standard_error);
    CHECK(a[i].noisy);
  }
  cfg.seed = 6;
  CHECK(run_protocol(net.ansatz, net.spectrum, g, ham, cfg, NoiseModel::depolarizing()).back().estimate !=
        a.back().estimate);
}

TEST_CASE("identity circuit correlators") {
  Rng rng(1);
  CircuitAnsatz id = random_ansatz(1, 1, Geometry::ladder, Parameterization::angles, rng);
  for (auto& g : id.angles) g = identity_gate_params();
  const auto spectrum = SpectrumParams::product(0.3);
  SamplerConfig cfg;
  cfg.shots = 3000;
  const auto est = sample_correlator(id, spectrum, 'z', 3, cfg, NoiseModel::noiseless());
  REQUIRE(est.size() == 7);
  CHECK(est[0].observable == "Z0");
  CHECK(est[1].observable == "ZZ1");
  // <Z> = 1 - 2p = 0.4, <Z_0 Z_d> = 0.16 for a product state
  CHECK(std::abs(est[0].estimate - 0.4) < 4 * est[0].standard_error);
  for (int d = 1; d <= 3; ++d) CHECK(std::abs(est[2 * d - 1].estimate - 0.16) < 4 * est[2 * d - 1].standard_error);
}

TEST_CASE("free-energy estimate and serialization") {
  Rng rng(10);
  const auto net = random_network(1, 2, SpectrumKind::psa, rng);
  SamplerConfig cfg;
  cfg.shots = 2000;
  const auto r = sample_free_energy(net.ansatz, net.spectrum, sdim(1.0), 1.0, cfg, NoiseModel::noiseless());
  CHECK(r.terms.size() == 4);
  CHECK(std::abs(r.energy - r.exact_energy) < 4 * r.standard_error);
  CHECK(r.free_energy == doctest::Approx(r.energy - entropy_density(net.spectrum)).epsilon(1e-14));
  CHECK(shot_csv_header() == "observable,estimate,stderr,shots,noise");
  const std::string row = to_csv_row(r.terms[0]);
  CHECK(row.rfind("XX,", 0) == 0);
  CHECK(row.substr(row.size() - 7) == ",2000,0");
}

TEST_CASE("sampler configuration validation") {
  SamplerConfig cfg;
  cfg.shots = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.window = 2;
  Rng rng(1);
  const auto net = random_network(1, 1, SpectrumKind::psa, rng);
  CHECK_THROWS_AS(run_protocol(net.ansatz, net.spectrum, measurement_groups(sdim(1.0))[0], sdim(1.0), cfg,
                               NoiseModel::noiseless()),
                  InvalidArgument);
  NoiseModel bad = NoiseModel::depolarizing(-0.1, 0.0);
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}
