#include <doctest.h>

#include <cmath>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <Eigen/Eigenvalues>

#include "stoqmps/spectrum.hpp"

using namespace stoqmps;
using doctest::Approx;

namespace {

int spin(int n) { return 1 - 2 * n; }

// Direct Boltzmann enumeration of the open chain.
std::vector<double> enumerate(double J, double h, int L) {
  std::vector<double> w(std::size_t(1) << L);
  double z = 0.0;
  double wmax = -1e300;
  std::vector<double> e(w.size());
  for (std::size_t c = 0; c < w.size(); ++c) {
    double minus_w = 0.0;
    for (int i = 0; i < L; ++i) {
      const int si = spin((c >> (L - 1 - i)) & 1);
      minus_w += h * si;
      if (i + 1 < L) minus_w += J * si * spin((c >> (L - 2 - i)) & 1);
    }
    e[c] = minus_w;
    wmax = std::max(wmax, minus_w);
  }
  for (std::size_t c = 0; c < w.size(); ++c) z += (w[c] = std::exp(e[c] - wmax));
  for (double& x : w) x /= z;
  return w;
}

double shannon(const std::vector<double>& p) {
  double s = 0.0;
  for (double x : p)
    if (x > 0) s -= x * std::log(x);
  return s;
}

Bitstring bits_of(std::size_t c, int L) {
  Bitstring b(L);
  for (int i = 0; i < L; ++i) b[i] = (c >> (L - 1 - i)) & 1;
  return b;
}

}  // namespace

TEST_CASE("transfer matrix entries") {
  const auto t0 = transfer_matrix(SpectrumParams::correlated(0, 0), 1.0);
  CHECK((t0 - Eigen::Matrix2d::Ones()).norm() == 0.0);
  const auto t1 = transfer_matrix(SpectrumParams::correlated(1, 0), 1.0);
  CHECK(t1(0, 0) == Approx(2.718281828459045));
  CHECK(t1(1, 1) == Approx(2.718281828459045));
  CHECK(t1(0, 1) == Approx(0.36787944117144233));
  CHECK(t1(1, 0) == Approx(0.36787944117144233));
  CHECK_THROWS_AS(transfer_matrix(SpectrumParams::correlated(301, 0), 1.0), NumericalError);
  CHECK_THROWS_AS(transfer_matrix(SpectrumParams::correlated(1, 200), 2.0), NumericalError);
}

TEST_CASE("closed-form eigenvalues") {
  auto e = eigenvalues(SpectrumParams::correlated(0, 0), 1.0);
  CHECK(e.lambda_plus == Approx(2.0).epsilon(1e-14));
  CHECK(std::abs(e.lambda_minus) < 1e-14);
  e = eigenvalues(SpectrumParams::correlated(0, 1), 1.0);
  CHECK(e.lambda_plus == Approx(3.0861612696304874).epsilon(1e-14));
  CHECK(std::abs(e.lambda_minus) < 1e-14);
  e = eigenvalues(SpectrumParams::correlated(1, 0), 1.0);
  CHECK(e.lambda_plus == Approx(3.0861612696304874).epsilon(1e-14));
  CHECK(e.lambda_minus == Approx(2.3504023872876028).epsilon(1e-14));
}

TEST_CASE("eigenvalues agree with a generic symmetric eigensolver") {
  Rng rng = make_stream(11);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 100; ++i) {
    const auto p = SpectrumParams::correlated(u(rng), u(rng));
    const double beta = 0.5 + 0.5 * std::abs(u(rng));
    const auto t = transfer_matrix(p, beta);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(t);
    const auto e = eigenvalues(p, beta);
    const double scale = e.lambda_plus;
    CHECK(std::abs(e.lambda_plus - es.eigenvalues()(1)) < 1e-12 * scale);
    CHECK(std::abs(e.lambda_minus - es.eigenvalues()(0)) < 1e-12 * scale);
    CHECK(std::abs(e.lambda_plus * e.lambda_minus - t.determinant()) < 1e-12 * scale * scale);
    CHECK(std::abs(e.lambda_plus + e.lambda_minus - t.trace()) < 1e-12 * scale);
    CHECK(e.lambda_plus >= std::abs(e.lambda_minus));
    CHECK((t * e.vector_plus - e.lambda_plus * e.vector_plus).norm() < 1e-12 * scale);
    CHECK((t * e.vector_minus - e.lambda_minus * e.vector_minus).norm() < 1e-12 * scale);
    CHECK(e.vector_plus.norm() == Approx(1.0));
    CHECK(e.vector_plus.minCoeff() > 0);
  }
}

TEST_CASE("entropy density values") {
  CHECK(entropy_density(SpectrumParams::product(0.5)) == Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(entropy_density(SpectrumParams::product(0.0)) == 0.0);
  CHECK(entropy_density(SpectrumParams::product(1.0)) == 0.0);
  const double s = entropy_density(SpectrumParams::correlated(0, 1));
  CHECK(s == Approx(0.36533385508720767).epsilon(1e-12));
  CHECK(s == Approx(binary_entropy(std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0)))).epsilon(1e-12));
  CHECK(entropy_density(SpectrumParams::correlated(1, 0.5)) == Approx(0.06732551847392387).epsilon(1e-8));
  CHECK(entropy_density(SpectrumParams::correlated(-0.7, 0.3)) == Approx(0.5016468941275859).epsilon(1e-8));
}

TEST_CASE("field to probability mapping matches CSA at J = 0") {
  for (double h : {-1.3, 0.0, 0.4, 2.0}) {
    const double p = psa_probability_from_field(h);
    const auto k = stationary_kernel(SpectrumParams::correlated(0, h));
    CHECK(k.w[0][1] == Approx(p).epsilon(1e-14));
    CHECK(entropy_density(SpectrumParams::correlated(0, h)) == Approx(binary_entropy(p)).epsilon(1e-12));
  }
}

TEST_CASE("entropy density bounds") {
  Rng rng = make_stream(12);
  std::uniform_real_distribution<double> u(-4, 4);
  for (int i = 0; i < 200; ++i) {
    const double s = entropy_density(SpectrumParams::correlated(u(rng), u(rng)));
    CHECK(s >= 0.0);
    CHECK(s <= std::log(2.0));
    CHECK(s < std::log(2.0) - 1e-6);
  }
  CHECK(entropy_density(SpectrumParams::correlated(0, 0)) == Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("entropy density gradient matches finite differences") {
  Rng rng = make_stream(13);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 20; ++i) {
    const double J = u(rng), h = u(rng);
    const RealVector g = entropy_density_gradient(SpectrumParams::correlated(J, h));
    const double e = 1e-6;
    const double dj = (entropy_density(SpectrumParams::correlated(J + e, h)) -
                       entropy_density(SpectrumParams::correlated(J - e, h))) / (2 * e);
    const double dh = (entropy_density(SpectrumParams::correlated(J, h + e)) -
                       entropy_density(SpectrumParams::correlated(J, h - e))) / (2 * e);
    CHECK(g(0) == Approx(dj).epsilon(1e-6));
    CHECK(g(1) == Approx(dh).epsilon(1e-6));
  }
  const RealVector gp = entropy_density_gradient(SpectrumParams::product(0.3));
  CHECK(gp(0) == Approx(std::log(0.7 / 0.3)));
}

TEST_CASE("log_prob normalization and special cases") {
  const Bitstring b{0, 1, 1, 0, 1};
  CHECK(log_prob(SpectrumParams::product(0.5), b) == Approx(-5 * std::log(2.0)));
  const double h = 0.7;
  double indep = 0.0;
  for (int n : b) indep += std::log(std::exp(h * spin(n)) / (2 * std::cosh(h)));
  CHECK(log_prob(SpectrumParams::correlated(0, h), b) == Approx(indep).epsilon(1e-13));

  const auto p = SpectrumParams::correlated(1, 0);
  double total = 0.0;
  for (std::size_t c = 0; c < 1024; ++c) total += std::exp(log_prob(p, bits_of(c, 10)));
  CHECK(std::abs(total - 1.0) < 1e-12);

  Rng rng = make_stream(14);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int L : {1, 3, 8, 12, 16}) {
    const double J = u(rng), hh = u(rng);
    const auto ref = enumerate(J, hh, L);
    double sum = 0.0, err = 0.0;
    for (std::size_t c = 0; c < ref.size(); ++c) {
      const double lp = log_prob(SpectrumParams::correlated(J, hh), bits_of(c, L));
      sum += std::exp(lp);
      err = std::max(err, std::abs(std::exp(lp) - ref[c]));
    }
    CHECK(std::abs(sum - 1.0) < 1e-10);
    CHECK(err < 1e-12);
  }
}

TEST_CASE("finite entropy matches enumeration") {
  Rng rng = make_stream(15);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 10; ++trial) {
    const double J = u(rng), h = u(rng);
    for (int L : {1, 2, 5, 12}) {
      const double exact = shannon(enumerate(J, h, L));
      CHECK(std::abs(finite_entropy(SpectrumParams::correlated(J, h), L) - exact) < 1e-10);
    }
  }
  CHECK(finite_entropy(SpectrumParams::product(0.2), 7) == Approx(7 * binary_entropy(0.2)));
}

TEST_CASE("finite entropy per site approaches the density") {
  const auto p = SpectrumParams::correlated(0.8, -0.3);
  const double s = entropy_density(p);
  double previous = 1.0;
  for (int L : {4, 8, 12, 16}) {
    const double gap = std::abs(finite_entropy(p, L) / L - s);
    CHECK(gap < previous);
    previous = gap;
  }
  // The boundary term cancels in the increment.
  CHECK(std::abs(finite_entropy(p, 60) - finite_entropy(p, 59) - s) < 1e-10);
}

TEST_CASE("finite kernels reproduce the chain distribution") {
  Rng rng = make_stream(16);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = SpectrumParams::correlated(u(rng), u(rng));
    const int L = 7;
    const auto k = finite_kernels(p, L);
    const auto ref = enumerate(p.J, p.h, L);
    for (std::size_t c = 0; c < ref.size(); ++c) {
      const auto b = bits_of(c, L);
      double prob = k[0].w[0][b[0]];
      for (int i = 1; i < L; ++i) prob *= k[i].w[b[i - 1]][b[i]];
      CHECK(prob == Approx(ref[c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("kernel derivatives match finite differences") {
  const double J = 0.6, h = -0.4;
  std::vector<KernelDerivative> d;
  const auto k = finite_kernels(SpectrumParams::correlated(J, h), 6, &d);
  KernelDerivative ds;
  stationary_kernel(SpectrumParams::correlated(J, h), &ds);
  const double e = 1e-6;
  for (int param = 0; param < 2; ++param) {
    const double dj = param == 0 ? e : 0, dh = param == 1 ? e : 0;
    const auto kp = finite_kernels(SpectrumParams::correlated(J + dj, h + dh), 6);
    const auto km = finite_kernels(SpectrumParams::correlated(J - dj, h - dh), 6);
    const auto sp = stationary_kernel(SpectrumParams::correlated(J + dj, h + dh));
    const auto sm = stationary_kernel(SpectrumParams::correlated(J - dj, h - dh));
    for (int c = 0; c < 2; ++c)
      for (int n = 0; n < 2; ++n) {
        for (int i = 0; i < 6; ++i)
          CHECK(d[i].d[param][c][n] == Approx((kp[i].w[c][n] - km[i].w[c][n]) / (2 * e)).epsilon(1e-6));
        CHECK(ds.d[param][c][n] == Approx((sp.w[c][n] - sm.w[c][n]) / (2 * e)).epsilon(1e-6));
      }
  }
  (void)k;
}

TEST_CASE("stationary kernel leaves the marginal invariant and matches the bulk") {
  const auto p = SpectrumParams::correlated(-0.9, 0.5);
  const auto k = stationary_kernel(p);
  const auto m = stationary_marginal(p);
  for (int n = 0; n < 2; ++n) CHECK(m[0] * k.w[0][n] + m[1] * k.w[1][n] == Approx(m[n]).epsilon(1e-14));
  const auto fk = finite_kernels(p, 300);
  for (int c = 0; c < 2; ++c)
    for (int n = 0; n < 2; ++n) CHECK(fk[150].w[c][n] == Approx(k.w[c][n]).epsilon(1e-12));
}

TEST_CASE("sampling edge cases") {
  Rng rng = make_stream(17);
  const auto ones = sample_bitstring(SpectrumParams::product(1.0), 20, rng);
  const auto zeros = sample_bitstring(SpectrumParams::product(0.0), 20, rng);
  for (int i = 0; i < 20; ++i) {
    CHECK(ones[i] == 1);
    CHECK(zeros[i] == 0);
  }
}

TEST_CASE("sampled histogram passes a chi-square test") {
  const int L = 6;
  const auto p = SpectrumParams::correlated(0.7, -0.4);
  Rng rng = make_stream(18);
  const int samples = 1000000;
  std::vector<double> counts(1 << L, 0.0);
  for (int s = 0; s < samples; ++s) {
    const auto b = sample_bitstring(p, L, rng);
    std::size_t c = 0;
    for (int i = 0; i < L; ++i) c = (c << 1) | b[i];
    counts[c] += 1;
  }
  double chi2 = 0.0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const double expected = samples * std::exp(log_prob(p, bits_of(c, L)));
    chi2 += (counts[c] - expected) * (counts[c] - expected) / expected;
  }
  boost::math::chi_squared dist(double(counts.size() - 1));
  CHECK(chi2 < boost::math::quantile(dist, 0.999));
}

TEST_CASE("sampled nearest-neighbour correlator matches the transfer matrix") {
  const int L = 50, site = 25, samples = 100000;
  const auto p = SpectrumParams::correlated(2, 0);
  Rng rng = make_stream(19);
  double sum = 0.0, sum2 = 0.0;
  for (int s = 0; s < samples; ++s) {
    const auto b = sample_bitstring(p, L, rng);
    const double x = spin(b[site]) * spin(b[site + 1]);
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / samples;
  const double stderr_ = std::sqrt((sum2 / samples - mean * mean) / samples);
  // Exact: v^T T^{site} S T S T^{L-site-2} v / Z with S = diag(1, -1).
  const Eigen::Matrix2d t = transfer_matrix(p, 1.0);
  const Eigen::Vector2d v(1, 1);
  const Eigen::Matrix2d s = Eigen::Vector2d(1, -1).asDiagonal();
  Eigen::Matrix2d left = Eigen::Matrix2d::Identity(), right = Eigen::Matrix2d::Identity();
  for (int i = 0; i < site; ++i) left = left * t / 3.0;
  for (int i = 0; i < L - site - 2; ++i) right = right * t / 3.0;
  const double num = v.dot(left * s * t * s * right * v);
  const double z = v.dot(left * t * right * v);
  CHECK(std::abs(mean - num / z) < 4 * stderr_);
}

TEST_CASE("general transfer-matrix entropy") {
  const double J = 1.0, h = 0.5;
  std::vector<double> table(4);
  for (int a = 0; a < 4; ++a) {
    const int s1 = spin(a >> 1), s2 = spin(a & 1);
    table[a] = -J * s1 * s2 - h * s2;
  }
  CHECK(entropy_density_general(table, 2) ==
        Approx(entropy_density(SpectrumParams::correlated(J, h))).epsilon(1e-8));
  CHECK(entropy_density_general(std::vector<double>(8, 0.0), 3) == Approx(std::log(2.0)).epsilon(1e-9));
  const std::vector<double> field{-0.8, 0.8};
  CHECK(entropy_density_general(field, 1) == Approx(binary_entropy(psa_probability_from_field(0.8))).epsilon(1e-8));
  // A symmetric ferromagnet in the zero-temperature limit has degenerate ground states.
  CHECK_THROWS_AS(entropy_density_general(std::vector<double>{-200, 200, 200, -200}, 2), NumericalError);
}
