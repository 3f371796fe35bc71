#include "stoqmps/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <json.hpp>

namespace stoqmps {

namespace {

using State = std::uint32_t;

// Site i is bit (L - 1 - i).
struct Term {
  std::vector<int> sites;
  std::string labels;
  double coefficient;
};

std::vector<Term> chain_terms(const HamiltonianSpec& ham, int length, Boundary boundary) {
  std::vector<Term> out;
  for (int i = 0; i < length; ++i)
    for (const auto& t : ham.terms) {
      if (boundary == Boundary::open && i + t.range() > length) continue;
      Term term{{}, {}, t.coefficient};
      for (int k = 0; k < t.range(); ++k)
        if (t.labels[k] != 'I') {
          term.sites.push_back((i + k) % length);
          term.labels.push_back(t.labels[k]);
        }
      out.push_back(term);
    }
  return out;
}

// term |s> = amplitude |out>
std::pair<State, Complex> apply_term(const Term& t, State s, int length) {
  Complex amp = t.coefficient;
  for (std::size_t k = 0; k < t.sites.size(); ++k) {
    const State bit = State(1) << (length - 1 - t.sites[k]);
    const bool one = s & bit;
    switch (t.labels[k]) {
      case 'X': s ^= bit; break;
      case 'Y': amp *= one ? Complex(0, -1) : Complex(0, 1); s ^= bit; break;
      case 'Z': if (one) amp = -amp; break;
      default: break;
    }
  }
  return {s, amp};
}

bool conserves_z_parity(const HamiltonianSpec& ham) {
  for (const auto& t : ham.terms) {
    int flips = 0;
    for (char c : t.labels) flips += (c == 'X' || c == 'Y');
    if (flips % 2) return false;
  }
  return true;
}

std::vector<double> hermitian_eigenvalues(Matrix& h) {
  const lapack_int n = static_cast<lapack_int>(h.rows());
  std::vector<double> w(n);
  if (n == 0) return w;
  const lapack_int info = LAPACKE_zheevd(LAPACK_COL_MAJOR, 'N', 'U', n, h.data(), n, w.data());
  if (info != 0) throw NumericalError("zheevd failed with info " + std::to_string(info));
  return w;
}

std::vector<double> dense_spectrum(const HamiltonianSpec& ham, int length, Boundary boundary) {
  const State dim = State(1) << length;
  Matrix h = Matrix::Zero(dim, dim);
  const auto terms = chain_terms(ham, length, boundary);
  for (State s = 0; s < dim; ++s)
    for (const auto& t : terms) {
      const auto [o, amp] = apply_term(t, s, length);
      h(o, s) += amp;
    }
  return hermitian_eigenvalues(h);
}

State rotate(State s, int length) {
  // T moves site i to site i + 1: bit (L-1-i) -> bit (L-2-i), i.e. a right rotation.
  const State mask = (State(1) << length) - 1;
  return ((s >> 1) | (s << (length - 1))) & mask;
}

std::vector<double> momentum_spectrum(const HamiltonianSpec& ham, int length) {
  const State dim = State(1) << length;
  const bool parity = conserves_z_parity(ham);
  // representative, shift with T^shift(rep) = s, and orbit size
  std::vector<State> rep(dim);
  std::vector<int> shift(dim);
  std::vector<int> period(dim);
  std::vector<State> reps;
  for (State s = 0; s < dim; ++s) {
    State r = s, best = s;
    int best_j = 0, p = 0;
    for (int j = 1; j <= length; ++j) {
      r = rotate(r, length);
      if (r == s) {
        p = j;
        break;
      }
      if (r < best) {
        best = r;
        best_j = j;
      }
    }
    rep[s] = best;
    // best = T^{best_j} s  =>  s = T^{p - best_j} best
    shift[s] = (p - best_j) % p;
    period[s] = p;
    if (best == s) reps.push_back(s);
  }
  const auto terms = chain_terms(ham, length, Boundary::periodic);
  std::vector<double> all;
  all.reserve(dim);
  std::vector<int> index(dim, -1);
  for (int m = 0; m < length; ++m) {
    const double k = 2 * std::numbers::pi * m / length;
    for (int par = 0; par < (parity ? 2 : 1); ++par) {
      std::vector<State> basis;
      for (State r : reps) {
        if ((m * period[r]) % length != 0) continue;
        if (parity && (std::popcount(r) % 2) != par) continue;
        index[r] = static_cast<int>(basis.size());
        basis.push_back(r);
      }
      const Eigen::Index n = static_cast<Eigen::Index>(basis.size());
      Matrix h = Matrix::Zero(n, n);
      for (Eigen::Index a = 0; a < n; ++a) {
        const State ra = basis[a];
        for (const auto& t : terms) {
          const auto [s, amp] = apply_term(t, ra, length);
          const State rb = rep[s];
          const int b = index[rb];
          if (b < 0 || basis[b] != rb) continue;
          h(b, a) += amp * std::polar(1.0, k * shift[s]) * std::sqrt(double(period[ra]) / period[rb]);
        }
      }
      for (State r : basis) index[r] = -1;
      const auto w = hermitian_eigenvalues(h);
      all.insert(all.end(), w.begin(), w.end());
    }
  }
  if (all.size() != dim) throw NumericalError("momentum blocks do not cover the Hilbert space");
  return all;
}

std::string cache_key(const HamiltonianSpec& ham, int length, Boundary boundary) {
  return model_key(ham) + "_L" + std::to_string(length) + "_" + to_string(boundary);
}

std::optional<std::vector<double>> load_cached(const std::filesystem::path& file, const std::string& key) {
  std::ifstream in(file);
  if (!in) return std::nullopt;
  try {
    nlohmann::json j;
    in >> j;
    if (j.at("key").get<std::string>() != key) return std::nullopt;
    return j.at("energies").get<std::vector<double>>();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void store_cached(const std::filesystem::path& dir, const std::filesystem::path& file, const std::string& key,
                  const HamiltonianSpec& ham, int length, Boundary boundary, const std::vector<double>& e) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["key"] = key;
  j["model"] = ham.name;
  j["params"] = {{"V", ham.V}};
  j["L"] = length;
  j["boundary"] = to_string(boundary);
  j["energies"] = e;
  const auto tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << std::setprecision(17) << j.dump();
  }
  std::filesystem::rename(tmp, file);
}

}  // namespace

std::string to_string(Boundary b) { return b == Boundary::periodic ? "periodic" : "open"; }

std::vector<double> ed_spectrum(const HamiltonianSpec& ham, int length, const EdOptions& options) {
  ham.validate();
  if (length < 2 || length > 16) throw InvalidArgument("ED supports 2 <= L <= 16");
  if (options.boundary == Boundary::periodic && length < ham.max_range())
    throw InvalidArgument("periodic chain shorter than the interaction range");
  const std::string key = cache_key(ham, length, options.boundary);
  std::filesystem::path file;
  if (options.cache_dir) {
    file = *options.cache_dir / (key + ".json");
    if (auto cached = load_cached(file, key)) return *cached;
  }
  EdMethod method = options.method;
  if (method == EdMethod::automatic)
    method = options.boundary == Boundary::periodic && length > 8 ? EdMethod::momentum : EdMethod::dense;
  if (method == EdMethod::momentum && options.boundary != Boundary::periodic)
    throw InvalidArgument("momentum blocking requires periodic boundaries");
  if (method == EdMethod::dense && length > 13)
    throw InvalidArgument("dense ED beyond L = 13 is not supported; use momentum blocking");
  std::vector<double> e =
      method == EdMethod::dense ? dense_spectrum(ham, length, options.boundary) : momentum_spectrum(ham, length);
  std::sort(e.begin(), e.end());
  if (options.cache_dir) store_cached(*options.cache_dir, file, key, ham, length, options.boundary, e);
  return e;
}

OracleResult thermodynamics(const std::vector<double>& spectrum, int length, double temperature) {
  if (spectrum.empty()) throw InvalidArgument("empty spectrum");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw InvalidArgument("temperature must be >= 0");
  const double e0 = *std::min_element(spectrum.begin(), spectrum.end());
  OracleResult r;
  r.temperature = temperature;
  r.method = "ed" + std::to_string(length);
  if (temperature == 0.0) {
    const double tol = 1e-9 * std::max(1.0, std::abs(e0));
    const auto g = std::count_if(spectrum.begin(), spectrum.end(), [&](double e) { return e - e0 < tol; });
    r.energy = r.free_energy = e0 / length;
    r.entropy = std::log(double(g)) / length;
    return r;
  }
  const double beta = 1.0 / temperature;
  double z = 0.0, mean = 0.0;
  for (double e : spectrum) {
    const double w = std::exp(-beta * (e - e0));
    z += w;
    mean += w * (e - e0);
  }
  mean /= z;
  r.entropy = (std::log(z) + beta * mean) / length;
  r.energy = (e0 + mean) / length;
  r.free_energy = r.energy - temperature * r.entropy;
  return r;
}

OracleResult ed_thermodynamics(const HamiltonianSpec& ham, int length, double temperature, const EdOptions& options) {
  return thermodynamics(ed_spectrum(ham, length, options), length, temperature);
}

OracleResult tfim_free_energy(double temperature) {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw InvalidArgument("temperature must be >= 0");
  OracleResult r;
  r.temperature = temperature;
  r.method = "free-fermion";
  if (temperature == 0.0) {
    r.energy = r.free_energy = -4.0 / std::numbers::pi;
    return r;
  }
  using boost::math::quadrature::gauss_kronrod;
  const double t = temperature;
  // x = Lambda_k / 2T; ln(2 cosh x) = x + log1p(e^{-2x}) for x >= 0.
  auto x_of = [t](double k) { return 2.0 * std::sin(0.5 * k) / t; };
  auto energy_integrand = [&](double k) {
    const double x = x_of(k);
    return -t * x * std::tanh(x);
  };
  auto entropy_integrand = [&](double k) {
    const double x = x_of(k);
    const double e = std::exp(-2 * x);
    return std::log1p(e) + 2 * x * e / (1 + e);
  };
  double err = 0.0;
  const double pi = std::numbers::pi;
  r.energy = gauss_kronrod<double, 61>::integrate(energy_integrand, 0.0, pi, 20, 1e-14, &err) / pi;
  r.entropy = gauss_kronrod<double, 61>::integrate(entropy_integrand, 0.0, pi, 20, 1e-14, &err) / pi;
  r.free_energy = r.energy - t * r.entropy;
  return r;
}

OracleResult reference_free_energy(const HamiltonianSpec& ham, double temperature, int ed_length,
                                   const EdOptions& options) {
  if (ham.name == "sdim" && ham.V == 0.0) return tfim_free_energy(temperature);
  return ed_thermodynamics(ham, ed_length, temperature, options);
}

}  // namespace stoqmps
