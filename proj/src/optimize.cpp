#include "stoqmps/optimize.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <thread>

namespace stoqmps {

std::string to_string(GradientMethod g) { return g == GradientMethod::exact ? "exact" : "finite-difference"; }

std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::successful: return "successful";
    case RunStatus::trapped: return "trapped";
    case RunStatus::lost: return "lost";
  }
  return "";
}

GradientMethod parse_gradient_method(const std::string& s) {
  if (s == "exact") return GradientMethod::exact;
  if (s == "finite-difference" || s == "fd") return GradientMethod::finite_difference;
  throw InvalidArgument("unknown gradient method '" + s + "'");
}

RunStatus parse_run_status(const std::string& s) {
  if (s == "successful") return RunStatus::successful;
  if (s == "trapped") return RunStatus::trapped;
  if (s == "lost") return RunStatus::lost;
  throw InvalidArgument("unknown run status '" + s + "'");
}

void OptimizerConfig::validate() const {
  if (n_batch < 1) throw InvalidArgument("n_batch must be >= 1");
  if (!(gtol > 0)) throw InvalidArgument("gtol must be positive");
  if (!(ftol >= 0)) throw InvalidArgument("ftol must be >= 0");
  if (max_evaluations < 1) throw InvalidArgument("max_evaluations must be >= 1");
  if (memory < 1) throw InvalidArgument("memory must be >= 1");
  if (!(fd_step > 0)) throw InvalidArgument("fd_step must be positive");
  if (jobs < 1) throw InvalidArgument("jobs must be >= 1");
  if (randomness && !(*randomness >= 0 && std::isfinite(*randomness))) throw InvalidArgument("randomness must be >= 0");
  if (!(randomness_scale >= 0 && std::isfinite(randomness_scale))) throw InvalidArgument("randomness_scale must be >= 0");
}

double randomness_strength(int q, int tau, EvaluationMode mode) {
  const bool deep = tau > 4;
  if (mode == EvaluationMode::infinite) {
    if (q <= 2) return deep ? 0.4 : 0.5;
    return deep ? 0.2 : 0.3;
  }
  switch (std::clamp(q, 2, 5)) {
    case 2: return 0.2;
    case 3: return 0.12;
    case 4: return deep ? 0.08 : 0.1;
    default: return deep ? 0.05 : 0.07;
  }
}

// --- local optimizer --------------------------------------------------------

namespace {

RealVector project(const RealVector& x, const Box& box) { return x.cwiseMax(box.lower).cwiseMin(box.upper); }

// Gradient with components that push out of an active bound removed.
RealVector projected_gradient(const RealVector& x, const RealVector& g, const Box& box) {
  RealVector pg = g;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x(i) <= box.lower(i) && g(i) > 0) pg(i) = 0;
    if (x(i) >= box.upper(i) && g(i) < 0) pg(i) = 0;
  }
  return pg;
}

}  // namespace

LocalResult local_minimize(const Objective& objective, const RealVector& x0, const Box& box,
                           const OptimizerConfig& config) {
  const Eigen::Index n = x0.size();
  if (box.lower.size() != n || box.upper.size() != n) throw InvalidArgument("box does not match the parameter count");
  LocalResult r;
  auto eval = [&](const RealVector& x, RealVector& g) {
    const double f = objective(x, &g);
    ++r.evaluations;
    if (!std::isfinite(f) || !g.allFinite())
      throw NumericalError("objective returned a non-finite value after " + std::to_string(r.evaluations) +
                           " evaluations");
    r.lowest_visited = std::min(r.lowest_visited, f);
    return f;
  };

  RealVector x = project(x0, box);
  RealVector g(n);
  r.lowest_visited = std::numeric_limits<double>::infinity();
  double f = eval(x, g);
  r.initial_f = f;
  std::deque<std::pair<RealVector, RealVector>> memory;
  int stalls = 0;

  while (true) {
    const RealVector pg = projected_gradient(x, g, box);
    if (n == 0 || pg.lpNorm<Eigen::Infinity>() < config.gtol) {
      r.converged = true;
      r.message = "gradient tolerance reached";
      break;
    }
    if (r.evaluations >= config.max_evaluations) {
      r.message = "evaluation budget exhausted";
      break;
    }

    // two-loop recursion
    RealVector d = -pg;
    std::vector<double> alpha(memory.size());
    for (std::size_t i = memory.size(); i-- > 0;) {
      const auto& [s, y] = memory[i];
      alpha[i] = s.dot(d) / y.dot(s);
      d -= alpha[i] * y;
    }
    if (!memory.empty()) d *= memory.back().first.dot(memory.back().second) / memory.back().second.squaredNorm();
    for (std::size_t i = 0; i < memory.size(); ++i) {
      const auto& [s, y] = memory[i];
      d += (alpha[i] - y.dot(d) / y.dot(s)) * s;
    }
    for (Eigen::Index i = 0; i < n; ++i)
      if ((x(i) <= box.lower(i) && d(i) < 0) || (x(i) >= box.upper(i) && d(i) > 0)) d(i) = 0;
    if (!(g.dot(d) < 0)) {
      memory.clear();
      d = -pg;
    }

    double step = memory.empty() ? std::min(1.0, 1.0 / d.norm()) : 1.0;
    RealVector x_new, g_new(n);
    double f_new = f;
    bool accepted = false;
    for (int k = 0; k < 60 && r.evaluations < config.max_evaluations; ++k) {
      x_new = project(x + step * d, box);
      const double decrease = g.dot(x_new - x);
      if (decrease >= 0) {
        step *= 0.5;
        continue;
      }
      f_new = eval(x_new, g_new);
      if (f_new <= f + 1e-4 * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!memory.empty()) {
        memory.clear();
        continue;
      }
      r.converged = r.evaluations < config.max_evaluations;
      r.message = r.converged ? "line search found no further decrease" : "evaluation budget exhausted";
      break;
    }

    const RealVector s = x_new - x, y = g_new - g;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      memory.emplace_back(s, y);
      if (static_cast<int>(memory.size()) > config.memory) memory.pop_front();
    }
    const double drop = f - f_new;
    x = x_new;
    g = g_new;
    f = f_new;
    ++r.iterations;
    r.trajectory.push_back(f);
    stalls = drop <= config.ftol * std::max(1.0, std::abs(f)) ? stalls + 1 : 0;
    if (stalls >= 3) {
      r.converged = true;
      r.message = "relative decrease below ftol";
      break;
    }
  }
  r.x = x;
  r.f = f;
  return r;
}

// --- free-energy problems ---------------------------------------------------

StoQmpsNetwork make_network(const Candidate& c, const NetworkOptions& options) {
  return StoQmpsNetwork{c.ansatz, c.spectrum, options};
}

RealVector pack(const Candidate& c) {
  const RealVector a = flatten(c.ansatz), s = c.spectrum.flatten();
  RealVector x(a.size() + s.size());
  x << a, s;
  return x;
}

void unpack(Candidate& c, const RealVector& x) {
  const Eigen::Index na = static_cast<Eigen::Index>(c.ansatz.parameter_count());
  if (x.size() != na + c.spectrum.parameter_count()) throw InvalidArgument("parameter vector has wrong length");
  unflatten(c.ansatz, x.head(na));
  c.spectrum.unflatten(x.tail(c.spectrum.parameter_count()));
}

Box bounds_of(const Candidate& c) {
  const Eigen::Index n = pack(c).size();
  const double inf = std::numeric_limits<double>::infinity();
  Box b{RealVector::Constant(n, -inf), RealVector::Constant(n, inf)};
  if (c.spectrum.kind == SpectrumKind::psa) {
    b.lower(n - 1) = 0.0;
    b.upper(n - 1) = 1.0;
  }
  return b;
}

Objective free_energy_objective(const Candidate& shape, const NetworkOptions& options, const ThermalProblem& problem,
                                const OptimizerConfig& config) {
  const Box box = bounds_of(shape);
  return [shape, options, problem, config, box](const RealVector& x, RealVector* grad) {
    Candidate c = shape;
    unpack(c, x);
    const StoQmpsNetwork net = make_network(c, options);
    if (!grad) return evaluate(net, problem.ham, problem.temperature, false).free_energy;
    if (config.gradient == GradientMethod::exact) {
      const Evaluation e = evaluate(net, problem.ham, problem.temperature, true);
      grad->resize(x.size());
      *grad << e.circuit_gradient, e.spectrum_gradient;
      return e.free_energy;
    }
    const double f = evaluate(net, problem.ham, problem.temperature, false).free_energy;
    grad->resize(x.size());
    auto value = [&](const RealVector& y) {
      Candidate t = shape;
      unpack(t, y);
      return evaluate(make_network(t, options), problem.ham, problem.temperature, false).free_energy;
    };
    const double h = config.fd_step;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      RealVector up = x, down = x;
      up(i) = std::min(x(i) + h, box.upper(i));
      down(i) = std::max(x(i) - h, box.lower(i));
      (*grad)(i) = (value(up) - value(down)) / (up(i) - down(i));
    }
    return f;
  };
}

Candidate random_candidate(const BatchSettings& settings, Rng& rng) {
  Candidate c;
  c.ansatz = random_ansatz(settings.q, settings.tau_start, settings.geometry, settings.mode, rng);
  c.spectrum = settings.kind == SpectrumKind::psa ? SpectrumParams::product(0.5) : SpectrumParams::correlated(0.0, 0.0);
  return c;
}

std::vector<Candidate> grow_layer(const Candidate& best, double x, int n_batch, std::uint64_t seed) {
  if (!(x >= 0)) throw InvalidArgument("randomness must be >= 0");
  const Candidate base{append_identity_layer(best.ansatz), best.spectrum};
  std::vector<Candidate> out;
  out.reserve(n_batch);
  for (int i = 0; i < n_batch; ++i) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(base.ansatz.tau), static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> noise(0.0, x);
    Candidate c = base;
    if (x > 0) {
      if (c.ansatz.mode == Parameterization::angles) {
        for (auto& g : c.ansatz.angles)
          for (double& v : g) v += noise(rng);
      } else {
        for (auto& m : c.ansatz.raw) {
          for (int r = 0; r < 4; ++r)
            for (int k = 0; k < 4; ++k) m(r, k) += Complex(noise(rng), noise(rng));
          m = reunitarize(m);
        }
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

LevelResult optimize_level(const ThermalProblem& problem, const NetworkOptions& options,
                           const std::vector<Candidate>& inits, const OptimizerConfig& config) {
  config.validate();
  if (inits.empty()) throw InvalidArgument("empty batch");
  const auto start = std::chrono::steady_clock::now();
  LevelResult level;
  level.tau = inits.front().ansatz.tau;
  level.instances.resize(inits.size());

  auto run = [&](std::size_t i) {
    InstanceResult& out = level.instances[i];
    out.index = static_cast<int>(i);
    out.params = inits[i];
    try {
      const LocalResult r =
          local_minimize(free_energy_objective(inits[i], options, problem, config), pack(inits[i]),
                         bounds_of(inits[i]), config);
      unpack(out.params, r.x);
      out.initial_f = r.initial_f;
      out.f = r.f;
      out.lowest_visited = r.lowest_visited;
      out.evaluations = r.evaluations;
      out.converged = r.converged;
      out.trajectory = r.trajectory;
      out.diagnostic = r.message;
    } catch (const std::exception& e) {
      out.failed = true;
      out.diagnostic = e.what();
      out.f = std::numeric_limits<double>::infinity();
    }
  };

  const int workers = std::min<int>(config.jobs, static_cast<int>(inits.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < inits.size(); ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next++) < inits.size();) run(i);
      });
    for (auto& t : pool) t.join();
  }

  for (const auto& inst : level.instances)
    if (!inst.failed && (level.best_index < 0 || inst.f < level.best_f)) {
      level.best_index = inst.index;
      level.best_f = inst.f;
    }
  if (level.best_index < 0) {
    std::string msg = "every batch instance failed:";
    for (const auto& inst : level.instances) msg += "\n  instance " + std::to_string(inst.index) + ": " + inst.diagnostic;
    throw NumericalError(msg);
  }
  level.best = level.instances[level.best_index].params;
  level.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return level;
}

std::vector<double> OptimizationRun::best_f() const {
  std::vector<double> out;
  for (const auto& l : levels) out.push_back(l.best_f);
  return out;
}

OptimizationRun batch_sequential(const ThermalProblem& problem, const BatchSettings& settings,
                                 const OptimizerConfig& config, std::vector<LevelResult> completed,
                                 const LevelCallback& on_level) {
  config.validate();
  if (settings.q < 1) throw InvalidArgument("batch optimization needs q >= 1");
  if (settings.tau_start < 1 || settings.tau_max < settings.tau_start)
    throw InvalidArgument("need 1 <= tau_start <= tau_max");
  if (!(problem.temperature >= 0) || !std::isfinite(problem.temperature))
    throw InvalidArgument("temperature must be >= 0");
  problem.ham.validate();

  OptimizationRun run{problem, settings, std::move(completed)};
  for (std::size_t i = 0; i < run.levels.size(); ++i)
    if (run.levels[i].tau != settings.tau_start + static_cast<int>(i))
      throw InvalidArgument("completed levels must be consecutive depths from tau_start");

  while (static_cast<int>(run.levels.size()) < settings.tau_max - settings.tau_start + 1) {
    const int tau = settings.tau_start + static_cast<int>(run.levels.size());
    std::vector<Candidate> inits;
    double x = 0.0;
    if (run.levels.empty()) {
      for (int i = 0; i < config.n_batch; ++i) {
        Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(tau), static_cast<std::uint64_t>(i));
        inits.push_back(random_candidate(settings, rng));
      }
    } else {
      x = config.randomness ? *config.randomness
                            : config.randomness_scale * randomness_strength(settings.q, tau, settings.network.mode);
      inits = grow_layer(run.levels.back().best, x, config.n_batch, config.seed);
      if (config.carry_forward) inits.front() = grow_layer(run.levels.back().best, 0.0, 1, config.seed).front();
    }
    LevelResult level = optimize_level(problem, settings.network, inits, config);
    level.randomness = x;
    if (!run.levels.empty()) {
      // Status from the perturbed members only; the carried embedding cannot get worse.
      const double prev = run.levels.back().best_f;
      double perturbed = std::numeric_limits<double>::infinity();
      for (const auto& inst : level.instances)
        if (!(config.carry_forward && inst.index == 0) && !inst.failed) perturbed = std::min(perturbed, inst.f);
      if (!std::isfinite(perturbed)) perturbed = level.best_f;
      if (perturbed > prev + config.status_tolerance)
        level.status = RunStatus::lost;
      else if (perturbed > prev - config.status_tolerance)
        level.status = RunStatus::trapped;
    }
    run.levels.push_back(level);
    if (on_level) on_level(run.levels.back());
  }
  return run;
}

std::vector<ScanPoint> temperature_scan(const HamiltonianSpec& ham, const std::vector<double>& temperatures,
                                        const BatchSettings& settings, const OptimizerConfig& config,
                                        const EdOptions& oracle, int ed_length) {
  std::vector<ScanPoint> out;
  for (double T : temperatures) {
    ScanPoint p;
    p.run = batch_sequential(ThermalProblem{ham, T}, settings, config);
    const double exact = reference_free_energy(ham, T, ed_length, oracle).free_energy;
    const StoQmpsNetwork net = make_network(p.run.final_level().best, settings.network);
    p.result = free_energy_density(net, ham, T, exact);
    p.result.metadata.seed = config.seed;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace stoqmps
