#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stoqmps/network.hpp"
#include "stoqmps/oracle.hpp"

namespace stoqmps {

enum class GradientMethod { exact, finite_difference };
enum class RunStatus { successful, trapped, lost };

std::string to_string(GradientMethod g);
std::string to_string(RunStatus s);
GradientMethod parse_gradient_method(const std::string& s);
RunStatus parse_run_status(const std::string& s);

struct OptimizerConfig {
  int n_batch = 30;
  double gtol = 1e-8;        ///< projected-gradient infinity norm
  double ftol = 1e-13;       ///< relative decrease below which an iteration counts as stalled
  int max_evaluations = 5000;
  int memory = 10;
  GradientMethod gradient = GradientMethod::exact;
  double fd_step = 1e-6;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::optional<double> randomness;  ///< fixed x; the depth table is used when unset
  double randomness_scale = 1.0;     ///< multiplies the table value
  bool carry_forward = true;         ///< instance 0 of each grown batch is the unperturbed embedding
  double status_tolerance = 1e-6;

  void validate() const;
};

/// Batch randomization strength x for growing to depth `tau`. Infinite mode:
/// q <= 2 -> 0.5 / 0.4, q >= 3 -> 0.3 / 0.2 for tau <= 4 / tau > 4. Finite
/// mode: 0.2, 0.12, (0.1, 0.08), (0.07, 0.05) for q = 2..5. Missing q use the
/// nearest listed one.
double randomness_strength(int q, int tau, EvaluationMode mode);

// --- local optimizer --------------------------------------------------------

/// Returns f(x) and, when grad is non-null, fills the gradient.
using Objective = std::function<double(const RealVector& x, RealVector* grad)>;

struct Box {
  RealVector lower;  ///< -inf for unconstrained entries
  RealVector upper;
};

struct LocalResult {
  RealVector x;
  double f = 0.0;
  double initial_f = 0.0;
  double lowest_visited = 0.0;  ///< min f over every evaluated point
  long evaluations = 0;
  long iterations = 0;
  bool converged = false;       ///< gradient or stall criterion met before the budget
  std::string message;
  std::vector<double> trajectory;  ///< f after each accepted step
};

/// Projected limited-memory BFGS with Armijo backtracking. Throws
/// NumericalError when the objective returns a non-finite value.
LocalResult local_minimize(const Objective& objective, const RealVector& x0, const Box& box,
                           const OptimizerConfig& config);

// --- free-energy problems ---------------------------------------------------

struct ThermalProblem {
  HamiltonianSpec ham;
  double temperature = 1.0;
};

struct Candidate {
  CircuitAnsatz ansatz;
  SpectrumParams spectrum;
};

struct BatchSettings {
  int q = 1;
  int tau_start = 1;  ///< depth of the random first batch
  int tau_max = 1;
  Geometry geometry = Geometry::ladder;
  Parameterization mode = Parameterization::angles;
  SpectrumKind kind = SpectrumKind::psa;
  NetworkOptions network;
};

StoQmpsNetwork make_network(const Candidate& c, const NetworkOptions& options);

/// Flat parameters (circuit then spectrum), box bounds, and the objective
/// f(x) = eps - T s of the network built from x.
RealVector pack(const Candidate& c);
void unpack(Candidate& c, const RealVector& x);
Box bounds_of(const Candidate& c);
Objective free_energy_objective(const Candidate& shape, const NetworkOptions& options, const ThermalProblem& problem,
                                const OptimizerConfig& config);

/// Random starting point at depth settings.tau_start: p = 0.5 or (J, h) = (0, 0).
Candidate random_candidate(const BatchSettings& settings, Rng& rng);

/// n_batch copies of `best` with one identity layer appended and uniform
/// [0, x] noise added to every circuit parameter (raw mode re-unitarizes).
/// Member i draws from make_stream(seed, tau + 1, i).
std::vector<Candidate> grow_layer(const Candidate& best, double x, int n_batch, std::uint64_t seed);

struct InstanceResult {
  int index = 0;
  bool failed = false;
  std::string diagnostic;
  Candidate params;
  double initial_f = 0.0;
  double f = 0.0;
  double lowest_visited = 0.0;
  long evaluations = 0;
  bool converged = false;
  std::vector<double> trajectory;
};

struct LevelResult {
  int tau = 0;
  double randomness = 0.0;
  Candidate best;
  double best_f = 0.0;
  int best_index = -1;
  RunStatus status = RunStatus::successful;
  double seconds = 0.0;
  std::vector<InstanceResult> instances;
};

/// Locally optimizes every initialization in parallel and picks the lowest f
/// (ties by lowest index). Throws NumericalError when every instance fails.
LevelResult optimize_level(const ThermalProblem& problem, const NetworkOptions& options,
                           const std::vector<Candidate>& inits, const OptimizerConfig& config);

struct OptimizationRun {
  ThermalProblem problem;
  BatchSettings settings;
  std::vector<LevelResult> levels;

  std::vector<double> best_f() const;
  const LevelResult& final_level() const { return levels.back(); }
};

using LevelCallback = std::function<void(const LevelResult&)>;

/// Layer-growing batch search from tau_start (or after the last of `completed`)
/// to settings.tau_max. `on_level` runs after each newly finished depth.
OptimizationRun batch_sequential(const ThermalProblem& problem, const BatchSettings& settings,
                                 const OptimizerConfig& config, std::vector<LevelResult> completed = {},
                                 const LevelCallback& on_level = {});

struct ScanPoint {
  OptimizationRun run;
  FreeEnergyResult result;  ///< final-depth best, with the oracle reference
};

/// Independent batch runs per temperature, scored against reference_free_energy.
std::vector<ScanPoint> temperature_scan(const HamiltonianSpec& ham, const std::vector<double>& temperatures,
                                        const BatchSettings& settings, const OptimizerConfig& config,
                                        const EdOptions& oracle = {}, int ed_length = 14);

}  // namespace stoqmps
