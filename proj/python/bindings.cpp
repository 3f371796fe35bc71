#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "stoqmps/cli.hpp"

namespace py = pybind11;
using namespace stoqmps;

namespace {

py::dict level_dict(const LevelResult& l) {
  py::dict d;
  d["tau"] = l.tau;
  d["randomness"] = l.randomness;
  d["best_f"] = l.best_f;
  d["best_index"] = l.best_index;
  d["status"] = to_string(l.status);
  d["seconds"] = l.seconds;
  d["ansatz"] = l.best.ansatz;
  d["spectrum"] = l.best.spectrum;
  py::list inst;
  for (const auto& i : l.instances) {
    py::dict e;
    e["index"] = i.index;
    e["failed"] = i.failed;
    e["f"] = i.f;
    e["initial_f"] = i.initial_f;
    e["lowest_visited"] = i.lowest_visited;
    e["evaluations"] = i.evaluations;
    e["converged"] = i.converged;
    inst.append(e);
  }
  d["instances"] = inst;
  return d;
}

py::dict estimate_dict(const ShotEstimate& e) {
  py::dict d;
  d["observable"] = e.observable;
  d["estimate"] = e.estimate;
  d["stderr"] = e.standard_error;
  d["shots"] = e.shots;
  d["noisy"] = e.noisy;
  return d;
}

NetworkOptions network_options(const std::string& mode, int length, int window_first, int window_last) {
  NetworkOptions o;
  o.mode = parse_evaluation_mode(mode);
  o.length = length;
  o.window_first = window_first;
  o.window_last = window_last;
  return o;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Holographic quantum-circuit thermal states: networks, exact references, optimization and sampling.";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<MissingArtifact>(m, "MissingArtifact", PyExc_FileNotFoundError);

  py::enum_<Geometry>(m, "Geometry").value("ladder", Geometry::ladder).value("brick", Geometry::brick);
  py::enum_<Parameterization>(m, "Parameterization")
      .value("angles", Parameterization::angles)
      .value("raw_matrix", Parameterization::raw_matrix);
  py::enum_<SpectrumKind>(m, "SpectrumKind").value("psa", SpectrumKind::psa).value("csa", SpectrumKind::csa);

  py::class_<PauliString>(m, "PauliString")
      .def(py::init([](std::string labels, double c) { return PauliString{std::move(labels), c}; }), py::arg("labels"),
           py::arg("coefficient") = 1.0)
      .def_readonly("labels", &PauliString::labels)
      .def_readonly("coefficient", &PauliString::coefficient)
      .def("__repr__", [](const PauliString& p) {
        std::ostringstream os;
        os << "PauliString('" << p.labels << "', " << p.coefficient << ")";
        return os.str();
      });

  py::class_<HamiltonianSpec>(m, "HamiltonianSpec")
      .def_readonly("name", &HamiltonianSpec::name)
      .def_readonly("terms", &HamiltonianSpec::terms)
      .def_readonly("V", &HamiltonianSpec::V)
      .def_property_readonly("max_range", &HamiltonianSpec::max_range)
      .def_property_readonly("key", [](const HamiltonianSpec& h) { return model_key(h); })
      .def("__repr__", [](const HamiltonianSpec& h) { return "HamiltonianSpec(" + model_key(h) + ")"; });
  m.def("sdim", &sdim, py::arg("V"), "-(XX + Z) + V (ZZ + XIX) per cell");
  m.def("heisenberg", &heisenberg);
  m.def("cell_matrix", &cell_matrix, py::arg("ham"), py::arg("range"));

  py::class_<SpectrumParams>(m, "SpectrumParams")
      .def_static("product", &SpectrumParams::product, py::arg("p"))
      .def_static("correlated", &SpectrumParams::correlated, py::arg("J"), py::arg("h"))
      .def_readonly("kind", &SpectrumParams::kind)
      .def_readonly("p", &SpectrumParams::p)
      .def_readonly("J", &SpectrumParams::J)
      .def_readonly("h", &SpectrumParams::h)
      .def("flatten", &SpectrumParams::flatten);
  m.def("entropy_density", &entropy_density, py::arg("spectrum"));
  m.def("finite_entropy", &finite_entropy, py::arg("spectrum"), py::arg("length"));
  m.def("binary_entropy", &binary_entropy);

  py::class_<CircuitAnsatz>(m, "CircuitAnsatz")
      .def_readonly("q", &CircuitAnsatz::q)
      .def_readonly("tau", &CircuitAnsatz::tau)
      .def_readonly("geometry", &CircuitAnsatz::geometry)
      .def_readonly("mode", &CircuitAnsatz::mode)
      .def_property_readonly("parameter_count", &CircuitAnsatz::parameter_count)
      .def_property(
          "parameters", [](const CircuitAnsatz& a) { return flatten(a); },
          [](CircuitAnsatz& a, const RealVector& x) { unflatten(a, x); })
      .def("site_unitary", &build_site_unitary);
  m.def(
      "random_ansatz",
      [](int q, int tau, Geometry g, Parameterization mode, std::uint64_t seed) {
        Rng rng = make_stream(seed);
        return random_ansatz(q, tau, g, mode, rng);
      },
      py::arg("q"), py::arg("tau"), py::arg("geometry") = Geometry::ladder,
      py::arg("mode") = Parameterization::angles, py::arg("seed") = 0);
  m.def("trivial_ansatz", &trivial_ansatz);

  m.def(
      "free_energy",
      [](const CircuitAnsatz& a, const SpectrumParams& s, const HamiltonianSpec& ham, double T, const std::string& mode,
         int length, int window_first, int window_last) {
        const StoQmpsNetwork net{a, s, network_options(mode, length, window_first, window_last)};
        const auto r = free_energy_density(net, ham, T);
        py::dict d;
        d["energy"] = r.energy;
        d["entropy"] = r.entropy;
        d["free_energy"] = r.free_energy;
        d["temperature"] = r.temperature;
        return d;
      },
      py::arg("ansatz"), py::arg("spectrum"), py::arg("ham"), py::arg("temperature"), py::arg("mode") = "infinite",
      py::arg("length") = 60, py::arg("window_first") = 48, py::arg("window_last") = 54);
  m.def(
      "evaluate",
      [](const CircuitAnsatz& a, const SpectrumParams& s, const HamiltonianSpec& ham, double T, const std::string& mode,
         int length, int window_first, int window_last) {
        const StoQmpsNetwork net{a, s, network_options(mode, length, window_first, window_last)};
        const auto e = evaluate(net, ham, T, true);
        return py::make_tuple(e.free_energy, e.circuit_gradient, e.spectrum_gradient);
      },
      py::arg("ansatz"), py::arg("spectrum"), py::arg("ham"), py::arg("temperature"), py::arg("mode") = "infinite",
      py::arg("length") = 60, py::arg("window_first") = 48, py::arg("window_last") = 54,
      "(f, df/d circuit parameters, df/d spectrum parameters)");

  m.def(
      "tfim_free_energy", [](double T) { return tfim_free_energy(T).free_energy; }, py::arg("temperature"));
  m.def(
      "ed_thermodynamics",
      [](const HamiltonianSpec& ham, int L, double T, bool periodic) {
        EdOptions o;
        o.boundary = periodic ? Boundary::periodic : Boundary::open;
        const auto r = ed_thermodynamics(ham, L, T, o);
        py::dict d;
        d["free_energy"] = r.free_energy;
        d["energy"] = r.energy;
        d["entropy"] = r.entropy;
        return d;
      },
      py::arg("ham"), py::arg("length"), py::arg("temperature"), py::arg("periodic") = true);
  m.def(
      "reference_free_energy",
      [](const HamiltonianSpec& ham, double T, int L) {
        const auto r = reference_free_energy(ham, T, L);
        return py::make_tuple(r.free_energy, r.method);
      },
      py::arg("ham"), py::arg("temperature"), py::arg("ed_length") = 14);

  m.def(
      "batch_sequential",
      [](const HamiltonianSpec& ham, double T, int q, int tau_max, SpectrumKind kind, Geometry geometry,
         Parameterization mode, const std::string& evaluation, int n_batch, std::uint64_t seed, int jobs,
         int tau_start) {
        BatchSettings b;
        b.q = q;
        b.tau_start = tau_start;
        b.tau_max = tau_max;
        b.kind = kind;
        b.geometry = geometry;
        b.mode = mode;
        b.network.mode = parse_evaluation_mode(evaluation);
        OptimizerConfig c;
        c.n_batch = n_batch;
        c.seed = seed;
        c.jobs = jobs;
        OptimizationRun run;
        {
          py::gil_scoped_release release;
          run = batch_sequential({ham, T}, b, c);
        }
        py::list levels;
        for (const auto& l : run.levels) levels.append(level_dict(l));
        return levels;
      },
      py::arg("ham"), py::arg("temperature"), py::arg("q"), py::arg("tau_max"),
      py::arg("kind") = SpectrumKind::psa, py::arg("geometry") = Geometry::ladder,
      py::arg("mode") = Parameterization::angles, py::arg("evaluation") = "infinite", py::arg("n_batch") = 30,
      py::arg("seed") = 0, py::arg("jobs") = 1, py::arg("tau_start") = 1);

  m.def(
      "sample_free_energy",
      [](const CircuitAnsatz& a, const SpectrumParams& s, const HamiltonianSpec& ham, double T, long shots,
         bool noisy, std::uint64_t seed, int burn_in, bool ancilla_init) {
        SamplerConfig c;
        c.shots = shots;
        c.seed = seed;
        c.burn_in = burn_in;
        c.ancilla_init = ancilla_init;
        const auto noise = noisy ? NoiseModel::depolarizing() : NoiseModel::noiseless();
        SampledFreeEnergy r;
        {
          py::gil_scoped_release release;
          r = sample_free_energy(a, s, ham, T, c, noise);
        }
        py::dict d;
        d["energy"] = r.energy;
        d["free_energy"] = r.free_energy;
        d["stderr"] = r.standard_error;
        d["exact_energy"] = r.exact_energy;
        py::list terms;
        for (const auto& t : r.terms) terms.append(estimate_dict(t));
        d["terms"] = terms;
        return d;
      },
      py::arg("ansatz"), py::arg("spectrum"), py::arg("ham"), py::arg("temperature"), py::arg("shots") = 1200,
      py::arg("noisy") = false, py::arg("seed") = 0, py::arg("burn_in") = 5, py::arg("ancilla_init") = false);
  m.def("measurement_groups", [](const HamiltonianSpec& ham) {
    py::list out;
    for (const auto& g : measurement_groups(ham)) out.append(py::make_tuple(std::string(1, g.basis), g.terms));
    return out;
  });

  py::class_<RunConfig>(m, "RunConfig")
      .def_property(
          "output", [](const RunConfig& c) { return c.output; },
          [](RunConfig& c, const std::filesystem::path& p) { c.output = p; })
      .def_readwrite("seed", &RunConfig::seed)
      .def("to_yaml", [](const RunConfig& c) { return to_yaml(c); });
  m.def("parse_config", &parse_config, py::arg("text"), py::arg("source") = "<config>");
  m.def("load_config", &load_config, py::arg("path"));
  auto command = [](auto fn) {
    return [fn](const RunConfig& c) {
      std::ostringstream log;
      CommandReport r;
      {
        py::gil_scoped_release release;
        r = fn(c, log);
      }
      return py::make_tuple(r.files, r.levels_optimized, log.str());
    };
  };
  m.def("cmd_optimize", command([](const RunConfig& c, std::ostream& o) { return cmd_optimize(c, o); }));
  m.def("cmd_oracle", command([](const RunConfig& c, std::ostream& o) { return cmd_oracle(c, o); }));
  m.def("cmd_scan", command([](const RunConfig& c, std::ostream& o) { return cmd_scan(c, o); }));
  m.def("cmd_sample", command([](const RunConfig& c, std::ostream& o) { return cmd_sample(c, std::nullopt, o); }));
}
