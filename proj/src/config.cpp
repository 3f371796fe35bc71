#include "stoqmps/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace stoqmps {

HamiltonianSpec ModelConfig::build() const {
  if (name == "sdim") return sdim(V);
  if (name == "heisenberg") return heisenberg();
  throw ConfigError("unknown model '" + name + "'");
}

std::vector<double> default_oracle_grid() {
  std::vector<double> t;
  for (int i = 1; i <= 15; ++i) t.push_back(0.2 * i);
  return t;
}

BatchSettings RunConfig::batch_settings(int q_, SpectrumKind kind) const {
  BatchSettings s;
  s.q = q_;
  s.tau_start = tau_start;
  s.tau_max = tau_max;
  s.geometry = geometry;
  s.mode = mode;
  s.kind = kind;
  s.network = network;
  return s;
}

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(model.name == "sdim" || model.name == "heisenberg", "model must be sdim or heisenberg");
  need(std::isfinite(model.V), "V must be finite");
  need(!temperatures.empty(), "temperatures must not be empty");
  for (double t : temperatures) need(std::isfinite(t) && t >= 0.0, "temperatures must be finite and >= 0");
  need(!q.empty(), "q must not be empty");
  for (int v : q) need(v >= 0 && v <= 6, "q must lie in [0, 6]");
  need(tau_start >= 1 && tau_max >= tau_start, "need 1 <= tau_start <= tau_max");
  need(!spectra.empty(), "spectrum must not be empty");
  need(oracle.ed_length >= 2 && oracle.ed_length <= 20, "oracle.ed_length must lie in [2, 20]");
  for (double t : oracle.temperatures) need(std::isfinite(t) && t >= 0.0, "oracle temperatures must be >= 0");
  need(correlators.max_distance >= 1, "correlators.max_distance must be >= 1");
  try {
    optimizer.validate();
    sampler.validate();
    noise.validate();
    const auto ham = model.build();
    if (network.mode == EvaluationMode::finite) {
      need(network.length >= 2, "evaluation.length must be >= 2");
      need(network.window_first >= 0 && network.window_first <= network.window_last &&
               network.window_last + ham.max_range() <= network.length,
           "evaluation window must satisfy 0 <= window_first <= window_last <= length - range");
    }
    need(sampler.window >= ham.max_range(), "sampler.window must cover the longest term");
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const {
    std::ostringstream os;
    os << source_;
    const auto m = n.Mark();
    if (m.line >= 0) os << ':' << m.line + 1 << ':' << m.column + 1;
    os << ": " << msg;
    throw ConfigError(os.str());
  }

  void require_map(const YAML::Node& n, const std::string& where) const {
    if (!n.IsMap()) fail(n, "'" + where + "' must be a mapping");
  }

  void check_keys(const YAML::Node& map, const std::set<std::string>& allowed, const std::string& where) const {
    for (auto it = map.begin(); it != map.end(); ++it) {
      const auto key = it->first.as<std::string>();
      if (!allowed.count(key))
        fail(it->first, "unknown key '" + key + "'" + (where.empty() ? "" : " in '" + where + "'"));
    }
  }

  template <class T>
  T get(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, "'" + what + "' must be a scalar");
    try {
      return n.as<T>();
    } catch (const YAML::BadConversion&) {
      fail(n, "'" + what + "' has the wrong type (value '" + n.Scalar() + "')");
    }
  }

  double real(const YAML::Node& n, const std::string& what) const {
    const double v = get<double>(n, what);
    if (!std::isfinite(v)) fail(n, "'" + what + "' must be finite");
    return v;
  }

  int integer(const YAML::Node& n, const std::string& what, long lo, long hi) const {
    const long v = get<long>(n, what);
    if (v < lo || v > hi)
      fail(n, "'" + what + "' must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return static_cast<int>(v);
  }

  double bounded(const YAML::Node& n, const std::string& what, double lo, double hi, bool open_lo = false) const {
    const double v = real(n, what);
    if (v < lo || v > hi || (open_lo && v == lo)) {
      std::ostringstream os;
      os << "'" << what << "' must lie in " << (open_lo ? "(" : "[") << lo << ", " << hi << "]";
      fail(n, os.str());
    }
    return v;
  }

  template <class T, class F>
  std::vector<T> list(const YAML::Node& n, const std::string& what, F item) const {
    std::vector<T> out;
    if (n.IsSequence()) {
      if (n.size() == 0) fail(n, "'" + what + "' must not be empty");
      for (const auto& e : n) out.push_back(item(e));
    } else {
      out.push_back(item(n));
    }
    return out;
  }

  template <class F>
  auto parsed(const YAML::Node& n, const std::string& what, F parse) const {
    const auto s = get<std::string>(n, what);
    try {
      return parse(s);
    } catch (const InvalidArgument& e) {
      fail(n, e.what());
    }
  }

 private:
  std::string source_;
};

RunConfig read(const YAML::Node& root, const Reader& r) {
  RunConfig c;
  if (!root || root.IsNull()) return c;
  r.require_map(root, "config");
  r.check_keys(root,
               {"model", "V", "temperatures", "seed", "output", "ansatz", "spectrum", "evaluation", "optimizer",
                "sampler", "noise", "correlators", "oracle"},
               "");
  if (auto n = root["model"]) {
    c.model.name = r.get<std::string>(n, "model");
    if (c.model.name != "sdim" && c.model.name != "heisenberg") r.fail(n, "model must be 'sdim' or 'heisenberg'");
  }
  if (auto n = root["V"]) {
    c.model.V = r.real(n, "V");
    if (c.model.name != "sdim" && c.model.V != 0.0) r.fail(n, "'V' applies to the sdim model only");
  }
  if (auto n = root["temperatures"])
    c.temperatures = r.list<double>(n, "temperatures", [&](const YAML::Node& e) {
      return r.bounded(e, "temperatures", 0.0, 1e12);
    });
  if (auto n = root["seed"]) c.seed = r.get<std::uint64_t>(n, "seed");
  if (auto n = root["output"]) c.output = r.get<std::string>(n, "output");

  if (auto a = root["ansatz"]) {
    r.require_map(a, "ansatz");
    r.check_keys(a, {"q", "tau_start", "tau_max", "geometry", "parameterization"}, "ansatz");
    if (auto n = a["q"]) c.q = r.list<int>(n, "ansatz.q", [&](const YAML::Node& e) { return r.integer(e, "ansatz.q", 0, 6); });
    if (auto n = a["tau_start"]) c.tau_start = r.integer(n, "ansatz.tau_start", 1, 64);
    if (auto n = a["tau_max"]) c.tau_max = r.integer(n, "ansatz.tau_max", 1, 64);
    if (c.tau_max < c.tau_start) r.fail(a, "ansatz.tau_max must be >= ansatz.tau_start");
    if (auto n = a["geometry"]) c.geometry = r.parsed(n, "ansatz.geometry", parse_geometry);
    if (auto n = a["parameterization"]) c.mode = r.parsed(n, "ansatz.parameterization", parse_parameterization);
  }
  if (auto n = root["spectrum"]) {
    c.spectra = r.list<SpectrumKind>(n, "spectrum", [&](const YAML::Node& e) {
      return r.parsed(e, "spectrum", parse_spectrum_kind);
    });
  }

  if (auto e = root["evaluation"]) {
    r.require_map(e, "evaluation");
    r.check_keys(e,
                 {"mode", "length", "window_first", "window_last", "fixed_point_tol", "max_iterations",
                  "check_degeneracy"},
                 "evaluation");
    auto& o = c.network;
    if (auto n = e["mode"]) o.mode = r.parsed(n, "evaluation.mode", parse_evaluation_mode);
    if (auto n = e["length"]) o.length = r.integer(n, "evaluation.length", 2, 100000);
    if (auto n = e["window_first"]) o.window_first = r.integer(n, "evaluation.window_first", 0, 100000);
    if (auto n = e["window_last"]) o.window_last = r.integer(n, "evaluation.window_last", 0, 100000);
    if (auto n = e["fixed_point_tol"]) o.fixed_point_tol = r.bounded(n, "evaluation.fixed_point_tol", 0.0, 1.0, true);
    if (auto n = e["max_iterations"]) o.max_iterations = r.integer(n, "evaluation.max_iterations", 1, 1000000000);
    if (auto n = e["check_degeneracy"]) o.check_degeneracy = r.get<bool>(n, "evaluation.check_degeneracy");
    if (o.mode == EvaluationMode::finite && (o.window_first > o.window_last || o.window_last >= o.length))
      r.fail(e, "evaluation window must satisfy window_first <= window_last < length");
  }

  if (auto s = root["optimizer"]) {
    r.require_map(s, "optimizer");
    r.check_keys(s,
                 {"n_batch", "gtol", "ftol", "max_evaluations", "memory", "gradient", "fd_step", "jobs",
                  "randomness", "randomness_scale", "carry_forward", "status_tolerance"},
                 "optimizer");
    auto& o = c.optimizer;
    if (auto n = s["n_batch"]) o.n_batch = r.integer(n, "optimizer.n_batch", 1, 100000);
    if (auto n = s["gtol"]) o.gtol = r.bounded(n, "optimizer.gtol", 0.0, 1e6);
    if (auto n = s["ftol"]) o.ftol = r.bounded(n, "optimizer.ftol", 0.0, 1.0);
    if (auto n = s["max_evaluations"]) o.max_evaluations = r.integer(n, "optimizer.max_evaluations", 1, 1000000000);
    if (auto n = s["memory"]) o.memory = r.integer(n, "optimizer.memory", 1, 1000);
    if (auto n = s["gradient"]) o.gradient = r.parsed(n, "optimizer.gradient", parse_gradient_method);
    if (auto n = s["fd_step"]) o.fd_step = r.bounded(n, "optimizer.fd_step", 0.0, 1.0, true);
    if (auto n = s["jobs"]) o.jobs = r.integer(n, "optimizer.jobs", 1, 1024);
    if (auto n = s["randomness"]) {
      if (!n.IsNull()) o.randomness = r.bounded(n, "optimizer.randomness", 0.0, 10.0);
    }
    if (auto n = s["randomness_scale"]) o.randomness_scale = r.bounded(n, "optimizer.randomness_scale", 0.0, 1e6);
    if (auto n = s["carry_forward"]) o.carry_forward = r.get<bool>(n, "optimizer.carry_forward");
    if (auto n = s["status_tolerance"]) o.status_tolerance = r.bounded(n, "optimizer.status_tolerance", 0.0, 1.0);
  }

  if (auto s = root["sampler"]) {
    r.require_map(s, "sampler");
    r.check_keys(s, {"shots", "burn_in", "window", "ancilla_init", "jobs"}, "sampler");
    auto& o = c.sampler;
    if (auto n = s["shots"]) o.shots = r.integer(n, "sampler.shots", 1, 2000000000);
    if (auto n = s["burn_in"]) o.burn_in = r.integer(n, "sampler.burn_in", 0, 100000);
    if (auto n = s["window"]) o.window = r.integer(n, "sampler.window", 1, 100000);
    if (auto n = s["ancilla_init"]) o.ancilla_init = r.get<bool>(n, "sampler.ancilla_init");
    if (auto n = s["jobs"]) o.jobs = r.integer(n, "sampler.jobs", 1, 1024);
  }

  if (auto s = root["noise"]) {
    r.require_map(s, "noise");
    r.check_keys(s, {"eps_1q", "eps_2q"}, "noise");
    if (auto n = s["eps_1q"]) c.noise.eps_1q = r.bounded(n, "noise.eps_1q", 0.0, 1.0);
    if (auto n = s["eps_2q"]) c.noise.eps_2q = r.bounded(n, "noise.eps_2q", 0.0, 1.0);
  }

  if (auto s = root["correlators"]) {
    r.require_map(s, "correlators");
    r.check_keys(s, {"max_distance", "bases"}, "correlators");
    if (auto n = s["max_distance"]) c.correlators.max_distance = r.integer(n, "correlators.max_distance", 1, 1000);
    if (auto n = s["bases"])
      c.correlators.bases = r.list<char>(n, "correlators.bases", [&](const YAML::Node& e) {
        const auto b = r.get<std::string>(e, "correlators.bases");
        if (b != "x" && b != "y" && b != "z") r.fail(e, "correlator bases are x, y or z");
        return b[0];
      });
  }

  if (auto s = root["oracle"]) {
    r.require_map(s, "oracle");
    r.check_keys(s, {"ed_length", "boundary", "cache", "temperatures"}, "oracle");
    if (auto n = s["ed_length"]) c.oracle.ed_length = r.integer(n, "oracle.ed_length", 2, 20);
    if (auto n = s["boundary"]) {
      const auto b = r.get<std::string>(n, "oracle.boundary");
      if (b == "periodic") c.oracle.boundary = Boundary::periodic;
      else if (b == "open") c.oracle.boundary = Boundary::open;
      else r.fail(n, "oracle.boundary must be 'periodic' or 'open'");
    }
    if (auto n = s["cache"]) c.oracle.cache = r.get<bool>(n, "oracle.cache");
    if (auto n = s["temperatures"])
      c.oracle.temperatures = r.list<double>(n, "oracle.temperatures", [&](const YAML::Node& e) {
        return r.bounded(e, "oracle.temperatures", 0.0, 1e12);
      });
  }

  try {
    c.validate();
  } catch (const ConfigError& e) {
    r.fail(root, e.what());
  }
  return c;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    std::ostringstream os;
    os << source << ':' << e.mark.line + 1 << ':' << e.mark.column + 1 << ": " << e.msg;
    throw ConfigError(os.str());
  }
  return read(root, Reader(source));
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string to_yaml(const RunConfig& c) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  auto flow = [&](const auto& v) {
    e << YAML::Flow << YAML::BeginSeq;
    for (const auto& x : v) e << x;
    e << YAML::EndSeq;
  };
  e << YAML::BeginMap;
  e << YAML::Key << "model" << YAML::Value << c.model.name;
  e << YAML::Key << "V" << YAML::Value << c.model.V;
  e << YAML::Key << "temperatures" << YAML::Value;
  flow(c.temperatures);
  e << YAML::Key << "seed" << YAML::Value << c.seed;
  e << YAML::Key << "output" << YAML::Value << c.output.string();

  e << YAML::Key << "ansatz" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "q" << YAML::Value;
  flow(c.q);
  e << YAML::Key << "tau_start" << YAML::Value << c.tau_start;
  e << YAML::Key << "tau_max" << YAML::Value << c.tau_max;
  e << YAML::Key << "geometry" << YAML::Value << to_string(c.geometry);
  e << YAML::Key << "parameterization" << YAML::Value << to_string(c.mode);
  e << YAML::EndMap;

  std::vector<std::string> kinds;
  for (auto k : c.spectra) kinds.push_back(to_string(k));
  e << YAML::Key << "spectrum" << YAML::Value;
  flow(kinds);

  const auto& n = c.network;
  e << YAML::Key << "evaluation" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "mode" << YAML::Value << to_string(n.mode);
  e << YAML::Key << "length" << YAML::Value << n.length;
  e << YAML::Key << "window_first" << YAML::Value << n.window_first;
  e << YAML::Key << "window_last" << YAML::Value << n.window_last;
  e << YAML::Key << "fixed_point_tol" << YAML::Value << n.fixed_point_tol;
  e << YAML::Key << "max_iterations" << YAML::Value << n.max_iterations;
  e << YAML::Key << "check_degeneracy" << YAML::Value << n.check_degeneracy;
  e << YAML::EndMap;

  const auto& o = c.optimizer;
  e << YAML::Key << "optimizer" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "n_batch" << YAML::Value << o.n_batch;
  e << YAML::Key << "gtol" << YAML::Value << o.gtol;
  e << YAML::Key << "ftol" << YAML::Value << o.ftol;
  e << YAML::Key << "max_evaluations" << YAML::Value << o.max_evaluations;
  e << YAML::Key << "memory" << YAML::Value << o.memory;
  e << YAML::Key << "gradient" << YAML::Value << to_string(o.gradient);
  e << YAML::Key << "fd_step" << YAML::Value << o.fd_step;
  e << YAML::Key << "jobs" << YAML::Value << o.jobs;
  e << YAML::Key << "randomness" << YAML::Value;
  if (o.randomness) e << *o.randomness;
  else e << YAML::Null;
  e << YAML::Key << "randomness_scale" << YAML::Value << o.randomness_scale;
  e << YAML::Key << "carry_forward" << YAML::Value << o.carry_forward;
  e << YAML::Key << "status_tolerance" << YAML::Value << o.status_tolerance;
  e << YAML::EndMap;

  const auto& s = c.sampler;
  e << YAML::Key << "sampler" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "shots" << YAML::Value << s.shots;
  e << YAML::Key << "burn_in" << YAML::Value << s.burn_in;
  e << YAML::Key << "window" << YAML::Value << s.window;
  e << YAML::Key << "ancilla_init" << YAML::Value << s.ancilla_init;
  e << YAML::Key << "jobs" << YAML::Value << s.jobs;
  e << YAML::EndMap;

  e << YAML::Key << "noise" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "eps_1q" << YAML::Value << c.noise.eps_1q;
  e << YAML::Key << "eps_2q" << YAML::Value << c.noise.eps_2q;
  e << YAML::EndMap;

  std::vector<std::string> bases;
  for (char b : c.correlators.bases) bases.emplace_back(1, b);
  e << YAML::Key << "correlators" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "max_distance" << YAML::Value << c.correlators.max_distance;
  e << YAML::Key << "bases" << YAML::Value;
  flow(bases);
  e << YAML::EndMap;

  e << YAML::Key << "oracle" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "ed_length" << YAML::Value << c.oracle.ed_length;
  e << YAML::Key << "boundary" << YAML::Value << to_string(c.oracle.boundary);
  e << YAML::Key << "cache" << YAML::Value << c.oracle.cache;
  e << YAML::Key << "temperatures" << YAML::Value;
  flow(c.oracle.temperatures);
  e << YAML::EndMap;

  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

}  // namespace stoqmps
