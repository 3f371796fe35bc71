#include "stoqmps/cli.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace stoqmps {

namespace fs = std::filesystem;

std::string run_key(const HamiltonianSpec& ham, double temperature, int q, SpectrumKind kind) {
  return model_key(ham) + "_T" + format_double(temperature) + "_q" + std::to_string(q) + "_" + to_string(kind);
}

fs::path level_artifact(const fs::path& run_dir, int tau) { return run_dir / ("tau" + std::to_string(tau) + ".json"); }
fs::path level_marker(const fs::path& run_dir, int tau) { return run_dir / ("tau" + std::to_string(tau) + ".done"); }

namespace {

EdOptions oracle_options(const RunConfig& c) {
  EdOptions o;
  o.boundary = c.oracle.boundary;
  if (c.oracle.cache) o.cache_dir = c.output / "oracle_cache";
  return o;
}

// Everything that determines the optimization trajectory of one run.
Json fingerprint(const RunConfig& c, double T, int q, SpectrumKind kind) {
  const auto& n = c.network;
  const auto& o = c.optimizer;
  return {{"model", c.model.name},
          {"V", c.model.V},
          {"temperature", T},
          {"q", q},
          {"spectrum", to_string(kind)},
          {"tau_start", c.tau_start},
          {"geometry", to_string(c.geometry)},
          {"parameterization", to_string(c.mode)},
          {"evaluation",
           {{"mode", to_string(n.mode)},
            {"length", n.length},
            {"window_first", n.window_first},
            {"window_last", n.window_last},
            {"fixed_point_tol", n.fixed_point_tol},
            {"max_iterations", n.max_iterations},
            {"check_degeneracy", n.check_degeneracy}}},
          {"optimizer",
           {{"n_batch", o.n_batch},
            {"gtol", o.gtol},
            {"ftol", o.ftol},
            {"max_evaluations", o.max_evaluations},
            {"memory", o.memory},
            {"gradient", to_string(o.gradient)},
            {"fd_step", o.fd_step},
            {"randomness", o.randomness ? Json(*o.randomness) : Json(nullptr)},
            {"randomness_scale", o.randomness_scale},
            {"carry_forward", o.carry_forward},
            {"status_tolerance", o.status_tolerance}}},
          {"seed", c.seed}};
}

double relative_error(double f, double exact) { return std::abs(f - exact) / std::abs(exact); }

std::string csv_join(std::initializer_list<std::string> cells) {
  std::string s;
  for (const auto& c : cells) {
    if (!s.empty()) s += ',';
    s += c;
  }
  return s;
}

OptimizerConfig optimizer_of(const RunConfig& c) {
  OptimizerConfig o = c.optimizer;
  o.seed = c.seed;
  return o;
}

SamplerConfig sampler_of(const RunConfig& c) {
  SamplerConfig s = c.sampler;
  s.seed = c.seed;
  return s;
}

struct LevelRow {
  double T;
  int q;
  SpectrumKind kind;
  int tau;
  double f;
  double exact;
  RunStatus status;
  double seconds;
};

}  // namespace

CommandReport cmd_optimize(const RunConfig& config, std::ostream& log) {
  config.validate();
  CommandReport report;
  const auto ham = config.model.build();
  const auto ed = oracle_options(config);
  const auto opt = optimizer_of(config);
  const std::string yaml = to_yaml(config);

  std::vector<LevelRow> rows;
  Json summary = Json::array();
  for (double T : config.temperatures) {
    const auto exact = reference_free_energy(ham, T, config.oracle.ed_length, ed);
    for (SpectrumKind kind : config.spectra)
      for (int q : config.q) {
        const auto key = run_key(ham, T, q, kind);
        const fs::path dir = config.output / "runs" / key;
        const Json fp = fingerprint(config, T, q, kind);

        std::vector<LevelResult> done;
        for (int tau = config.tau_start; fs::exists(level_marker(dir, tau)); ++tau) {
          const Json j = read_json(level_artifact(dir, tau));
          if (j.at("fingerprint") != fp)
            throw ConfigError(level_artifact(dir, tau).string() +
                              ": artifact was produced by a different configuration; use a fresh --out directory");
          done.push_back(level_from_json(j.at("level")));
          if (tau == config.tau_max) break;
        }
        const int resumed = static_cast<int>(done.size());
        report.levels_resumed += resumed;
        if (resumed > 0) log << key << ": resuming after tau=" << done.back().tau << '\n';

        ThermalProblem problem{ham, T};
        auto on_level = [&](const LevelResult& level) {
          const double rel = relative_error(level.best_f, exact.free_energy);
          Json j = {{"config", yaml},
                    {"fingerprint", fp},
                    {"model", model_key(ham)},
                    {"temperature", T},
                    {"q", q},
                    {"tau", level.tau},
                    {"spectrum", to_string(kind)},
                    {"f", level.best_f},
                    {"exact_f", exact.free_energy},
                    {"exact_method", exact.method},
                    {"relative_error", rel},
                    {"status", to_string(level.status)},
                    {"seconds", level.seconds},
                    {"level", to_json(level)}};
          write_atomic(level_artifact(dir, level.tau), j.dump(1) + "\n");
          write_atomic(level_marker(dir, level.tau), "");
          ++report.levels_optimized;
          log << key << " tau=" << level.tau << " f=" << format_double(level.best_f) << " rel=" << format_double(rel)
              << " status=" << to_string(level.status) << " (" << level.seconds << " s)\n";
        };
        const auto run = resumed > 0 && done.back().tau >= config.tau_max
                             ? OptimizationRun{problem, config.batch_settings(q, kind), done}
                             : batch_sequential(problem, config.batch_settings(q, kind), opt, done, on_level);
        for (const auto& level : run.levels) {
          if (level.tau > config.tau_max) break;
          rows.push_back({T, q, kind, level.tau, level.best_f, exact.free_energy, level.status, level.seconds});
        }
        const auto& last = run.levels.back();
        summary.push_back({{"run", key},
                           {"temperature", T},
                           {"q", q},
                           {"spectrum", to_string(kind)},
                           {"tau", last.tau},
                           {"f", last.best_f},
                           {"exact_f", exact.free_energy},
                           {"exact_method", exact.method},
                           {"relative_error", relative_error(last.best_f, exact.free_energy)},
                           {"levels_resumed", resumed}});
      }
  }

  auto row_of = [](const LevelRow& r) {
    return csv_join({format_double(r.T), std::to_string(r.q), std::to_string(r.tau), to_string(r.kind),
                     format_double(r.f), format_double(r.exact), format_double(relative_error(r.f, r.exact)),
                     to_string(r.status), format_double(r.seconds)});
  };
  const std::string header = "T,q,tau,spectrum,f,exact_f,rel_error,status,seconds";
  for (int q : config.q)
    for (double T : config.temperatures) {
      std::vector<std::string> out;
      for (const auto& r : rows)
        if (r.q == q && r.T == T) out.push_back(row_of(r));
      const auto path = config.output / ("errors_q" + std::to_string(q) + "_T" + format_double(T) + ".csv");
      write_csv(path, config, header, out);
      report.files.push_back(path);
    }

  const bool both = config.spectra.size() > 1;
  if (both) {
    std::map<std::tuple<double, int, int>, std::map<SpectrumKind, const LevelRow*>> table;
    for (const auto& r : rows) table[{r.T, r.q, r.tau}][r.kind] = &r;
    std::vector<std::string> out;
    for (const auto& [k, m] : table) {
      if (!m.count(SpectrumKind::psa) || !m.count(SpectrumKind::csa)) continue;
      const auto* p = m.at(SpectrumKind::psa);
      const auto* c = m.at(SpectrumKind::csa);
      out.push_back(csv_join({format_double(p->T), std::to_string(p->q), std::to_string(p->tau), format_double(p->f),
                              format_double(relative_error(p->f, p->exact)), format_double(c->f),
                              format_double(relative_error(c->f, c->exact)), format_double(p->exact)}));
    }
    const auto path = config.output / "comparison.csv";
    write_csv(path, config, "T,q,tau,f_psa,rel_error_psa,f_csa,rel_error_csa,exact_f", out);
    report.files.push_back(path);
  }

  const auto path = config.output / "summary.json";
  write_atomic(path, Json{{"config", yaml}, {"seed", config.seed}, {"runs", summary},
                          {"levels_optimized", report.levels_optimized}, {"levels_resumed", report.levels_resumed}}
                             .dump(1) + "\n");
  report.files.push_back(path);
  return report;
}

CommandReport cmd_scan(const RunConfig& config, std::ostream& log) {
  config.validate();
  CommandReport report;
  const auto ham = config.model.build();
  for (SpectrumKind kind : config.spectra)
    for (int q : config.q) {
      const auto points = temperature_scan(ham, config.temperatures, config.batch_settings(q, kind),
                                           optimizer_of(config), oracle_options(config), config.oracle.ed_length);
      std::vector<std::string> rows;
      for (const auto& p : points) {
        rows.push_back(to_csv_row(p.result));
        log << model_key(ham) << " q=" << q << " " << to_string(kind) << " T=" << format_double(p.result.temperature)
            << " f=" << format_double(p.result.free_energy) << '\n';
      }
      const auto path =
          config.output / ("scan_" + model_key(ham) + "_q" + std::to_string(q) + "_" + to_string(kind) + ".csv");
      write_csv(path, config, free_energy_csv_header(), rows);
      report.files.push_back(path);
    }
  return report;
}

CommandReport cmd_oracle(const RunConfig& config, std::ostream& log) {
  config.validate();
  CommandReport report;
  const auto ham = config.model.build();
  const auto ed = oracle_options(config);
  const bool tfim = config.model.name == "sdim" && config.model.V == 0.0;
  const int L = config.oracle.ed_length;
  std::vector<std::string> rows;
  for (double T : config.oracle.temperatures) {
    const auto r = ed_thermodynamics(ham, L, T, ed);
    std::string row = csv_join({format_double(T), format_double(r.free_energy), format_double(r.energy),
                                format_double(r.entropy)});
    if (tfim) {
      const auto ff = tfim_free_energy(T);
      row += "," + csv_join({format_double(ff.free_energy), format_double(ff.energy), format_double(ff.entropy)});
    }
    rows.push_back(row);
    log << "T=" << format_double(T) << " f=" << format_double(r.free_energy) << '\n';
  }
  std::string header = "T,f,energy,entropy";
  if (tfim) header += ",f_free_fermion,energy_free_fermion,entropy_free_fermion";
  const auto path = config.output / ("oracle_" + model_key(ham) + "_L" + std::to_string(L) + "_" +
                                     to_string(config.oracle.boundary) + ".csv");
  write_csv(path, config, header, rows);
  report.files.push_back(path);
  return report;
}

namespace {

void sample_one(const RunConfig& config, const fs::path& artifact, const std::string& key, CommandReport& report,
                std::ostream& log) {
  if (!fs::exists(artifact)) throw MissingArtifact("run artifact not found: " + artifact.string());
  const Json j = read_json(artifact);
  const Json& fp = j.at("fingerprint");
  ModelConfig model{fp.at("model").get<std::string>(), fp.at("V").get<double>()};
  const auto ham = model.build();
  const double T = j.at("temperature").get<double>();
  const Candidate c = candidate_from_json(j.at("level").at("best"));
  const auto cfg = sampler_of(config);
  const auto noisy_model = NoiseModel::depolarizing(config.noise.eps_1q, config.noise.eps_2q);

  const auto clean = sample_free_energy(c.ansatz, c.spectrum, ham, T, cfg, NoiseModel::noiseless());
  const auto noisy = sample_free_energy(c.ansatz, c.spectrum, ham, T, cfg, noisy_model);
  const auto exact = protocol_exact_terms(c.ansatz, c.spectrum, ham, cfg);
  const double ts = T * entropy_density(c.spectrum);

  std::vector<std::string> rows, shots;
  for (std::size_t k = 0; k < ham.terms.size(); ++k) {
    const auto& a = clean.terms[k];
    const auto& b = noisy.terms[k];
    rows.push_back(csv_join({a.observable, format_double(exact[k]), format_double(a.estimate),
                             format_double(a.standard_error), format_double(b.estimate), format_double(b.standard_error),
                             std::to_string(a.shots)}));
    shots.push_back(to_csv_row(a));
    shots.push_back(to_csv_row(b));
  }
  rows.push_back(csv_join({"energy", format_double(clean.exact_energy), format_double(clean.energy),
                           format_double(clean.standard_error), format_double(noisy.energy),
                           format_double(noisy.standard_error), std::to_string(cfg.shots)}));
  rows.push_back(csv_join({"free_energy", format_double(clean.exact_energy - ts), format_double(clean.free_energy),
                           format_double(clean.standard_error), format_double(noisy.free_energy),
                           format_double(noisy.standard_error), std::to_string(cfg.shots)}));
  const std::string header = "observable,exact,noiseless,noiseless_stderr,noisy,noisy_stderr,shots";
  auto path = config.output / ("sample_" + key + ".csv");
  write_csv(path, config, header, rows);
  report.files.push_back(path);
  path = config.output / ("shots_" + key + ".csv");
  write_csv(path, config, shot_csv_header(), shots);
  report.files.push_back(path);
  log << key << ": f noiseless " << format_double(clean.free_energy) << " +- " << format_double(clean.standard_error)
      << ", noisy " << format_double(noisy.free_energy) << " +- " << format_double(noisy.standard_error) << ", exact "
      << format_double(clean.exact_energy - ts) << '\n';

  const int dmax = config.correlators.max_distance;
  StoQmpsNetwork net{c.ansatz, c.spectrum, {}};
  net.options.mode = EvaluationMode::finite;
  net.options.length = cfg.burn_in + dmax + 1;
  net.options.window_first = net.options.window_last = cfg.burn_in;
  std::vector<std::string> corr;
  for (char b : config.correlators.bases) {
    const std::string op(1, static_cast<char>(b - 'a' + 'A'));
    const auto ex = correlator(net, {op, 1.0}, {op, 1.0}, dmax);
    const auto sc = sample_correlator(c.ansatz, c.spectrum, b, dmax, cfg, NoiseModel::noiseless());
    const auto sn = sample_correlator(c.ansatz, c.spectrum, b, dmax, cfg, noisy_model);
    for (int d = 1; d <= dmax; ++d) {
      auto conn = [&](const std::vector<ShotEstimate>& s) {
        return s[2 * d - 1].estimate - s[0].estimate * s[2 * d].estimate;
      };
      const auto& p = ex.points[d - 1];
      corr.push_back(csv_join({std::string(1, b), std::to_string(d), format_double(p.raw), format_double(p.connected),
                               format_double(sc[2 * d - 1].estimate), format_double(sc[2 * d - 1].standard_error),
                               format_double(conn(sc)), format_double(sn[2 * d - 1].estimate),
                               format_double(sn[2 * d - 1].standard_error), format_double(conn(sn)),
                               std::to_string(cfg.shots)}));
    }
  }
  path = config.output / ("correlators_" + key + ".csv");
  write_csv(path, config,
            "basis,distance,exact_raw,exact_connected,noiseless_raw,noiseless_stderr,noiseless_connected,noisy_raw,"
            "noisy_stderr,noisy_connected,shots",
            corr);
  report.files.push_back(path);
}

}  // namespace

CommandReport cmd_sample(const RunConfig& config, const std::optional<fs::path>& artifact, std::ostream& log) {
  config.validate();
  CommandReport report;
  if (artifact) {
    sample_one(config, *artifact, artifact->parent_path().filename().string() + "_" + artifact->stem().string(),
               report, log);
    return report;
  }
  const auto ham = config.model.build();
  std::vector<std::pair<fs::path, std::string>> todo;
  for (double T : config.temperatures)
    for (SpectrumKind kind : config.spectra)
      for (int q : config.q) {
        const auto key = run_key(ham, T, q, kind);
        const auto path = level_artifact(config.output / "runs" / key, config.tau_max);
        if (!fs::exists(path) || !fs::exists(level_marker(path.parent_path(), config.tau_max)))
          throw MissingArtifact("run artifact not found: " + path.string() + " (run the optimize subcommand first)");
        todo.emplace_back(path, key + "_tau" + std::to_string(config.tau_max));
      }
  for (const auto& [path, key] : todo) sample_one(config, path, key, report, log);
  return report;
}

}  // namespace stoqmps
