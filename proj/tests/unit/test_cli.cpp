#include <doctest.h>

#include <fstream>
#include <sstream>
#include <unistd.h>

#include "stoqmps/cli.hpp"

using namespace stoqmps;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("stoqmps_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Data rows of a '#'-commented CSV as string cells, header first.
std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

std::string error_of(const std::string& yaml) {
  try {
    parse_config(yaml, "t.yaml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

RunConfig tiny(const fs::path& out) {
  auto c = parse_config(R"(
model: sdim
V: 0
temperatures: [1.0]
seed: 11
ansatz: {q: 1, tau_max: 2}
spectrum: [psa, csa]
optimizer: {n_batch: 2, max_evaluations: 150}
sampler: {shots: 400}
oracle: {ed_length: 8}
)");
  c.output = out;
  return c;
}

}  // namespace

TEST_CASE("config defaults") {
  const auto c = parse_config("");
  CHECK(c.optimizer.n_batch == 30);
  CHECK(c.noise.eps_1q == 5e-4);
  CHECK(c.noise.eps_2q == 8e-3);
  CHECK(c.sampler.burn_in == 5);
  CHECK(c.sampler.window == 6);
  CHECK(c.sampler.shots == 1200);
  CHECK(c.network.length == 60);
  CHECK(c.network.window_first == 48);
  CHECK(c.network.window_last == 54);
  CHECK(c.oracle.temperatures.size() == 15);
  CHECK(c.oracle.temperatures.front() == doctest::Approx(0.2));
  CHECK(c.oracle.temperatures.back() == doctest::Approx(3.0));
}

TEST_CASE("config round trip through YAML") {
  auto c = parse_config(R"(
model: sdim
V: 1.0
temperatures: [0.5, 1, 1.5]
seed: 42
ansatz: {q: [1, 2], tau_start: 2, tau_max: 4, geometry: brick, parameterization: raw-matrix}
spectrum: csa
evaluation: {mode: finite, length: 30, window_first: 20, window_last: 24}
optimizer: {n_batch: 8, gradient: finite-difference, randomness: 0.3, carry_forward: false}
sampler: {shots: 600, ancilla_init: true}
noise: {eps_1q: 0.001, eps_2q: 0.01}
correlators: {max_distance: 6, bases: [z]}
oracle: {ed_length: 12, boundary: open, cache: false}
)");
  CHECK(c.q == std::vector<int>{1, 2});
  CHECK(c.geometry == Geometry::brick);
  CHECK(c.mode == Parameterization::raw_matrix);
  CHECK(c.spectra == std::vector<SpectrumKind>{SpectrumKind::csa});
  CHECK(c.optimizer.randomness == 0.3);
  CHECK(c.correlators.bases == std::vector<char>{'z'});
  CHECK(c.oracle.boundary == Boundary::open);
  const auto y = to_yaml(c);
  CHECK(to_yaml(parse_config(y)) == y);
  CHECK(to_yaml(parse_config(to_yaml(RunConfig{}))) == to_yaml(RunConfig{}));
}

TEST_CASE("config errors point at the offending line") {
  CHECK(error_of("model: sdim\noptimizer:\n  n_batch: 2\n  nbatch: 3\n") ==
        "t.yaml:4:3: unknown key 'nbatch' in 'optimizer'");
  CHECK(error_of("modle: sdim\n") == "t.yaml:1:1: unknown key 'modle'");
  CHECK(error_of("ansatz:\n  q: [1, x]\n") == "t.yaml:2:10: 'ansatz.q' has the wrong type (value 'x')");
  CHECK(error_of("temperatures: [1, -2]\n").rfind("t.yaml:1:19:", 0) == 0);
  CHECK(error_of("spectrum: mps\n").rfind("t.yaml:1:11:", 0) == 0);
  CHECK(error_of("model: heisenberg\nV: 1\n").rfind("t.yaml:2:4:", 0) == 0);
  CHECK(error_of("ansatz: {tau_start: 3, tau_max: 2}\n").rfind("t.yaml:1:9:", 0) == 0);
  CHECK(error_of("noise: {eps_2q: 2}\n").rfind("t.yaml:1:17:", 0) == 0);
  CHECK(error_of("model: [sdim\n").rfind("t.yaml:", 0) == 0);
  CHECK(error_of("sampler: 5\n").find("must be a mapping") != std::string::npos);
  CHECK_THROWS_AS(load_config("/nonexistent/x.yaml"), ConfigError);
}

TEST_CASE("candidate and level JSON round trip is exact") {
  Rng rng(3);
  for (auto mode : {Parameterization::angles, Parameterization::raw_matrix}) {
    const Candidate c{random_ansatz(2, 2, Geometry::ladder, mode, rng), SpectrumParams::correlated(0.37, -1.1)};
    const Json j = to_json(c);
    CHECK(j["ansatz"]["gates"][0].size() == (mode == Parameterization::angles ? 15u : 32u));
    const auto back = candidate_from_json(Json::parse(j.dump()));
    CHECK(flatten(back.ansatz) == flatten(c.ansatz));
    CHECK(back.spectrum.flatten() == c.spectrum.flatten());
  }
  LevelResult l;
  l.tau = 3;
  l.randomness = 0.4;
  l.best = {random_ansatz(1, 3, Geometry::ladder, Parameterization::angles, rng), SpectrumParams::product(0.3)};
  l.best_f = -1.2345678901234567;
  l.best_index = 1;
  l.status = RunStatus::trapped;
  l.instances.resize(2);
  l.instances[0].failed = true;
  l.instances[0].diagnostic = "boom";
  l.instances[1].index = 1;
  l.instances[1].f = l.best_f;
  const auto back = level_from_json(Json::parse(to_json(l).dump()));
  CHECK(back.best_f == l.best_f);
  CHECK(back.status == RunStatus::trapped);
  CHECK(back.instances[0].diagnostic == "boom");
  CHECK(flatten(back.best.ansatz) == flatten(l.best.ansatz));
  CHECK_THROWS(ansatz_from_json(Json::parse(R"({"q":1,"tau":1,"geometry":"ladder","parameterization":"angles","gates":[[1,2]]})")));
}

TEST_CASE("optimize persists every depth and resumes without work") {
  TempDir tmp("opt");
  auto cfg = tiny(tmp.path / "out");
  std::ostringstream log;
  const auto first = cmd_optimize(cfg, log);
  CHECK(first.levels_optimized == 4);
  CHECK(first.levels_resumed == 0);
  const fs::path run = cfg.output / "runs" / "sdim_V=0_T1_q1_psa";
  REQUIRE(fs::exists(level_artifact(run, 2)));
  REQUIRE(fs::exists(level_marker(run, 2)));
  const auto art = slurp(level_artifact(run, 2));
  const Json j = Json::parse(art);
  CHECK(j["config"].get<std::string>().find("seed: 11") != std::string::npos);
  CHECK(j["relative_error"].get<double>() ==
        doctest::Approx(std::abs(j["f"].get<double>() - j["exact_f"].get<double>()) / std::abs(j["exact_f"].get<double>())));

  const auto again = cmd_optimize(cfg, log);
  CHECK(again.levels_optimized == 0);
  CHECK(again.levels_resumed == 4);
  CHECK(slurp(level_artifact(run, 2)) == art);

  // Deeper target: only the new depth is optimized, matching a fresh run bit for bit.
  cfg.tau_max = 3;
  const auto deeper = cmd_optimize(cfg, log);
  CHECK(deeper.levels_optimized == 2);
  auto fresh = cfg;
  fresh.output = tmp.path / "fresh";
  cmd_optimize(fresh, log);
  const auto a = Json::parse(slurp(level_artifact(run, 3)));
  const auto b = Json::parse(slurp(level_artifact(fresh.output / "runs" / "sdim_V=0_T1_q1_psa", 3)));
  CHECK(a["level"]["best"] == b["level"]["best"]);
  CHECK(a["f"] == b["f"]);

  const auto rows = read_csv(cfg.output / "errors_q1_T1.csv");
  REQUIRE(rows.size() == 7);
  CHECK(rows[0][0] == "T");
  const auto cmp = read_csv(cfg.output / "comparison.csv");
  CHECK(cmp.size() == 4);
  for (const auto& f : deeper.files) CHECK(slurp(f).find("seed: 11") != std::string::npos);

  cfg.seed = 12;
  CHECK_THROWS_AS(cmd_optimize(cfg, log), ConfigError);
}

TEST_CASE("oracle scan is monotone and matches free fermions at L=14") {
  TempDir tmp("oracle");
  RunConfig cfg;
  cfg.output = tmp.path;
  cfg.oracle.temperatures = default_oracle_grid();
  std::ostringstream log;
  const auto rep = cmd_oracle(cfg, log);
  const auto rows = read_csv(rep.files.at(0));
  REQUIRE(rows.size() == 16);
  CHECK(rows[0].size() == 7);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double f = std::stod(rows[i][1]);
    const double ff = std::stod(rows[i][4]);
    CHECK(std::abs(f - ff) < 0.01 * std::abs(ff));
    if (i > 1) CHECK(f < std::stod(rows[i - 1][1]));
  }
}

TEST_CASE("sample requires an artifact and matches the exact contraction") {
  TempDir tmp("sample");
  auto cfg = tiny(tmp.path / "out");
  cfg.spectra = {SpectrumKind::csa};
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_sample(cfg, std::nullopt, log), MissingArtifact);
  CHECK_THROWS_AS(cmd_sample(cfg, tmp.path / "none.json", log), MissingArtifact);
  cmd_optimize(cfg, log);
  const auto rep = cmd_sample(cfg, std::nullopt, log);
  REQUIRE(rep.files.size() == 3);
  const auto rows = read_csv(rep.files[0]);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == std::vector<std::string>{"observable", "exact", "noiseless", "noiseless_stderr", "noisy",
                                            "noisy_stderr", "shots"});
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CAPTURE(rows[i][0]);
    CHECK(std::abs(std::stod(rows[i][2]) - std::stod(rows[i][1])) < 4 * std::stod(rows[i][3]));
  }
  CHECK(rows.back()[0] == "free_energy");
  const auto shots = read_csv(rep.files[1]);
  CHECK(shots[0] == std::vector<std::string>{"observable", "estimate", "stderr", "shots", "noise"});
  const auto corr = read_csv(rep.files[2]);
  CHECK(corr.size() == 1 + 2 * 4);
  const auto explicit_art = cmd_sample(cfg, level_artifact(cfg.output / "runs" / "sdim_V=0_T1_q1_csa", 1), log);
  CHECK(explicit_art.files.size() == 3);
}
