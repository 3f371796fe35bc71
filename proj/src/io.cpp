#include "stoqmps/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace stoqmps {

Json to_json(const CircuitAnsatz& a) {
  Json gates = Json::array();
  if (a.mode == Parameterization::angles) {
    for (const auto& g : a.angles) gates.push_back(std::vector<double>(g.begin(), g.end()));
  } else {
    for (const auto& m : a.raw) {
      std::vector<double> flat;
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
          flat.push_back(m(r, c).real());
          flat.push_back(m(r, c).imag());
        }
      gates.push_back(flat);
    }
  }
  return {{"q", a.q},
          {"tau", a.tau},
          {"geometry", to_string(a.geometry)},
          {"parameterization", to_string(a.mode)},
          {"gates", gates}};
}

CircuitAnsatz ansatz_from_json(const Json& j) {
  CircuitAnsatz a;
  a.q = j.at("q").get<int>();
  a.tau = j.at("tau").get<int>();
  a.geometry = parse_geometry(j.at("geometry").get<std::string>());
  a.mode = parse_parameterization(j.at("parameterization").get<std::string>());
  for (const auto& g : j.at("gates")) {
    const auto flat = g.get<std::vector<double>>();
    if (a.mode == Parameterization::angles) {
      if (flat.size() != 15) throw InvalidArgument("angle-mode gates need 15 values");
      GateParams p{};
      std::copy(flat.begin(), flat.end(), p.begin());
      a.angles.push_back(p);
    } else {
      if (flat.size() != 32) throw InvalidArgument("raw-mode gates need 32 values");
      Matrix m(4, 4);
      for (int k = 0; k < 16; ++k) m(k / 4, k % 4) = Complex(flat[2 * k], flat[2 * k + 1]);
      a.raw.push_back(m);
    }
  }
  a.validate();
  return a;
}

Json to_json(const SpectrumParams& s) {
  if (s.kind == SpectrumKind::psa) return {{"kind", "psa"}, {"p", s.p}};
  return {{"kind", "csa"}, {"J", s.J}, {"h", s.h}};
}

SpectrumParams spectrum_from_json(const Json& j) {
  const auto kind = parse_spectrum_kind(j.at("kind").get<std::string>());
  auto s = kind == SpectrumKind::psa ? SpectrumParams::product(j.at("p").get<double>())
                                     : SpectrumParams::correlated(j.at("J").get<double>(), j.at("h").get<double>());
  s.validate();
  return s;
}

Json to_json(const Candidate& c) { return {{"ansatz", to_json(c.ansatz)}, {"spectrum", to_json(c.spectrum)}}; }

Candidate candidate_from_json(const Json& j) {
  return {ansatz_from_json(j.at("ansatz")), spectrum_from_json(j.at("spectrum"))};
}

Json to_json(const LevelResult& level) {
  Json inst = Json::array();
  for (const auto& i : level.instances) {
    Json e = {{"index", i.index}, {"failed", i.failed}, {"evaluations", i.evaluations}, {"converged", i.converged}};
    if (i.failed) {
      e["diagnostic"] = i.diagnostic;
    } else {
      e["initial_f"] = i.initial_f;
      e["f"] = i.f;
      e["lowest_visited"] = i.lowest_visited;
    }
    inst.push_back(e);
  }
  return {{"tau", level.tau},
          {"randomness", level.randomness},
          {"best_f", level.best_f},
          {"best_index", level.best_index},
          {"status", to_string(level.status)},
          {"seconds", level.seconds},
          {"best", to_json(level.best)},
          {"instances", inst}};
}

LevelResult level_from_json(const Json& j) {
  LevelResult l;
  l.tau = j.at("tau").get<int>();
  l.randomness = j.at("randomness").get<double>();
  l.best_f = j.at("best_f").get<double>();
  l.best_index = j.at("best_index").get<int>();
  l.status = parse_run_status(j.at("status").get<std::string>());
  l.seconds = j.at("seconds").get<double>();
  l.best = candidate_from_json(j.at("best"));
  for (const auto& e : j.at("instances")) {
    InstanceResult i;
    i.index = e.at("index").get<int>();
    i.failed = e.at("failed").get<bool>();
    i.evaluations = e.at("evaluations").get<long>();
    i.converged = e.at("converged").get<bool>();
    if (i.failed) {
      i.diagnostic = e.value("diagnostic", "");
    } else {
      i.initial_f = e.at("initial_f").get<double>();
      i.f = e.at("f").get<double>();
      i.lowest_visited = e.at("lowest_visited").get<double>();
    }
    l.instances.push_back(std::move(i));
  }
  return l;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return Json::parse(in);
}

std::string config_header(const RunConfig& config) {
  std::istringstream in(to_yaml(config));
  std::ostringstream out;
  for (std::string line; std::getline(in, line);) out << "# " << line << '\n';
  return out.str();
}

void write_csv(const std::filesystem::path& path, const RunConfig& config, const std::string& header,
               const std::vector<std::string>& rows) {
  std::ostringstream os;
  os << config_header(config) << header << '\n';
  for (const auto& r : rows) os << r << '\n';
  write_atomic(path, os.str());
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace stoqmps
