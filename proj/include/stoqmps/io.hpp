#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "stoqmps/config.hpp"

namespace stoqmps {

using Json = nlohmann::json;

// Gates serialize as flat arrays: 15 angles, or 32 interleaved (re, im)
// row-major entries in raw-matrix mode.
Json to_json(const CircuitAnsatz& a);
CircuitAnsatz ansatz_from_json(const Json& j);
Json to_json(const SpectrumParams& s);
SpectrumParams spectrum_from_json(const Json& j);
Json to_json(const Candidate& c);
Candidate candidate_from_json(const Json& j);
Json to_json(const LevelResult& level);
LevelResult level_from_json(const Json& j);

/// Writes through a temporary file and rename, so readers never see a partial file.
void write_atomic(const std::filesystem::path& path, const std::string& content);
Json read_json(const std::filesystem::path& path);

/// "# "-prefixed copy of the resolved configuration, one line per YAML line.
std::string config_header(const RunConfig& config);

/// CSV with the configuration header, a column header row and data rows.
void write_csv(const std::filesystem::path& path, const RunConfig& config, const std::string& header,
               const std::vector<std::string>& rows);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace stoqmps
