#pragma once

#include <string>

#include <json.hpp>

#include "lossres/abrm.hpp"
#include "lossres/cgmm.hpp"
#include "lossres/fit.hpp"

namespace lossres {

// JSON bindings for the documented interchange schemas (docs/formats.md).

nlohmann::json to_json(const AbrmSpec& spec);
AbrmSpec abrm_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CgmmConfig& config);
CgmmConfig cgmm_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const FitResult& result);
/// Restores model, method and configuration (enough to drive a bootstrap).
FitResult fit_result_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SummaryStats& stats);
nlohmann::json to_json(const BootstrapSummary& summary,
                       const std::vector<std::string>& line_names);

nlohmann::json load_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace lossres
