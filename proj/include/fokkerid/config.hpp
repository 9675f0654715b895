#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fokkerid/inversion.hpp"
#include "fokkerid/model.hpp"

namespace fokkerid {

inline constexpr const char* kConfigSchemaTag = "FOKKERID-CONFIG-v1";

// config/defaults.json, compiled in.
const char* embedded_default_config();
nlohmann::json default_config();

// Merges a partial config file over `base`. Keys must exist in the schema
// and keep their type.
nlohmann::json merge_config(nlohmann::json base, const nlohmann::json& patch);
nlohmann::json load_config_file(const nlohmann::json& base, const std::filesystem::path& path);

// "section.key=value" overrides, validated against `base`.
nlohmann::json apply_overrides(nlohmann::json base, const std::vector<std::string>& overrides);

LandweberConfig landweber_from_config(const nlohmann::json& config);

// "auto" bootstraps the easy-axis case only.
bool bootstrap_enabled(const nlohmann::json& config, ParameterCase c);

}  // namespace fokkerid
