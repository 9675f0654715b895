#include "fokkerid/config.hpp"

#include <fstream>

#include "fokkerid/errors.hpp"

namespace fokkerid {
namespace {

using nlohmann::json;

bool same_kind(const json& schema, const json& value) {
    if (schema.is_boolean()) return value.is_boolean();
    if (schema.is_number_integer()) return value.is_number_integer();
    if (schema.is_number()) return value.is_number();
    if (schema.is_string()) return value.is_string();
    if (schema.is_object()) return value.is_object();
    return false;
}

void merge_into(json& base, const json& patch, const std::string& prefix) {
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
        json& target = base[it.key()];
        if (!same_kind(target, it.value())) throw ConfigError("config key '" + key + "' has the wrong type");
        if (target.is_object()) {
            merge_into(target, it.value(), key);
        } else {
            target = it.value();
        }
    }
}

json parse_scalar(const json& schema, const std::string& key, const std::string& text) {
    try {
        if (schema.is_boolean()) {
            if (text == "true") return true;
            if (text == "false") return false;
        } else if (schema.is_number_integer()) {
            std::size_t used = 0;
            const long long v = std::stoll(text, &used);
            if (used == text.size()) return v;
        } else if (schema.is_number()) {
            std::size_t used = 0;
            const double v = std::stod(text, &used);
            if (used == text.size()) return v;
        } else if (schema.is_string()) {
            return text;
        }
    } catch (const std::exception&) {
    }
    throw ConfigError("invalid value '" + text + "' for config key '" + key + "'");
}

}  // namespace

json default_config() { return json::parse(embedded_default_config()); }

json merge_config(json base, const json& patch) {
    if (!patch.is_object()) throw ConfigError("config must be a JSON object");
    json body = patch;
    if (body.contains("schema")) {
        if (body["schema"] != kConfigSchemaTag) throw ConfigError("config schema tag mismatch");
        body.erase("schema");
    }
    merge_into(base, body, "");
    return base;
}

json load_config_file(const json& base, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    json patch;
    try {
        in >> patch;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return merge_config(base, patch);
}

json apply_overrides(json base, const std::vector<std::string>& overrides) {
    for (const auto& item : overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "' is not key=value");
        const std::string key = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        json* node = &base;
        std::size_t start = 0;
        while (true) {
            const auto dot = key.find('.', start);
            const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
            node = &(*node)[part];
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        if (node->is_object()) throw ConfigError("config key '" + key + "' names a section");
        *node = parse_scalar(*node, key, value);
    }
    return base;
}

LandweberConfig landweber_from_config(const json& config) {
    const json& l = config.at("landweber");
    LandweberConfig c;
    c.omega = l.at("omega").get<double>();
    c.step_safety = l.at("step_safety").get<double>();
    c.armijo_factor = l.at("armijo_factor").get<double>();
    c.j_max = l.at("j_max").get<int>();
    c.tol = l.at("tol").get<double>();
    c.k_max = l.at("k_max").get<int>();
    c.tau = l.at("tau").get<double>();
    c.epsilon_time = l.at("epsilon_time").get<double>();
    c.epsilon_space = l.at("epsilon_space").get<double>();
    c.store_iterates = l.at("store_iterates").get<bool>();
    c.continue_after_dp = l.at("continue_after_dp").get<bool>();
    c.bootstrap_k_max = l.at("bootstrap_k_max").get<int>();
    c.power_iterations = l.at("power_iterations").get<int>();
    const auto seed = l.at("power_seed").get<long long>();
    if (seed < 0) throw ConfigError("power_seed must be non-negative");
    c.power_seed = static_cast<unsigned>(seed);
    c.validate();
    return c;
}

bool bootstrap_enabled(const json& config, ParameterCase c) {
    const std::string mode = config.at("reconstruct").at("bootstrap").get<std::string>();
    if (mode == "auto") return c == ParameterCase::easy_axis;
    if (mode == "always") return true;
    if (mode == "never") return false;
    throw ConfigError("reconstruct.bootstrap must be auto, always or never");
}

}  // namespace fokkerid
