#include "blendgate/experiment.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "blendgate/rng.hpp"

namespace blendgate {

namespace {

template <typename T>
T field(const Json& j, const char* key, const std::string& path) {
    const auto it = j.find(key);
    if (it == j.end()) throw ConfigError(path, "missing");
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(path, "has the wrong type");
    }
}

template <typename T>
T field_or(const Json& j, const char* key, const std::string& path, T fallback) {
    return j.contains(key) ? field<T>(j, key, path) : fallback;
}

void reject_unknown(const Json& j, std::initializer_list<std::string_view> known, const std::string& prefix) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (auto k : known) ok = ok || key == k;
        if (!ok) throw ConfigError(prefix + key, "unknown field");
    }
}

}  // namespace

void ExperimentConfig::validate() const {
    if (experiment_name.empty()) throw ConfigError("experiment_name", "must be nonempty");
    if (groups.empty()) throw ConfigError("groups", "at least one group is required");
    std::set<std::string_view> names;
    double total = 0.0;
    for (const auto& g : groups) {
        if (g.group_name.empty()) throw ConfigError("groups.group_name", "must be nonempty");
        if (!names.insert(g.group_name).second) {
            throw ConfigError("groups.group_name", "duplicate group \"" + g.group_name + "\"");
        }
        if (!(g.allocation > 0.0 && g.allocation <= 1.0)) {
            throw ConfigError("groups.allocation", g.group_name + ": allocation must be in (0, 1]");
        }
        if (g.policy.size() == 0) throw ConfigError("groups.policy", g.group_name + ": empty policy");
        total += g.allocation;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw ConfigError("groups.allocation", "allocations sum to " + std::to_string(total) + ", expected 1");
    }
    if (!names.contains(control_group)) {
        throw ConfigError("control_group", "\"" + control_group + "\" is not a configured group");
    }
    if (!(engagement_delta_seconds > 0.0) || !std::isfinite(engagement_delta_seconds)) {
        throw ConfigError("engagement_delta_seconds", "must be > 0");
    }
    if (!(day_length_seconds > 0.0) || !std::isfinite(day_length_seconds)) {
        throw ConfigError("day_length_seconds", "must be > 0");
    }
}

const ExperimentGroup& ExperimentConfig::group(const std::string& name) const {
    for (const auto& g : groups) {
        if (g.group_name == name) return g;
    }
    throw ConfigError("groups", "no group named \"" + name + "\"");
}

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("", "experiment config must be a JSON object");
    reject_unknown(j,
                   {"experiment_name", "seed", "groups", "control_group", "debug_expose_model",
                    "engagement_delta_seconds", "day_length_seconds"},
                   "");
    ExperimentConfig config;
    config.experiment_name = field<std::string>(j, "experiment_name", "experiment_name");
    const auto seed = j.find("seed");
    if (seed == j.end() || !seed->is_number_integer()) throw ConfigError("seed", "must be an integer");
    config.seed = seed->is_number_unsigned() ? seed->get<std::uint64_t>()
                                             : static_cast<std::uint64_t>(seed->get<std::int64_t>());
    config.control_group = field<std::string>(j, "control_group", "control_group");
    config.debug_expose_model = field_or(j, "debug_expose_model", "debug_expose_model", false);
    config.day_length_seconds = field_or(j, "day_length_seconds", "day_length_seconds", 86'400.0);
    config.engagement_delta_seconds =
        field_or(j, "engagement_delta_seconds", "engagement_delta_seconds", config.day_length_seconds / 2.0);

    const auto groups = j.find("groups");
    if (groups == j.end() || !groups->is_array()) throw ConfigError("groups", "must be an array");
    for (const auto& g : *groups) {
        if (!g.is_object()) throw ConfigError("groups", "entries must be objects");
        reject_unknown(g, {"group_name", "allocation", "policy"}, "groups.");
        ExperimentGroup group;
        group.group_name = field<std::string>(g, "group_name", "groups.group_name");
        group.allocation = field<double>(g, "allocation", "groups.allocation");
        if (!g.contains("policy")) throw ConfigError("groups.policy", "missing");
        group.policy = SelectionPolicy::from_json(g["policy"]);
        config.groups.push_back(std::move(group));
    }
    config.validate();
    return config;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot read " + path.string());
    const Json j = Json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw ConfigError("--config", path.string() + " is not valid JSON");
    return from_json(j);
}

Json ExperimentConfig::to_json() const {
    Json out_groups = Json::array();
    for (const auto& g : groups) {
        out_groups.push_back(
            Json{{"group_name", g.group_name}, {"allocation", g.allocation}, {"policy", g.policy.to_json()}});
    }
    return Json{{"experiment_name", experiment_name},
                {"seed", seed},
                {"groups", std::move(out_groups)},
                {"control_group", control_group},
                {"debug_expose_model", debug_expose_model},
                {"engagement_delta_seconds", engagement_delta_seconds},
                {"day_length_seconds", day_length_seconds}};
}

const std::string& assign_cohort(const std::string& user_id, const ExperimentConfig& config) {
    const std::uint64_t salt = stable_hash(config.experiment_name, config.seed);
    const double u = unit_interval(stable_hash(user_id, salt));
    double cumulative = 0.0;
    for (const auto& g : config.groups) {
        cumulative += g.allocation;
        if (u < cumulative) return g.group_name;
    }
    return config.groups.back().group_name;
}

}  // namespace blendgate
