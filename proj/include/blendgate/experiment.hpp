#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "blendgate/blend.hpp"
#include "blendgate/json.hpp"

namespace blendgate {

struct ExperimentGroup {
    std::string group_name;
    double allocation = 1.0;
    SelectionPolicy policy;
};

/// A/B experiment: groups with traffic allocations and serving policies.
struct ExperimentConfig {
    std::string experiment_name;
    std::uint64_t seed = 0;
    std::vector<ExperimentGroup> groups;
    std::string control_group;
    bool debug_expose_model = false;
    double engagement_delta_seconds = 43'200.0;
    double day_length_seconds = 86'400.0;

    /// Throws ConfigError naming the first offending field.
    void validate() const;

    const ExperimentGroup& group(const std::string& name) const;
    const ExperimentGroup& control() const { return group(control_group); }

    /// Field names match the struct. engagement_delta_seconds defaults to half a day,
    /// debug_expose_model to false, day_length_seconds to 86400. Validates.
    static ExperimentConfig from_json(const Json& j);
    static ExperimentConfig load(const std::filesystem::path& path);
    Json to_json() const;
};

/// Deterministic cohort for a user: stable_hash(user_id) under (experiment_name, seed),
/// mapped to [0, 1) and bucketed by cumulative allocation in group order.
const std::string& assign_cohort(const std::string& user_id, const ExperimentConfig& config);

}  // namespace blendgate
