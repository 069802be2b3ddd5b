#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "blendgate/analytics.hpp"
#include "blendgate/events.hpp"
#include "blendgate/experiment.hpp"
#include "blendgate/json.hpp"

namespace blendgate {

/// Ground truth for one simulated cohort.
struct SimulationGroup {
    std::string name;
    int users = 0;
    double r1 = 0.5;       ///< day-1 retention
    double beta = 0.0;     ///< retention exponent: P(active on day k) = r1 * k^beta
    double alpha_e = 0.5;  ///< engagement scale
    double gamma_e = 0.0;  ///< engagement exponent: P(active in bin t) = alpha_e * t^gamma_e
    double cost_flops = 1.0;
};

/// Which activity processes a simulated log contains.
enum class SimProcesses { both, retention_only, engagement_only };

struct SimulationConfig {
    std::vector<SimulationGroup> groups;
    std::string control;  ///< defaults to the first group
    int horizon_days = 30;
    std::uint64_t seed = 0;
    int events_per_active_day = 1;
    double day_length_seconds = 86'400.0;
    double start_ts = 1'700'000'000.0;
    SimProcesses processes = SimProcesses::both;

    /// Throws ConfigError naming the offending field.
    void validate() const;

    const SimulationGroup& group(const std::string& name) const;

    static SimulationConfig from_json(const Json& j);
    static SimulationConfig load(const std::filesystem::path& path);

    /// Single-model experiment mirroring the simulated groups (used for reporting).
    ExperimentConfig experiment() const;
};

/// Synthetic event log. Each user joins at a uniformly jittered time within day 0.
/// Retention: on each day k = 1..horizon after joining, the user is active with
/// probability clamp(r1 * k^beta, 0, 1). Engagement: for each bin t = 1..horizon
/// (days since the earliest join), the user is active in [t - 1/2, t + 1/2) with
/// probability clamp(alpha_e * t^gamma_e, 0, 1). An active period emits
/// events_per_active_day user_turn/bot_turn pairs. Sorted by ts; same seed, same log.
std::vector<UserEvent> simulate(const SimulationConfig& config);

/// Writes the log as JSONL. Returns the number of lines.
std::size_t write_event_log(const std::filesystem::path& path, const std::vector<UserEvent>& events);

struct Deltas {
    double zeta = 0.0;
    double beta = 0.0;
    double alpha = 0.0;
    double gamma = 0.0;
};

struct RecoveryRow {
    std::string group;
    Deltas truth;
    std::optional<Deltas> estimate;  ///< empty when the group's fits failed
    std::optional<std::string> error;
    bool passed = false;
};

struct RecoveryReport {
    std::vector<RecoveryRow> rows;  ///< test groups only
    double tolerance = 0.0;
    bool passed() const;
};

/// Ground-truth deltas of `group` against the control.
Deltas true_deltas(const SimulationConfig& config, const std::string& group);

/// Simulates and analyzes, then checks every recovered delta against the truth.
/// Retention deltas are estimated from the retention-only part of the simulated log and
/// engagement deltas from the engagement-only part: in the combined log each process's
/// events also count toward the other metric.
RecoveryReport recovery_check(const SimulationConfig& config,
                              double tolerance = std::numeric_limits<double>::infinity());

/// Human-readable truth vs estimate table.
std::string format_recovery(const RecoveryReport& report);

}  // namespace blendgate
