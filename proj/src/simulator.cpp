#include "blendgate/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace blendgate {

namespace {

// Keeps jittered timestamps strictly inside their slot despite rounding at epoch scale.
constexpr double kSlotMargin = 1e-4;

double clamp01(double p) {
    if (std::isnan(p)) return 0.0;
    return std::clamp(p, 0.0, 1.0);
}

SimProcesses processes_from_string(const std::string& name) {
    if (name == "both") return SimProcesses::both;
    if (name == "retention") return SimProcesses::retention_only;
    if (name == "engagement") return SimProcesses::engagement_only;
    throw ConfigError("processes", "must be \"both\", \"retention\" or \"engagement\"");
}

template <typename T>
T get(const Json& j, const char* key, const std::string& path) {
    const auto it = j.find(key);
    if (it == j.end()) throw ConfigError(path, "missing");
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(path, "has the wrong type");
    }
}

template <typename T>
T get_or(const Json& j, const char* key, const std::string& path, T fallback) {
    return j.contains(key) ? get<T>(j, key, path) : fallback;
}

/// Emits `pairs` user_turn/bot_turn pairs at jittered times in [lo, hi).
void emit_pairs(std::vector<UserEvent>& out, const std::string& user_id, const std::string& cohort,
                const std::string& session_id, double lo, double hi, int pairs, Rng& rng) {
    const double width = hi - lo;
    for (int i = 0; i < pairs; ++i) {
        const double f = kSlotMargin + (1.0 - 2.0 * kSlotMargin) * rng.uniform();
        const double reply = f + (1.0 - kSlotMargin - f) * 0.01 * rng.uniform();
        UserEvent turn;
        turn.ts = lo + f * width;
        turn.user_id = user_id;
        turn.cohort = cohort;
        turn.session_id = session_id;
        turn.event = EventKind::user_turn;
        turn.turn_index = i;
        UserEvent bot = turn;
        bot.ts = lo + reply * width;
        bot.event = EventKind::bot_turn;
        bot.model_id = "sim";
        out.push_back(std::move(turn));
        out.push_back(std::move(bot));
    }
}

}  // namespace

void SimulationConfig::validate() const {
    if (groups.empty()) throw ConfigError("groups", "at least one group is required");
    std::set<std::string_view> names;
    for (const auto& g : groups) {
        if (g.name.empty()) throw ConfigError("groups.name", "must be nonempty");
        if (!names.insert(g.name).second) throw ConfigError("groups.name", "duplicate group \"" + g.name + "\"");
        if (g.users < 1) throw ConfigError("groups.users", g.name + ": must be >= 1");
        if (!(g.r1 >= 0.0 && g.r1 <= 1.0)) throw ConfigError("groups.R1", g.name + ": must be in [0, 1]");
        if (!std::isfinite(g.beta)) throw ConfigError("groups.beta", g.name + ": must be finite");
        if (!(g.alpha_e > 0.0) || !std::isfinite(g.alpha_e)) {
            throw ConfigError("groups.alpha_e", g.name + ": must be > 0");
        }
        if (!std::isfinite(g.gamma_e)) throw ConfigError("groups.gamma_e", g.name + ": must be finite");
        if (!(g.cost_flops > 0.0)) throw ConfigError("groups.cost_flops", g.name + ": must be > 0");
    }
    if (!control.empty() && !names.contains(control)) {
        throw ConfigError("control", "\"" + control + "\" is not a simulated group");
    }
    if (horizon_days < 2) throw ConfigError("horizon_days", "must be >= 2");
    if (events_per_active_day < 1) throw ConfigError("events_per_active_day", "must be >= 1");
    if (!(day_length_seconds > 0.0) || !std::isfinite(day_length_seconds)) {
        throw ConfigError("day_length_seconds", "must be > 0");
    }
    if (!std::isfinite(start_ts)) throw ConfigError("start_ts", "must be finite");
}

const SimulationGroup& SimulationConfig::group(const std::string& name) const {
    for (const auto& g : groups) {
        if (g.name == name) return g;
    }
    throw ConfigError("groups", "no simulated group \"" + name + "\"");
}

SimulationConfig SimulationConfig::from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("", "simulation config must be a JSON object");
    SimulationConfig config;
    const auto seed = j.find("seed");
    if (seed == j.end() || !seed->is_number_integer()) throw ConfigError("seed", "must be an integer");
    config.seed = seed->is_number_unsigned() ? seed->get<std::uint64_t>()
                                             : static_cast<std::uint64_t>(seed->get<std::int64_t>());
    config.horizon_days = get_or(j, "horizon_days", "horizon_days", config.horizon_days);
    config.events_per_active_day = get_or(j, "events_per_active_day", "events_per_active_day", 1);
    config.day_length_seconds = get_or(j, "day_length_seconds", "day_length_seconds", config.day_length_seconds);
    config.start_ts = get_or(j, "start_ts", "start_ts", config.start_ts);
    config.processes = processes_from_string(get_or<std::string>(j, "processes", "processes", "both"));
    const auto groups = j.find("groups");
    if (groups == j.end() || !groups->is_array()) throw ConfigError("groups", "must be an array");
    for (const auto& g : *groups) {
        SimulationGroup group;
        group.name = get<std::string>(g, "name", "groups.name");
        group.users = get<int>(g, "users", "groups.users");
        group.r1 = get<double>(g, "R1", "groups.R1");
        group.beta = get<double>(g, "beta", "groups.beta");
        group.alpha_e = get<double>(g, "alpha_e", "groups.alpha_e");
        group.gamma_e = get<double>(g, "gamma_e", "groups.gamma_e");
        group.cost_flops = get_or(g, "cost_flops", "groups.cost_flops", 1.0);
        config.groups.push_back(std::move(group));
    }
    config.control = get_or<std::string>(j, "control", "control", config.groups.empty() ? "" : config.groups.front().name);
    config.validate();
    return config;
}

SimulationConfig SimulationConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot read " + path.string());
    const Json j = Json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw ConfigError("--config", path.string() + " is not valid JSON");
    return from_json(j);
}

ExperimentConfig SimulationConfig::experiment() const {
    validate();
    ExperimentConfig experiment;
    experiment.experiment_name = "simulation";
    experiment.seed = seed;
    experiment.control_group = control.empty() ? groups.front().name : control;
    experiment.day_length_seconds = day_length_seconds;
    experiment.engagement_delta_seconds = day_length_seconds / 2.0;
    const double share = 1.0 / static_cast<double>(groups.size());
    for (const auto& g : groups) {
        ModelSpec model;
        model.model_id = "sim";
        model.backend = BackendLocator{Json{{"type", "mock"}, {"kind", "discrete_lm"}, {"default", {{"ok", 1.0}}}}};
        model.cost_flops = g.cost_flops;
        experiment.groups.push_back({g.name, share, SelectionPolicy::single(std::move(model))});
    }
    experiment.validate();
    return experiment;
}

std::vector<UserEvent> simulate(const SimulationConfig& config) {
    config.validate();
    const double day = config.day_length_seconds;

    struct Member {
        const SimulationGroup* group;
        std::string user_id;
        double join_ts;
    };
    std::vector<Member> members;
    for (const auto& g : config.groups) {
        for (int i = 0; i < g.users; ++i) {
            std::string id = g.name + "-" + std::to_string(i);
            Rng join_rng(stable_hash(id, config.seed ^ 0x6a6f696eULL));
            const double join = config.start_ts + (1.0 - kSlotMargin) * join_rng.uniform() * day;
            members.push_back({&g, std::move(id), join});
        }
    }
    double origin = members.front().join_ts;
    for (const auto& m : members) origin = std::min(origin, m.join_ts);

    const bool retention = config.processes != SimProcesses::engagement_only;
    const bool engagement = config.processes != SimProcesses::retention_only;
    const int pairs = config.events_per_active_day;

    std::vector<UserEvent> events;
    for (const auto& m : members) {
        const SimulationGroup& g = *m.group;
        UserEvent join;
        join.ts = m.join_ts;
        join.user_id = m.user_id;
        join.cohort = g.name;
        join.event = EventKind::user_joined;
        events.push_back(join);

        // Separate streams: a single-process log is exactly a subset of the combined one.
        if (retention) {
            Rng rng(stable_hash(m.user_id, config.seed));
            for (int k = 1; k <= config.horizon_days; ++k) {
                if (!rng.bernoulli(clamp01(g.r1 * std::pow(static_cast<double>(k), g.beta)))) continue;
                const double lo = m.join_ts + static_cast<double>(k) * day;
                emit_pairs(events, m.user_id, g.name, m.user_id + "-r" + std::to_string(k), lo, lo + day, pairs, rng);
            }
        }
        if (!engagement) continue;
        Rng rng(stable_hash(m.user_id, config.seed ^ 0x656e6761ULL));
        for (int t = 1; t <= config.horizon_days; ++t) {
            if (rng.bernoulli(clamp01(g.alpha_e * std::pow(static_cast<double>(t), g.gamma_e)))) {
                // Window [t - 1/2, t + 1/2) days from the first join, never before this user's join.
                const double lo = std::max(origin + (t - 0.5) * day, m.join_ts);
                const double hi = origin + (t + 0.5) * day;
                emit_pairs(events, m.user_id, g.name, m.user_id + "-e" + std::to_string(t), lo, hi, pairs, rng);
            }
        }
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const UserEvent& a, const UserEvent& b) { return a.ts < b.ts; });
    return events;
}

std::size_t write_event_log(const std::filesystem::path& path, const std::vector<UserEvent>& events) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& e : events) out << serialize_event(e) << '\n';
    out.flush();
    if (!out) throw Error("write failed: " + path.string());
    return events.size();
}

Deltas true_deltas(const SimulationConfig& config, const std::string& group) {
    const auto& test = config.group(group);
    const auto& control = config.group(config.control.empty() ? config.groups.front().name : config.control);
    return {std::log(test.r1) - std::log(control.r1), test.beta - control.beta,
            std::log(test.alpha_e) - std::log(control.alpha_e), test.gamma_e - control.gamma_e};
}

bool RecoveryReport::passed() const {
    return std::all_of(rows.begin(), rows.end(), [](const RecoveryRow& r) { return r.passed; });
}

RecoveryReport recovery_check(const SimulationConfig& config, double tolerance) {
    config.validate();
    if (config.groups.size() < 2) throw ConfigError("groups", "recovery needs a control and at least one test group");
    if (!(tolerance >= 0.0)) throw ArgumentError("tolerance must be >= 0");

    const ExperimentConfig experiment = config.experiment();

    SimulationConfig retention_pass = config;
    retention_pass.processes = SimProcesses::retention_only;
    SimulationConfig engagement_pass = config;
    engagement_pass.processes = SimProcesses::engagement_only;

    const ComparisonReport retention = build_report(EventIndex(simulate(retention_pass)), experiment);
    const ComparisonReport engagement = build_report(EventIndex(simulate(engagement_pass)), experiment);

    RecoveryReport report;
    report.tolerance = tolerance;
    for (std::size_t i = 0; i < experiment.groups.size(); ++i) {
        const std::string& name = experiment.groups[i].group_name;
        if (name == experiment.control_group) continue;
        RecoveryRow row;
        row.group = name;
        row.truth = true_deltas(config, name);
        const GroupReport& r = retention.groups[i];
        const GroupReport& e = engagement.groups[i];
        if (r.delta_zeta && r.delta_beta && e.delta_alpha && e.delta_gamma) {
            row.estimate = Deltas{*r.delta_zeta, *r.delta_beta, *e.delta_alpha, *e.delta_gamma};
            const Deltas& est = *row.estimate;
            const Deltas& truth = row.truth;
            row.passed = std::abs(est.zeta - truth.zeta) <= tolerance && std::abs(est.beta - truth.beta) <= tolerance &&
                         std::abs(est.alpha - truth.alpha) <= tolerance &&
                         std::abs(est.gamma - truth.gamma) <= tolerance;
        } else {
            std::string message;
            if (r.delta_zeta && r.delta_beta) {
                message = e.error.value_or("engagement fit failed");
            } else {
                message = r.error.value_or("retention fit failed");
            }
            row.error = std::move(message);
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string format_recovery(const RecoveryReport& report) {
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "%-14s %-6s %10s %10s %10s\n", "group", "delta", "truth", "estimate", "residual");
    out += line;
    for (const auto& row : report.rows) {
        const double truths[] = {row.truth.zeta, row.truth.beta, row.truth.gamma, row.truth.alpha};
        const char* names[] = {"zeta", "beta", "gamma", "alpha"};
        for (int i = 0; i < 4; ++i) {
            if (row.estimate) {
                const double est[] = {row.estimate->zeta, row.estimate->beta, row.estimate->gamma, row.estimate->alpha};
                std::snprintf(line, sizeof line, "%-14s %-6s %10.4f %10.4f %+10.4f\n", row.group.c_str(), names[i],
                              truths[i], est[i], est[i] - truths[i]);
            } else {
                std::snprintf(line, sizeof line, "%-14s %-6s %10.4f %10s %10s\n", row.group.c_str(), names[i],
                              truths[i], "n/a", "n/a");
            }
            out += line;
        }
        out += row.group + ": " + (row.passed ? "recovered" : "NOT recovered");
        if (row.error) out += " (" + *row.error + ")";
        out += "\n";
    }
    std::snprintf(line, sizeof line, "tolerance %g: %s\n", report.tolerance, report.passed() ? "PASS" : "FAIL");
    out += line;
    return out;
}

}  // namespace blendgate
