#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "blendgate/analytics.hpp"
#include "blendgate/simulator.hpp"
#include "test_support.hpp"

namespace blendgate {
namespace {

using testing::TempDir;

SimulationConfig one_group(double r1, double beta, double alpha, double gamma, int users,
                           SimProcesses processes = SimProcesses::both) {
    SimulationConfig config;
    config.groups = {SimulationGroup{"g", users, r1, beta, alpha, gamma, 1.0}};
    config.seed = 42;
    config.processes = processes;
    return config;
}

TEST(Simulator, FullRetentionEveryDay) {
    const auto config = one_group(1.0, 0.0, 0.5, 0.0, 50);
    const EventIndex index(simulate(config));
    for (int k = 1; k <= config.horizon_days; ++k) ASSERT_EQ(retention_rate(index, "g", k, 86'400.0).rate, 1.0) << k;
}

TEST(Simulator, ZeroRetentionMeansNoReturns) {
    const auto config = one_group(0.0, -0.5, 0.5, 0.0, 200, SimProcesses::retention_only);
    const auto events = simulate(config);
    EXPECT_EQ(events.size(), 200u);
    const EventIndex index(events);
    for (int k = 1; k <= config.horizon_days; ++k) ASSERT_EQ(retention_rate(index, "g", k, 86'400.0).rate, 0.0);
}

TEST(Simulator, RetentionWithinBinomialBands) {
    const auto config = one_group(0.5, -0.3, 0.5, 0.0, 10'000, SimProcesses::retention_only);
    const EventIndex index(simulate(config));
    for (int k = 1; k <= 30; ++k) {
        const double p = 0.5 * std::pow(k, -0.3);
        const double sigma = std::sqrt(p * (1 - p) / 10'000);
        EXPECT_NEAR(retention_rate(index, "g", k, 86'400.0).rate, p, 3 * sigma) << "k=" << k;
    }
}

TEST(Simulator, EngagementWithinBinomialBands) {
    const auto config = one_group(0.5, 0.0, 0.8, -0.3, 10'000, SimProcesses::engagement_only);
    const EventIndex index(simulate(config));
    const auto series = engagement_series(index, "g", EngagementWindow{});
    ASSERT_GE(series.size(), 29u);
    for (const auto& point : series) {
        const double p = std::min(1.0, 0.8 * std::pow(point.t, -0.3));
        const double sigma = std::sqrt(p * (1 - p) / 10'000);
        // Bin 1 also sees the join events of users who joined in its first half.
        if (point.t == 1.0) {
            EXPECT_GE(point.value, p - 3 * sigma);
        } else if (point.t <= config.horizon_days) {
            EXPECT_NEAR(point.value, p, 3 * sigma) << "t=" << point.t;
        }
    }
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

TEST(Simulator, SameSeedSameBytes) {
    TempDir dir;
    SimulationConfig config = one_group(0.4, -0.2, 0.6, -0.1, 300);
    config.groups.push_back(SimulationGroup{"h", 200, 0.5, 0.0, 0.5, 0.0, 2.0});
    write_event_log(dir / "a.jsonl", simulate(config));
    write_event_log(dir / "b.jsonl", simulate(config));
    EXPECT_EQ(slurp(dir / "a.jsonl"), slurp(dir / "b.jsonl"));
    config.seed += 1;
    write_event_log(dir / "c.jsonl", simulate(config));
    EXPECT_NE(slurp(dir / "a.jsonl"), slurp(dir / "c.jsonl"));
}

TEST(Simulator, OutputPassesLogValidation) {
    SimulationConfig config = one_group(0.7, -0.1, 0.9, 0.0, 500);
    config.events_per_active_day = 3;
    const auto events = simulate(config);
    EXPECT_NO_THROW(validate_log(events));
    EXPECT_NO_THROW(validate_log_order(events));
    for (const auto& e : events) {
        ASSERT_NO_THROW(validate_event(e));
        ASSERT_EQ(parse_event(serialize_event(e)), e);
    }
}

TEST(Simulator, SingleProcessLogIsSubsetOfCombined) {
    const auto combined = simulate(one_group(0.5, -0.3, 0.6, -0.2, 300));
    std::multiset<std::string> all;
    for (const auto& e : combined) all.insert(serialize_event(e));
    std::size_t parts = 0;
    for (auto processes : {SimProcesses::retention_only, SimProcesses::engagement_only}) {
        for (const auto& e : simulate(one_group(0.5, -0.3, 0.6, -0.2, 300, processes))) {
            if (e.event == EventKind::user_joined) continue;
            ASSERT_TRUE(all.contains(serialize_event(e)));
            ++parts;
        }
    }
    EXPECT_EQ(parts + 300, combined.size());
}

TEST(SimulationConfig, RejectsOutOfDomain) {
    auto field_of = [](const Json& j) {
        try {
            SimulationConfig::from_json(j);
        } catch (const ConfigError& e) {
            return e.field();
        }
        return std::string("<no error>");
    };
    const Json base{{"seed", 1},
                    {"groups", Json::array({Json{{"name", "c"}, {"users", 10}, {"R1", 0.5}, {"beta", -0.3},
                                                 {"alpha_e", 0.5}, {"gamma_e", -0.2}}})}};
    EXPECT_EQ(field_of(base), "<no error>");
    Json j = base;
    j["groups"][0]["R1"] = 1.5;
    EXPECT_EQ(field_of(j), "groups.R1");
    j = base;
    j["groups"][0]["alpha_e"] = 0;
    EXPECT_EQ(field_of(j), "groups.alpha_e");
    j = base;
    j["groups"][0]["users"] = 0;
    EXPECT_EQ(field_of(j), "groups.users");
    j = base;
    j["horizon_days"] = 1;
    EXPECT_EQ(field_of(j), "horizon_days");
    j = base;
    j["control"] = "nobody";
    EXPECT_EQ(field_of(j), "control");
    j = base;
    j["processes"] = "dreams";
    EXPECT_EQ(field_of(j), "processes");
}

TEST(RecoveryCheck, InfiniteToleranceAlwaysPassesAndEchoesResiduals) {
    SimulationConfig config;
    config.groups = {SimulationGroup{"ctrl", 500, 0.45, -0.4, 0.5, -0.5, 1.0},
                     SimulationGroup{"test", 500, 0.6, 0.0, 0.6, -0.2, 1.4}};
    config.horizon_days = 10;
    config.seed = 3;
    const auto report = recovery_check(config);
    EXPECT_TRUE(report.passed());
    ASSERT_EQ(report.rows.size(), 1u);
    EXPECT_NEAR(report.rows[0].truth.beta, 0.4, 1e-12);
    EXPECT_NEAR(report.rows[0].truth.zeta, std::log(0.6 / 0.45), 1e-12);
    EXPECT_NE(format_recovery(report).find("test"), std::string::npos);
}

}  // namespace
}  // namespace blendgate
