#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "blendgate/analytics.hpp"
#include "blendgate/simulator.hpp"
#include "test_support.hpp"

namespace blendgate {
namespace {

using testing::constant_model;

constexpr double kDay = 86'400.0;

UserEvent join(double day, const std::string& user, const std::string& cohort) {
    return UserEvent{day * kDay, user, cohort, std::nullopt, EventKind::user_joined, std::nullopt, std::nullopt};
}

UserEvent turn(double day, const std::string& user, const std::string& cohort) {
    return UserEvent{day * kDay, user, cohort, "s-" + user, EventKind::user_turn, std::nullopt, 0};
}

ExperimentConfig two_cohorts(double test_cost = 1.0) {
    ExperimentConfig config;
    config.experiment_name = "a";
    config.groups = {ExperimentGroup{"control", 0.5, SelectionPolicy::single(constant_model("P", "x"))},
                     ExperimentGroup{"test", 0.5, SelectionPolicy::single(constant_model("Q", "x", test_cost))}};
    config.control_group = "control";
    return config;
}

TEST(RetentionRate, HandCountedSixLineLog) {
    const std::vector<UserEvent> log{join(0, "u1", "c"), join(0, "u2", "c"),   join(0, "u3", "c"),
                                     join(0, "u4", "c"), turn(1.5, "u1", "c"), turn(1.2, "u2", "c")};
    const EventIndex index(log);
    const auto r1 = retention_rate(index, "c", 1, kDay);
    EXPECT_EQ(r1.active_users, 2u);
    EXPECT_EQ(r1.cohort_size, 4u);
    EXPECT_EQ(r1.rate, 0.5);
    EXPECT_EQ(retention_rate(index, "c", 2, kDay).rate, 0.0);
}

TEST(RetentionRate, NeverReturningUserAndDistinctCounting) {
    EXPECT_EQ(retention_rate(EventIndex({join(0, "u", "c")}), "c", 1, kDay).rate, 0.0);

    std::vector<UserEvent> log{join(0, "a", "c"), join(0, "b", "c")};
    for (int i = 0; i < 5; ++i) log.push_back(turn(3.1 + 0.1 * i, "a", "c"));
    EXPECT_EQ(retention_rate(EventIndex(log), "c", 3, kDay).rate, 0.5);
}

TEST(RetentionRate, DaysAreRelativeToEachJoin) {
    // b joins late on day 0; its event 1.9 days later is in its day 1, not day 2.
    const std::vector<UserEvent> log{join(0.0, "a", "c"), join(0.9, "b", "c"), turn(1.0, "a", "c"),
                                     turn(2.8, "b", "c")};
    const EventIndex index(log);
    EXPECT_EQ(retention_rate(index, "c", 1, kDay).active_users, 2u);
    EXPECT_EQ(retention_rate(index, "c", 2, kDay).active_users, 0u);
}

TEST(RetentionRate, Errors) {
    const EventIndex index({join(0, "u", "c")});
    EXPECT_THROW(retention_rate(index, "c", 0, kDay), ArgumentError);
    try {
        retention_rate(index, "missing", 1, kDay);
        FAIL();
    } catch (const AnalyticsError& e) {
        EXPECT_EQ(e.kind(), AnalyticsError::Kind::empty_cohort);
    }
}

TEST(RetentionRatio, ArithmeticAndDrops) {
    std::vector<UserEvent> log;
    for (int i = 0; i < 10; ++i) {
        log.push_back(join(0, "c" + std::to_string(i), "control"));
        log.push_back(join(0, "t" + std::to_string(i), "test"));
    }
    log.push_back(turn(1.5, "c0", "control"));
    log.push_back(turn(1.5, "t0", "test"));
    log.push_back(turn(1.5, "t1", "test"));
    log.push_back(turn(2.5, "t2", "test"));
    const EventIndex index(log);
    const auto q = retention_ratio(index, "test", "control", 2, kDay);
    ASSERT_EQ(q.points.size(), 1u);
    EXPECT_EQ(q.points[0], (SeriesPoint{1, 2.0}));
    EXPECT_EQ(q.dropped, 1);

    try {
        retention_ratio(index, "test", "control", 1, kDay);
        retention_ratio(EventIndex({join(0, "a", "control"), join(0, "b", "test")}), "test", "control", 3, kDay);
        FAIL();
    } catch (const AnalyticsError& e) {
        EXPECT_EQ(e.kind(), AnalyticsError::Kind::degenerate_series);
    }
}

TEST(EngagementSeries, ClosedWindowBoundary) {
    // Origin is the join at day 0; an event exactly at t - delta for t = 2.
    const EventIndex index({join(0, "u", "c"), turn(1.5, "u", "c")});
    EngagementWindow window;
    window.t_max = 3.0;
    const auto series = engagement_series(index, "c", window);
    ASSERT_EQ(series.size(), 3u);
    EXPECT_EQ(series[0].t, 1.0);
    EXPECT_EQ(series[0].value, 1.0);  // [0.5, 1.5] contains 1.5
    EXPECT_EQ(series[1].value, 1.0);  // [1.5, 2.5] contains 1.5
    EXPECT_EQ(series[2].value, 0.0);
}

TEST(EngagementSeries, HalfOfTwoUsersAndDefaultSpan) {
    const EventIndex index({join(0, "a", "c"), join(0.2, "b", "c"), turn(1.1, "a", "c"), turn(2.0, "a", "c")});
    const auto series = engagement_series(index, "c", EngagementWindow{});
    ASSERT_EQ(series.size(), 2u);  // log spans two days
    EXPECT_EQ(series[0].value, 0.5);
    EXPECT_EQ(series[1].value, 0.5);
}

TEST(EngagementRatio, Arithmetic) {
    std::vector<UserEvent> log;
    for (int i = 0; i < 5; ++i) {
        log.push_back(join(0, "c" + std::to_string(i), "control"));
        log.push_back(join(0, "t" + std::to_string(i), "test"));
    }
    log.push_back(turn(1.0, "c0", "control"));
    log.push_back(turn(1.0, "t0", "test"));
    log.push_back(turn(1.0, "t1", "test"));
    EngagementWindow window;
    window.t_max = 1.0;
    const auto r = engagement_ratio(EventIndex(log), "test", "control", window);
    ASSERT_EQ(r.points.size(), 1u);
    EXPECT_EQ(r.points[0].y, 2.0);
}

TEST(FitLogLog, NoiselessPowerLaws) {
    for (const auto [c, m] : {std::pair{0.2, 0.5}, {0.0, 0.0}, {1.7, 2.1}}) {
        std::vector<SeriesPoint> pts;
        for (int x = 1; x <= 30; ++x) pts.push_back({double(x), std::exp(c) * std::pow(double(x), m)});
        const auto fit = fit_loglog(pts);
        EXPECT_NEAR(fit.intercept, c, 1e-9);
        EXPECT_NEAR(fit.slope, m, 1e-9);
        EXPECT_EQ(fit.points_used, 30);
    }
}

TEST(FitLogLog, SmallCases) {
    const std::vector<SeriesPoint> flat{{1, 1}, {2, 1}, {5, 1}};
    EXPECT_EQ(fit_loglog(flat).slope, 0.0);
    EXPECT_EQ(fit_loglog(flat).intercept, 0.0);

    const std::vector<SeriesPoint> line{{1, 1}, {10, 10}};
    EXPECT_NEAR(fit_loglog(line).slope, 1.0, 1e-15);
    EXPECT_NEAR(fit_loglog(line).intercept, 0.0, 1e-15);

    const std::vector<SeriesPoint> with_zero{{1, 1}, {2, 0}, {3, 3}, {-1, 2}};
    const auto fit = fit_loglog(with_zero);
    EXPECT_EQ(fit.points_used, 2);
    EXPECT_EQ(fit.points_dropped, 2);

    auto kind_of = [](std::vector<SeriesPoint> pts) {
        try {
            fit_loglog(pts);
        } catch (const AnalyticsError& e) {
            return e.kind();
        }
        return AnalyticsError::Kind::empty_cohort;
    };
    EXPECT_EQ(kind_of({{1, 1}, {2, 0}}), AnalyticsError::Kind::insufficient_data);
    EXPECT_EQ(kind_of({{3, 1}, {3, 2}}), AnalyticsError::Kind::singular_fit);
}

/// Uncentered 2x2 normal equations solved in long double by Cramer's rule.
std::pair<long double, long double> normal_equations(const std::vector<SeriesPoint>& pts) {
    long double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& p : pts) {
        const long double x = std::log(static_cast<long double>(p.x));
        const long double y = std::log(static_cast<long double>(p.y));
        n += 1;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const long double det = n * sxx - sx * sx;
    return {(sy * sxx - sx * sxy) / det, (n * sxy - sx * sy) / det};
}

TEST(FitLogLog, MatchesNormalEquationsOracle) {
    std::mt19937_64 gen(99);
    std::uniform_real_distribution<double> coef(0.1, 3.0), sign(-1.0, 1.0), xs(1.0, 30.0), noise(-0.3, 0.3);
    std::uniform_int_distribution<int> count(5, 40);
    for (int instance = 0; instance < 100; ++instance) {
        const double c = coef(gen) * (sign(gen) < 0 ? -1 : 1);
        const double m = coef(gen) * (sign(gen) < 0 ? -1 : 1);
        std::vector<SeriesPoint> pts;
        const int n = count(gen);
        for (int i = 0; i < n; ++i) {
            const double x = xs(gen);
            pts.push_back({x, std::exp(c + m * std::log(x) + noise(gen))});
        }
        const auto [a, b] = normal_equations(pts);
        const auto fit = fit_loglog(pts);
        EXPECT_LE(std::fabs((fit.intercept - a) / a), 1e-12) << instance;
        EXPECT_LE(std::fabs((fit.slope - b) / b), 1e-12) << instance;
    }
}

std::vector<UserEvent> small_simulated_log(std::uint64_t seed) {
    SimulationConfig sim;
    sim.groups = {SimulationGroup{"control", 300, 0.5, -0.3, 0.6, -0.3, 1.0},
                  SimulationGroup{"test", 300, 0.6, -0.1, 0.7, -0.2, 2.0}};
    sim.horizon_days = 12;
    sim.seed = seed;
    return simulate(sim);
}

std::string report_bytes(const std::vector<UserEvent>& log, const ExperimentConfig& config) {
    return report_to_json(build_report(EventIndex(log), config)).dump(2);
}

TEST(Report, PermutingLinesIsBitIdentical) {
    const auto log = small_simulated_log(5);
    const auto config = two_cohorts(2.0);
    const std::string expected = report_bytes(log, config);
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 3; ++trial) {
        auto shuffled = log;
        std::shuffle(shuffled.begin(), shuffled.end(), gen);
        EXPECT_EQ(report_bytes(shuffled, config), expected);
    }
}

TEST(Report, DuplicatingUsersInBothCohortsChangesNothing) {
    const auto log = small_simulated_log(6);
    auto doubled = log;
    for (auto e : log) {
        e.user_id += "-copy";
        doubled.push_back(e);
    }
    const auto config = two_cohorts();
    const auto a = build_report(EventIndex(log), config);
    const auto b = build_report(EventIndex(doubled), config);
    ASSERT_FALSE(a.any_failed());
    const auto& ra = a.groups[1];
    const auto& rb = b.groups[1];
    EXPECT_EQ(ra.retention.points, rb.retention.points);
    EXPECT_EQ(ra.engagement.points, rb.engagement.points);
    EXPECT_EQ(*ra.delta_zeta, *rb.delta_zeta);
    EXPECT_EQ(*ra.delta_beta, *rb.delta_beta);
    EXPECT_EQ(*ra.delta_alpha, *rb.delta_alpha);
    EXPECT_EQ(*ra.delta_gamma, *rb.delta_gamma);
}

TEST(Report, SelfComparisonIsExactlyZero) {
    const EventIndex index(small_simulated_log(7));
    const auto q = retention_ratio(index, "test", "test", 12, kDay);
    for (const auto& p : q.points) ASSERT_EQ(p.y, 1.0);
    const auto r = engagement_ratio(index, "test", "test", EngagementWindow{});
    for (const auto& p : r.points) ASSERT_EQ(p.y, 1.0);
    const auto fq = fit_loglog(q.points);
    const auto fr = fit_loglog(r.points);
    EXPECT_EQ(fq.intercept, 0.0);
    EXPECT_EQ(fq.slope, 0.0);
    EXPECT_EQ(fr.intercept, 0.0);
    EXPECT_EQ(fr.slope, 0.0);
}

TEST(Report, ControlRowAndFlopRatio) {
    const auto report = build_report(EventIndex(small_simulated_log(8)), two_cohorts(2.2));
    ASSERT_EQ(report.groups.size(), 2u);
    const auto& control = report.groups[0];
    EXPECT_EQ(control.name, "control");
    EXPECT_EQ(*control.delta_zeta, 0.0);
    EXPECT_EQ(*control.delta_gamma, 0.0);
    EXPECT_EQ(control.flop_ratio, 1.0);
    EXPECT_EQ(report.groups[1].flop_ratio, 2.2);

    const Json j = report_to_json(report);
    EXPECT_EQ(j["control"], "control");
    EXPECT_EQ(j["groups"][0]["delta_beta"], 0.0);
    EXPECT_EQ(j["groups"][1]["name"], "test");
}

TEST(Report, SingleGroupHasOnlyControlRow) {
    auto config = two_cohorts();
    config.groups.pop_back();
    config.groups[0].allocation = 1.0;
    const auto report = build_report(EventIndex({join(0, "u", "control"), turn(1, "u", "control")}), config);
    ASSERT_EQ(report.groups.size(), 1u);
    EXPECT_FALSE(report.any_failed());
}

TEST(Report, FailedFitMarksRowOnly) {
    // Control never returns: every retention ratio point is dropped.
    const std::vector<UserEvent> log{join(0, "c", "control"), join(0, "t", "test"), turn(1.5, "t", "test"),
                                     turn(2.5, "t", "test")};
    const auto report = build_report(EventIndex(log), two_cohorts());
    EXPECT_TRUE(report.any_failed());
    EXPECT_TRUE(report.groups[1].failed());
    EXPECT_FALSE(report.groups[0].failed());
    EXPECT_TRUE(report_to_json(report)["groups"][1].contains("error"));
}

TEST(Report, GoldenRow) {
    EXPECT_EQ(format_report_row("Blended", 0.2, 0.5, 2.1, 1.7, 1.4), "Blended Δζ=0.2 Δβ=0.5 Δγ=2.1 Δα=1.7 FLOP=1.4");
    EXPECT_EQ(format_report_row("Pygmillion", 0, -0.0, 0, 0, 1.0), "Pygmillion Δζ=0.0 Δβ=0.0 Δγ=0.0 Δα=0.0 FLOP=1.0");
    EXPECT_EQ(format_report_row("GPT3.5", -0.04, 0.0, 0.0, 0.0, 29.2), "GPT3.5 Δζ=0.0 Δβ=0.0 Δγ=0.0 Δα=0.0 FLOP=29.2");
}

TEST(Report, SeriesCsvExcludesControl) {
    const auto report = build_report(EventIndex(small_simulated_log(9)), two_cohorts());
    std::ostringstream retention, engagement;
    write_retention_csv(retention, report);
    write_engagement_csv(engagement, report);
    EXPECT_EQ(retention.str().rfind("group,k,q\ntest,1,", 0), 0u);
    EXPECT_EQ(engagement.str().rfind("group,t,r\ntest,1", 0), 0u) << engagement.str().substr(0, 80);
    EXPECT_EQ(retention.str().find("control"), std::string::npos);
}

}  // namespace
}  // namespace blendgate
