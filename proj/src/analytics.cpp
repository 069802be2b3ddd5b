#include "blendgate/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace blendgate {

EventIndex::EventIndex(const std::vector<UserEvent>& events) {
    validate_log(events);
    bool first = true;
    for (const auto& e : events) {
        User& user = users_[e.user_id];
        user.cohort = e.cohort;
        user.event_ts.push_back(e.ts);
        if (e.event == EventKind::user_joined) {
            user.join_ts = e.ts;
            origin_ts_ = first ? e.ts : std::min(origin_ts_, e.ts);
            first = false;
        }
        last_ts_ = std::max(last_ts_, e.ts);
    }
    for (auto& [id, user] : users_) std::sort(user.event_ts.begin(), user.event_ts.end());
}

std::vector<const EventIndex::User*> EventIndex::cohort_users(const std::string& cohort) const {
    std::vector<std::pair<std::string_view, const User*>> members;
    for (const auto& [id, user] : users_) {
        if (user.cohort == cohort) members.emplace_back(id, &user);
    }
    std::sort(members.begin(), members.end());
    std::vector<const User*> out;
    out.reserve(members.size());
    for (const auto& [id, user] : members) out.push_back(user);
    return out;
}

std::size_t EventIndex::cohort_size(const std::string& cohort) const {
    return static_cast<std::size_t>(
        std::count_if(users_.begin(), users_.end(), [&](const auto& kv) { return kv.second.cohort == cohort; }));
}

namespace {

long day_index(double ts, double join_ts, double day_length) {
    return static_cast<long>(std::floor((ts - join_ts) / day_length));
}

std::vector<const EventIndex::User*> nonempty_cohort(const EventIndex& log, const std::string& cohort) {
    auto users = log.cohort_users(cohort);
    if (users.empty()) {
        throw AnalyticsError(AnalyticsError::Kind::empty_cohort, "cohort \"" + cohort + "\" has no joined users");
    }
    return users;
}

/// active[k] = number of cohort users with an event on day k, for k in [0, k_max].
std::vector<std::size_t> active_per_day(const std::vector<const EventIndex::User*>& users, int k_max,
                                        double day_length) {
    std::vector<std::size_t> active(static_cast<std::size_t>(k_max) + 1, 0);
    for (const auto* user : users) {
        long previous = -1;
        for (double ts : user->event_ts) {
            const long k = day_index(ts, user->join_ts, day_length);
            if (k == previous) continue;
            previous = k;
            if (k >= 0 && k <= k_max) ++active[static_cast<std::size_t>(k)];
        }
    }
    return active;
}

std::vector<double> engagement_values(const std::vector<const EventIndex::User*>& users, double origin,
                                      const std::vector<double>& centers, const EngagementWindow& window) {
    std::vector<std::size_t> engaged(centers.size(), 0);
    std::vector<double> days;
    for (const auto* user : users) {
        days.clear();
        for (double ts : user->event_ts) days.push_back((ts - origin) / window.day_length);
        for (std::size_t j = 0; j < centers.size(); ++j) {
            const double lo = centers[j] - window.delta_days;
            const double hi = centers[j] + window.delta_days;
            const auto it = std::lower_bound(days.begin(), days.end(), lo);
            if (it != days.end() && *it <= hi) ++engaged[j];
        }
    }
    std::vector<double> values(centers.size());
    for (std::size_t j = 0; j < centers.size(); ++j) {
        values[j] = static_cast<double>(engaged[j]) / static_cast<double>(users.size());
    }
    return values;
}

std::vector<double> bin_centers(const EventIndex& log, const EngagementWindow& window) {
    if (!(window.bin_width_days > 0.0)) throw ArgumentError("bin width must be > 0");
    if (!(window.delta_days > 0.0)) throw ArgumentError("engagement delta must be > 0");
    if (!(window.day_length > 0.0)) throw ArgumentError("day length must be > 0");
    const double t_max = window.t_max.value_or((log.last_ts() - log.origin_ts()) / window.day_length);
    std::vector<double> centers;
    for (long j = 1;; ++j) {
        const double t = static_cast<double>(j) * window.bin_width_days;
        if (t > t_max) break;
        centers.push_back(t);
    }
    return centers;
}

RatioSeries ratio_of(const std::vector<double>& xs, const std::vector<double>& test,
                     const std::vector<double>& control, const char* what) {
    RatioSeries series;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (control[i] == 0.0) {
            ++series.dropped;
            continue;
        }
        series.points.push_back({xs[i], test[i] / control[i]});
    }
    if (series.points.empty()) {
        throw AnalyticsError(AnalyticsError::Kind::degenerate_series,
                             std::string(what) + " ratio has no points with nonzero control");
    }
    return series;
}

}  // namespace

int EventIndex::max_day_index(const std::string& cohort, double day_length) const {
    long best = 0;
    for (const auto& [id, user] : users_) {
        if (user.cohort != cohort || user.event_ts.empty()) continue;
        best = std::max(best, day_index(user.event_ts.back(), user.join_ts, day_length));
    }
    return static_cast<int>(best);
}

RetentionPoint retention_rate(const EventIndex& log, const std::string& cohort, int k, double day_length) {
    if (k < 1) throw ArgumentError("retention day k must be >= 1");
    if (!(day_length > 0.0)) throw ArgumentError("day length must be > 0");
    const auto users = nonempty_cohort(log, cohort);
    RetentionPoint point;
    point.k = k;
    point.cohort_size = users.size();
    for (const auto* user : users) {
        const bool active = std::any_of(user->event_ts.begin(), user->event_ts.end(), [&](double ts) {
            return day_index(ts, user->join_ts, day_length) == k;
        });
        if (active) ++point.active_users;
    }
    point.rate = static_cast<double>(point.active_users) / static_cast<double>(point.cohort_size);
    return point;
}

RatioSeries retention_ratio(const EventIndex& log, const std::string& test, const std::string& control,
                            int k_max, double day_length) {
    if (k_max < 1) throw ArgumentError("k_max must be >= 1");
    if (!(day_length > 0.0)) throw ArgumentError("day length must be > 0");
    const auto test_users = nonempty_cohort(log, test);
    const auto control_users = nonempty_cohort(log, control);
    const auto test_active = active_per_day(test_users, k_max, day_length);
    const auto control_active = active_per_day(control_users, k_max, day_length);

    std::vector<double> ks, test_rate, control_rate;
    for (int k = 1; k <= k_max; ++k) {
        ks.push_back(k);
        test_rate.push_back(static_cast<double>(test_active[k]) / static_cast<double>(test_users.size()));
        control_rate.push_back(static_cast<double>(control_active[k]) / static_cast<double>(control_users.size()));
    }
    return ratio_of(ks, test_rate, control_rate, "retention");
}

FitResult fit_loglog(std::span<const SeriesPoint> series) {
    std::vector<double> lx, ly;
    FitResult fit;
    for (const auto& p : series) {
        if (p.x > 0.0 && p.y > 0.0 && std::isfinite(p.x) && std::isfinite(p.y)) {
            lx.push_back(std::log(p.x));
            ly.push_back(std::log(p.y));
        } else {
            ++fit.points_dropped;
        }
    }
    fit.points_used = static_cast<int>(lx.size());
    if (lx.size() < 2) {
        throw AnalyticsError(AnalyticsError::Kind::insufficient_data,
                             "log-log fit needs at least 2 positive points, got " + std::to_string(lx.size()));
    }
    if (std::all_of(lx.begin(), lx.end(), [&](double v) { return v == lx.front(); })) {
        throw AnalyticsError(AnalyticsError::Kind::singular_fit, "log-log fit: all x values are equal");
    }

    const double n = static_cast<double>(lx.size());
    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mean_x += lx[i];
        mean_y += ly[i];
    }
    mean_x /= n;
    mean_y /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        const double dx = lx[i] - mean_x;
        sxx += dx * dx;
        sxy += dx * (ly[i] - mean_y);
    }
    fit.slope = sxy / sxx;
    fit.intercept = mean_y - fit.slope * mean_x;
    return fit;
}

std::vector<EngagementPoint> engagement_series(const EventIndex& log, const std::string& cohort,
                                               const EngagementWindow& window) {
    const auto users = nonempty_cohort(log, cohort);
    const auto centers = bin_centers(log, window);
    const auto values = engagement_values(users, log.origin_ts(), centers, window);
    std::vector<EngagementPoint> out;
    for (std::size_t j = 0; j < centers.size(); ++j) out.push_back({centers[j], values[j]});
    return out;
}

RatioSeries engagement_ratio(const EventIndex& log, const std::string& test, const std::string& control,
                             const EngagementWindow& window) {
    const auto test_users = nonempty_cohort(log, test);
    const auto control_users = nonempty_cohort(log, control);
    const auto centers = bin_centers(log, window);
    return ratio_of(centers, engagement_values(test_users, log.origin_ts(), centers, window),
                    engagement_values(control_users, log.origin_ts(), centers, window), "engagement");
}

bool ComparisonReport::any_failed() const {
    return std::any_of(groups.begin(), groups.end(), [](const GroupReport& g) { return g.failed(); });
}

ComparisonReport build_report(const EventIndex& log, const ExperimentConfig& config, const ReportOptions& options) {
    config.validate();
    ComparisonReport report;
    report.control = config.control_group;
    const double day = config.day_length_seconds;
    const EngagementWindow window{options.bin_width_days, config.engagement_delta_seconds / day, day, std::nullopt};
    const double control_cost = expected_cost(config.control().policy);

    for (const auto& group : config.groups) {
        GroupReport row;
        row.name = group.group_name;
        if (group.group_name == config.control_group) {
            row.delta_zeta = row.delta_beta = row.delta_gamma = row.delta_alpha = 0.0;
            row.flop_ratio = 1.0;
            report.groups.push_back(std::move(row));
            continue;
        }
        row.flop_ratio = expected_cost(group.policy) / control_cost;
        std::vector<std::string> errors;
        try {
            const int k_max = options.k_max.value_or(std::max(
                {1, log.max_day_index(group.group_name, day), log.max_day_index(config.control_group, day)}));
            row.retention = retention_ratio(log, group.group_name, config.control_group, k_max, day);
            const FitResult fit = fit_loglog(row.retention.points);
            row.delta_zeta = fit.intercept;
            row.delta_beta = fit.slope;
        } catch (const Error& e) {
            errors.push_back(std::string("retention: ") + e.what());
        }
        try {
            row.engagement = engagement_ratio(log, group.group_name, config.control_group, window);
            const FitResult fit = fit_loglog(row.engagement.points);
            row.delta_alpha = fit.intercept;
            row.delta_gamma = fit.slope;
        } catch (const Error& e) {
            errors.push_back(std::string("engagement: ") + e.what());
        }
        if (!errors.empty()) {
            std::string message = errors.front();
            for (std::size_t i = 1; i < errors.size(); ++i) message += "; " + errors[i];
            row.error = std::move(message);
        }
        report.groups.push_back(std::move(row));
    }
    return report;
}

namespace {

Json number_or_null(const std::optional<double>& v) {
    if (!v) return Json(nullptr);
    return Json(*v == 0.0 ? 0.0 : *v);  // no "-0.0" in reports
}

std::string fixed1(double v) {
    char buffer[64];
    std::snprintf(buffer, sizeof buffer, "%.1f", v);
    std::string s = buffer;
    return s == "-0.0" ? "0.0" : s;
}

std::string shortest(double v) {
    return Json(v == 0.0 ? 0.0 : v).dump();
}

}  // namespace

Json report_to_json(const ComparisonReport& report) {
    Json groups = Json::array();
    for (const auto& g : report.groups) {
        Json row{{"name", g.name},
                 {"delta_zeta", number_or_null(g.delta_zeta)},
                 {"delta_beta", number_or_null(g.delta_beta)},
                 {"delta_gamma", number_or_null(g.delta_gamma)},
                 {"delta_alpha", number_or_null(g.delta_alpha)},
                 {"flop_ratio", number_or_null(g.flop_ratio)}};
        if (g.error) row["error"] = *g.error;
        groups.push_back(std::move(row));
    }
    return Json{{"groups", std::move(groups)}, {"control", report.control}};
}

std::string format_report_row(const std::string& name, double delta_zeta, double delta_beta, double delta_gamma,
                              double delta_alpha, double flop_ratio) {
    return name + " Δζ=" + fixed1(delta_zeta) + " Δβ=" + fixed1(delta_beta) + " Δγ=" + fixed1(delta_gamma) +
           " Δα=" + fixed1(delta_alpha) + " FLOP=" + fixed1(flop_ratio);
}

std::string format_report_row(const GroupReport& row) {
    if (row.failed()) return row.name + " FAILED (" + *row.error + ")";
    return format_report_row(row.name, *row.delta_zeta, *row.delta_beta, *row.delta_gamma, *row.delta_alpha,
                             row.flop_ratio);
}

void write_retention_csv(std::ostream& out, const ComparisonReport& report) {
    out << "group,k,q\n";
    for (const auto& g : report.groups) {
        if (g.name == report.control) continue;
        for (const auto& p : g.retention.points) {
            out << g.name << ',' << static_cast<long>(p.x) << ',' << shortest(p.y) << '\n';
        }
    }
}

void write_engagement_csv(std::ostream& out, const ComparisonReport& report) {
    out << "group,t,r\n";
    for (const auto& g : report.groups) {
        if (g.name == report.control) continue;
        for (const auto& p : g.engagement.points) out << g.name << ',' << shortest(p.x) << ',' << shortest(p.y) << '\n';
    }
}

}  // namespace blendgate
