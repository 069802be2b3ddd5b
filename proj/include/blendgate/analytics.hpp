#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "blendgate/errors.hpp"
#include "blendgate/events.hpp"
#include "blendgate/experiment.hpp"

namespace blendgate {

class AnalyticsError : public Error {
public:
    enum class Kind { empty_cohort, degenerate_series, insufficient_data, singular_fit };

    AnalyticsError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Per-user view of an event log. Built once, queried by every metric. Nothing here
/// depends on line order: joins and day offsets are derived from timestamps.
class EventIndex {
public:
    /// Validates the log (see validate_log) before indexing.
    explicit EventIndex(const std::vector<UserEvent>& events);

    struct User {
        std::string cohort;
        double join_ts = 0.0;
        std::vector<double> event_ts;  ///< every event including the join, ascending
    };

    /// Users of one cohort, ordered by user id.
    std::vector<const User*> cohort_users(const std::string& cohort) const;
    std::size_t cohort_size(const std::string& cohort) const;

    /// Earliest join in the whole log; engagement time is measured from here.
    double origin_ts() const noexcept { return origin_ts_; }
    double last_ts() const noexcept { return last_ts_; }

    /// Largest per-user day offset observed among the cohort's events.
    int max_day_index(const std::string& cohort, double day_length) const;

private:
    std::unordered_map<std::string, User> users_;
    double origin_ts_ = 0.0;
    double last_ts_ = 0.0;
};

struct RetentionPoint {
    int k = 0;
    std::size_t active_users = 0;
    std::size_t cohort_size = 0;
    double rate = 0.0;
};

struct EngagementPoint {
    double t = 0.0;
    double value = 0.0;
};

struct SeriesPoint {
    double x = 0.0;
    double y = 0.0;

    bool operator==(const SeriesPoint&) const = default;
};

/// Test-to-control ratio curve. `dropped` counts abscissae where the control was 0.
struct RatioSeries {
    std::vector<SeriesPoint> points;
    int dropped = 0;
};

struct FitResult {
    double intercept = 0.0;
    double slope = 0.0;
    int points_used = 0;
    int points_dropped = 0;
};

/// Fraction of the cohort active on day k after joining, where a user's day index is
/// floor((ts - join_ts) / day_length). Throws AnalyticsError(empty_cohort).
RetentionPoint retention_rate(const EventIndex& log, const std::string& cohort, int k,
                              double day_length);

/// q(k) = R_test(k) / R_control(k) for k = 1..k_max.
RatioSeries retention_ratio(const EventIndex& log, const std::string& test,
                            const std::string& control, int k_max, double day_length);

/// Ordinary least squares of log y on log x. Points with x <= 0 or y <= 0 are
/// dropped and counted. Throws AnalyticsError(insufficient_data) for fewer than two
/// usable points and AnalyticsError(singular_fit) when all usable x are equal.
FitResult fit_loglog(std::span<const SeriesPoint> series);

struct EngagementWindow {
    double bin_width_days = 1.0;
    double delta_days = 0.5;
    double day_length = 86'400.0;
    /// Last bin center (days). Defaults to the log's span from origin_ts to last_ts.
    std::optional<double> t_max;
};

/// E(t) at centers t = w, 2w, ...: the fraction of the cohort with at least one event
/// whose time since origin lies in [t - delta, t + delta]. Denominator is every joined
/// cohort user. Throws AnalyticsError(empty_cohort).
std::vector<EngagementPoint> engagement_series(const EventIndex& log, const std::string& cohort,
                                               const EngagementWindow& window);

/// r(t) = E_test(t) / E_control(t), over the same centers.
RatioSeries engagement_ratio(const EventIndex& log, const std::string& test,
                             const std::string& control, const EngagementWindow& window);

struct GroupReport {
    std::string name;
    std::optional<double> delta_zeta;
    std::optional<double> delta_beta;
    std::optional<double> delta_gamma;
    std::optional<double> delta_alpha;
    double flop_ratio = 1.0;
    std::optional<std::string> error;  ///< set when any fit for this group failed
    RatioSeries retention;
    RatioSeries engagement;

    bool failed() const noexcept { return error.has_value(); }
};

struct ComparisonReport {
    std::string control;
    std::vector<GroupReport> groups;  ///< config order; the control row is all zeros

    bool any_failed() const;
};

struct ReportOptions {
    double bin_width_days = 1.0;
    std::optional<int> k_max;  ///< default: largest day index seen in either cohort
};

/// One row per configured group. Fit failures mark the row instead of throwing.
ComparisonReport build_report(const EventIndex& log, const ExperimentConfig& config,
                              const ReportOptions& options = {});

/// {"groups":[{"name":..,"delta_zeta":..,"delta_beta":..,"delta_gamma":..,
///  "delta_alpha":..,"flop_ratio":..}],"control":".."}; failed rows also carry "error".
Json report_to_json(const ComparisonReport& report);

/// "Blended Δζ=0.2 Δβ=0.5 Δγ=2.1 Δα=1.7 FLOP=1.4"; one decimal, like a summary table.
std::string format_report_row(const std::string& name, double delta_zeta, double delta_beta,
                              double delta_gamma, double delta_alpha, double flop_ratio);
std::string format_report_row(const GroupReport& row);

/// Retention rows "group,k,q" and engagement rows "group,t,r" (control excluded).
void write_retention_csv(std::ostream& out, const ComparisonReport& report);
void write_engagement_csv(std::ostream& out, const ComparisonReport& report);

}  // namespace blendgate
