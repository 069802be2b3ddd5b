#pragma once

#include <cstdio>
#include <functional>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "blendgate/errors.hpp"

namespace blendgate {

enum class EventKind { user_joined, user_turn, bot_turn, regenerate };

std::string_view to_string(EventKind kind);
EventKind event_kind_from_string(std::string_view name);

/// One line of the append-only event log.
struct UserEvent {
    double ts = 0.0;  ///< seconds since the UTC epoch
    std::string user_id;
    std::string cohort;
    std::optional<std::string> session_id;
    EventKind event = EventKind::user_joined;
    std::optional<std::string> model_id;
    std::optional<int> turn_index;

    bool operator==(const UserEvent&) const = default;
};

/// Throws ValidationError for events that break the per-event schema rules
/// (empty ids, non-finite ts, bot_turn without model_id, negative turn_index).
void validate_event(const UserEvent& event);

/// Single-line JSON, fields in wire order; nulls are written explicitly.
std::string serialize_event(const UserEvent& event);

/// Inverse of serialize_event. Throws ValidationError on malformed lines.
UserEvent parse_event(std::string_view line);

/// Parses every non-blank line. Errors carry "<source>:<line>".
std::vector<UserEvent> parse_log(std::string_view text, std::string_view source = "<log>");

/// Reads and concatenates the given files in order.
std::vector<UserEvent> read_log_files(const std::vector<std::filesystem::path>& paths);

/// Whole-log checks: each user has exactly one user_joined, it is their earliest
/// event, and their cohort never changes. Throws ValidationError.
void validate_log(const std::vector<UserEvent>& events);

/// Checks that ts never decreases in file order. Throws ValidationError.
void validate_log_order(const std::vector<UserEvent>& events);

/// Single writer over one append-only JSONL file. Every append is flushed (and by
/// default fsync'ed) before it returns. Timestamps are taken under the writer lock
/// and clamped to be nondecreasing.
class EventLogWriter {
public:
    using Clock = std::function<double()>;

    EventLogWriter(std::filesystem::path path, Clock clock, bool sync = true);
    ~EventLogWriter();

    EventLogWriter(const EventLogWriter&) = delete;
    EventLogWriter& operator=(const EventLogWriter&) = delete;

    /// Stamps `event.ts` and appends it. Returns the stamped event.
    UserEvent append(UserEvent event);

    /// Stamps and appends a user_joined event unless the user already has one in this
    /// log (including lines written by earlier processes). Returns true if written.
    bool append_join_once(const std::string& user_id, const std::string& cohort);

    const std::filesystem::path& path() const noexcept { return path_; }
    std::size_t appended() const;

private:
    UserEvent write_locked(UserEvent event);

    std::filesystem::path path_;
    Clock clock_;
    bool sync_;
    std::FILE* file_ = nullptr;
    mutable std::mutex mutex_;
    double last_ts_ = 0.0;
    std::size_t appended_ = 0;
    std::unordered_set<std::string> joined_;
};

/// Wall-clock seconds since the epoch.
double system_clock_seconds();

}  // namespace blendgate
