#include "blendgate/events.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include "blendgate/json.hpp"

namespace blendgate {

std::string_view to_string(EventKind kind) {
    switch (kind) {
        case EventKind::user_joined: return "user_joined";
        case EventKind::user_turn: return "user_turn";
        case EventKind::bot_turn: return "bot_turn";
        case EventKind::regenerate: return "regenerate";
    }
    return "user_joined";
}

EventKind event_kind_from_string(std::string_view name) {
    if (name == "user_joined") return EventKind::user_joined;
    if (name == "user_turn") return EventKind::user_turn;
    if (name == "bot_turn") return EventKind::bot_turn;
    if (name == "regenerate") return EventKind::regenerate;
    throw ValidationError("unknown event kind \"" + std::string(name) + "\"");
}

void validate_event(const UserEvent& event) {
    if (!std::isfinite(event.ts)) throw ValidationError("event ts is not finite");
    if (event.user_id.empty()) throw ValidationError("event has empty user_id");
    if (event.cohort.empty()) throw ValidationError("event has empty cohort");
    if (event.event == EventKind::bot_turn && !event.model_id) {
        throw ValidationError("bot_turn event without model_id");
    }
    if (event.turn_index && *event.turn_index < 0) throw ValidationError("negative turn_index");
}

std::string serialize_event(const UserEvent& event) {
    auto optional = [](const auto& value) -> Json {
        if (value) return Json(*value);
        return Json(nullptr);
    };
    const Json line{{"ts", event.ts},
                    {"user_id", event.user_id},
                    {"cohort", event.cohort},
                    {"session_id", optional(event.session_id)},
                    {"event", to_string(event.event)},
                    {"model_id", optional(event.model_id)},
                    {"turn_index", optional(event.turn_index)}};
    return line.dump();
}

namespace {

std::optional<std::string> optional_string(const Json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ValidationError(std::string(key) + " must be a string or null");
    return it->get<std::string>();
}

std::string required_string(const Json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw ValidationError(std::string(key) + " must be a string");
    return it->get<std::string>();
}

}  // namespace

UserEvent parse_event(std::string_view line) {
    const Json j = Json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) throw ValidationError("event line is not a JSON object");
    UserEvent event;
    const auto ts = j.find("ts");
    if (ts == j.end() || !ts->is_number()) throw ValidationError("ts must be a number");
    event.ts = ts->get<double>();
    event.user_id = required_string(j, "user_id");
    event.cohort = required_string(j, "cohort");
    event.session_id = optional_string(j, "session_id");
    event.event = event_kind_from_string(required_string(j, "event"));
    event.model_id = optional_string(j, "model_id");
    const auto turn = j.find("turn_index");
    if (turn != j.end() && !turn->is_null()) {
        if (!turn->is_number_integer()) throw ValidationError("turn_index must be an integer or null");
        event.turn_index = turn->get<int>();
    }
    validate_event(event);
    return event;
}

std::vector<UserEvent> parse_log(std::string_view text, std::string_view source) {
    std::vector<UserEvent> events;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto end = text.find('\n');
        std::string_view line = text.substr(0, end);
        text = end == std::string_view::npos ? std::string_view{} : text.substr(end + 1);
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        try {
            events.push_back(parse_event(line));
        } catch (const ValidationError& e) {
            throw ValidationError(std::string(source) + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return events;
}

std::vector<UserEvent> read_log_files(const std::vector<std::filesystem::path>& paths) {
    std::vector<UserEvent> events;
    for (const auto& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot open event log " + path.string());
        std::ostringstream buffer;
        buffer << in.rdbuf();
        auto part = parse_log(buffer.str(), path.string());
        events.insert(events.end(), std::make_move_iterator(part.begin()),
                      std::make_move_iterator(part.end()));
    }
    return events;
}

void validate_log(const std::vector<UserEvent>& events) {
    struct Seen {
        const UserEvent* join = nullptr;
        double earliest = INFINITY;
        const std::string* cohort = nullptr;
    };
    std::map<std::string_view, Seen> users;
    for (const auto& e : events) {
        Seen& seen = users[e.user_id];
        if (seen.cohort && *seen.cohort != e.cohort) {
            throw ValidationError("user " + e.user_id + " appears in cohorts " + *seen.cohort + " and " + e.cohort);
        }
        seen.cohort = &e.cohort;
        if (e.event == EventKind::user_joined) {
            if (seen.join) throw ValidationError("user " + e.user_id + " joined twice");
            seen.join = &e;
        }
        seen.earliest = std::min(seen.earliest, e.ts);
    }
    for (const auto& [user, seen] : users) {
        if (!seen.join) throw ValidationError("user " + std::string(user) + " has events but no user_joined");
        if (seen.earliest < seen.join->ts) {
            throw ValidationError("user " + std::string(user) + " has events before user_joined");
        }
    }
}

void validate_log_order(const std::vector<UserEvent>& events) {
    for (std::size_t i = 1; i < events.size(); ++i) {
        if (events[i].ts < events[i - 1].ts) {
            throw ValidationError("event " + std::to_string(i + 1) + " goes back in time");
        }
    }
}

EventLogWriter::EventLogWriter(std::filesystem::path path, Clock clock, bool sync)
    : path_(std::move(path)), clock_(std::move(clock)), sync_(sync) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    if (std::filesystem::exists(path_)) {
        // Resume: keep join uniqueness and ts ordering across restarts.
        for (const auto& e : read_log_files({path_})) {
            if (e.event == EventKind::user_joined) joined_.insert(e.user_id);
            last_ts_ = std::max(last_ts_, e.ts);
        }
    }
    file_ = std::fopen(path_.c_str(), "ab");
    if (!file_) throw Error("cannot open event log " + path_.string() + " for appending");
}

EventLogWriter::~EventLogWriter() {
    if (file_) std::fclose(file_);
}

UserEvent EventLogWriter::write_locked(UserEvent event) {
    event.ts = std::max(clock_(), last_ts_);
    validate_event(event);
    const std::string line = serialize_event(event) + "\n";
    if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0) {
        throw Error("event log write failed: " + path_.string());
    }
    if (sync_ && ::fsync(::fileno(file_)) != 0) throw Error("event log fsync failed: " + path_.string());
    last_ts_ = event.ts;
    ++appended_;
    return event;
}

UserEvent EventLogWriter::append(UserEvent event) {
    std::lock_guard lock(mutex_);
    UserEvent written = write_locked(std::move(event));
    if (written.event == EventKind::user_joined) joined_.insert(written.user_id);
    return written;
}

bool EventLogWriter::append_join_once(const std::string& user_id, const std::string& cohort) {
    std::lock_guard lock(mutex_);
    if (joined_.contains(user_id)) return false;
    UserEvent event;
    event.user_id = user_id;
    event.cohort = cohort;
    event.event = EventKind::user_joined;
    write_locked(std::move(event));
    joined_.insert(user_id);
    return true;
}

std::size_t EventLogWriter::appended() const {
    std::lock_guard lock(mutex_);
    return appended_;
}

double system_clock_seconds() {
    using namespace std::chrono;
    return duration<double>(system_clock::now().time_since_epoch()).count();
}

}  // namespace blendgate
