#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include "blendgate/blend.hpp"
#include "blendgate/events.hpp"
#include "blendgate/experiment.hpp"
#include "blendgate/history.hpp"
#include "blendgate/rng.hpp"

namespace blendgate {

/// Request-level failure with the HTTP status class it maps to.
class GatewayError : public Error {
public:
    GatewayError(int status, const std::string& message) : Error(message), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

struct SessionInfo {
    std::string session_id;
    std::string user_id;
    std::string cohort;
    double created_ts = 0.0;
};

struct TurnResult {
    std::string response;
    std::string model_id;  ///< always filled; the HTTP layer decides whether to expose it
    int turn_index = 0;
};

/// Sessions, cohorts and the turn loop. Sessions live in memory; the event log is the
/// durable record. Turns on one session are serialized: a second concurrent request
/// on the same session fails with 409 instead of waiting.
class Gateway {
public:
    using Clock = EventLogWriter::Clock;

    Gateway(ExperimentConfig config, std::filesystem::path log_path,
            Clock clock = system_clock_seconds, bool sync_log = true);

    const ExperimentConfig& config() const noexcept { return config_; }
    const std::filesystem::path& log_path() const noexcept { return log_.path(); }

    /// Logs user_joined on the user's first-ever contact with this log.
    SessionInfo create_session(const std::string& user_id);

    /// 404 unknown session, 400 empty text, 409 concurrent turn, 502 backend failure.
    /// The user_turn event is logged even when the backend fails; the history is
    /// rolled back so the session stays usable.
    TurnResult post_turn(const std::string& session_id, const std::string& text);

    /// Re-draws the serving model and replaces the last bot turn. Logs a regenerate
    /// event (replaced model and turn index), then a bot_turn for the new reply.
    /// 409 when there is no bot turn to replace.
    TurnResult regenerate(const std::string& session_id);

    std::optional<ChatHistory> history(const std::string& session_id) const;
    std::size_t session_count() const;

private:
    struct Session {
        SessionInfo info;
        Ensemble ensemble;
        ChatHistory history;
        Rng rng;
        std::mutex busy;
    };

    std::shared_ptr<Session> find(const std::string& session_id) const;
    std::string next_session_id();

    ExperimentConfig config_;
    Clock clock_;
    EventLogWriter log_;
    mutable std::shared_mutex sessions_mutex_;
    std::unordered_map<std::string, std::shared_ptr<Session>> sessions_;
    std::atomic<std::uint64_t> session_counter_{0};
};

/// JSON HTTP front end for a Gateway:
///   POST /v1/sessions, POST /v1/sessions/{id}/turns, POST /v1/sessions/{id}/regenerate,
///   GET /v1/healthz
class HttpServer {
public:
    explicit HttpServer(Gateway& gateway);
    ~HttpServer();

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds; port 0 picks a free port. Returns the bound port or throws Error.
    int bind(const std::string& host, int port);

    /// Serves until stop(). Call after bind().
    void listen();

    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Default log file location for an experiment inside `log_dir`.
std::filesystem::path event_log_path(const std::filesystem::path& log_dir,
                                     const ExperimentConfig& config);

}  // namespace blendgate
