#include "blendgate/gateway.hpp"

#include <cstdio>

namespace blendgate {

Gateway::Gateway(ExperimentConfig config, std::filesystem::path log_path, Clock clock, bool sync_log)
    : config_(std::move(config)), clock_(clock), log_(std::move(log_path), std::move(clock), sync_log) {
    config_.validate();
}

std::string Gateway::next_session_id() {
    const std::uint64_t salt = stable_hash(config_.experiment_name, config_.seed);
    char buffer[24];
    const std::uint64_t n = session_counter_.fetch_add(1);
    std::snprintf(buffer, sizeof buffer, "s-%016llx", static_cast<unsigned long long>(mix64(salt + n)));
    return buffer;
}

SessionInfo Gateway::create_session(const std::string& user_id) {
    if (user_id.empty()) throw GatewayError(400, "user_id must be a nonempty string");
    const std::string& cohort = assign_cohort(user_id, config_);

    auto session = std::make_shared<Session>();
    session->info.user_id = user_id;
    session->info.cohort = cohort;
    session->ensemble = Ensemble::instantiate(config_.group(cohort).policy);

    try {
        log_.append_join_once(user_id, cohort);
    } catch (const Error& e) {
        throw GatewayError(500, e.what());
    }
    session->info.created_ts = clock_();

    std::unique_lock lock(sessions_mutex_);
    std::string id;
    do {
        id = next_session_id();
    } while (sessions_.contains(id));
    session->info.session_id = id;
    session->rng = Rng::for_stream(config_.seed, id);
    sessions_.emplace(id, session);
    return session->info;
}

std::shared_ptr<Gateway::Session> Gateway::find(const std::string& session_id) const {
    std::shared_lock lock(sessions_mutex_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw GatewayError(404, "unknown session " + session_id);
    return it->second;
}

namespace {

UserEvent session_event(const SessionInfo& info, EventKind kind, int turn_index,
                        std::optional<std::string> model_id = std::nullopt) {
    UserEvent event;
    event.user_id = info.user_id;
    event.cohort = info.cohort;
    event.session_id = info.session_id;
    event.event = kind;
    event.model_id = std::move(model_id);
    event.turn_index = turn_index;
    return event;
}

}  // namespace

TurnResult Gateway::post_turn(const std::string& session_id, const std::string& text) {
    auto session = find(session_id);
    if (text.empty()) throw GatewayError(400, "text must be a nonempty string");
    std::unique_lock busy(session->busy, std::try_to_lock);
    if (!busy.owns_lock()) throw GatewayError(409, "a turn is already in flight for " + session_id);

    const int index = session->history.next_turn_index();
    session->history.add_user(text);
    try {
        log_.append(session_event(session->info, EventKind::user_turn, index));
    } catch (const Error& e) {
        session->history.pop_back();
        throw GatewayError(500, e.what());
    }

    BlendedReply reply;
    try {
        reply = blended_reply(session->history, session->ensemble, session->rng);
    } catch (const BackendError& e) {
        session->history.pop_back();
        throw GatewayError(502, e.what());
    }
    session->history.add_bot(reply.response, reply.model_id);
    try {
        log_.append(session_event(session->info, EventKind::bot_turn, index, reply.model_id));
    } catch (const Error& e) {
        throw GatewayError(500, e.what());
    }
    return {std::move(reply.response), std::move(reply.model_id), index};
}

TurnResult Gateway::regenerate(const std::string& session_id) {
    auto session = find(session_id);
    std::unique_lock busy(session->busy, std::try_to_lock);
    if (!busy.owns_lock()) throw GatewayError(409, "a turn is already in flight for " + session_id);
    if (session->history.empty() || session->history.back().role != Role::bot) {
        throw GatewayError(409, "no bot turn to regenerate");
    }

    const Turn replaced = session->history.back();
    try {
        log_.append(session_event(session->info, EventKind::regenerate, replaced.turn_index, replaced.model_id));
    } catch (const Error& e) {
        throw GatewayError(500, e.what());
    }

    BlendedReply reply;
    try {
        reply = blended_reply(session->history.without_trailing_bot(), session->ensemble, session->rng);
    } catch (const BackendError& e) {
        throw GatewayError(502, e.what());
    }
    session->history.replace_last_bot(reply.response, reply.model_id);
    try {
        log_.append(session_event(session->info, EventKind::bot_turn, replaced.turn_index, reply.model_id));
    } catch (const Error& e) {
        throw GatewayError(500, e.what());
    }
    return {std::move(reply.response), std::move(reply.model_id), replaced.turn_index};
}

std::optional<ChatHistory> Gateway::history(const std::string& session_id) const {
    std::shared_ptr<Session> session;
    {
        std::shared_lock lock(sessions_mutex_);
        const auto it = sessions_.find(session_id);
        if (it == sessions_.end()) return std::nullopt;
        session = it->second;
    }
    std::lock_guard busy(session->busy);
    return session->history;
}

std::size_t Gateway::session_count() const {
    std::shared_lock lock(sessions_mutex_);
    return sessions_.size();
}

std::filesystem::path event_log_path(const std::filesystem::path& log_dir, const ExperimentConfig& config) {
    return log_dir / (config.experiment_name + ".events.jsonl");
}

}  // namespace blendgate
