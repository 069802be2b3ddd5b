#include "blendgate/backend.hpp"

#include <cmath>

namespace blendgate {

namespace {

std::string_view cause_name(BackendError::Cause cause) {
    switch (cause) {
        case BackendError::Cause::unavailable: return "backend unavailable";
        case BackendError::Cause::protocol: return "protocol error";
        case BackendError::Cause::script: return "script exhausted";
    }
    return "backend error";
}

}  // namespace

void GenParams::validate() const {
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
        throw ConfigError("temperature", "must be a finite value >= 0");
    }
    if (max_tokens < 1) throw ConfigError("max_tokens", "must be >= 1");
}

BackendError::BackendError(std::string model_id, Cause cause, const std::string& detail)
    : Error("model " + model_id + ": " + std::string(cause_name(cause)) +
            (detail.empty() ? "" : ": " + detail)),
      model_id_(std::move(model_id)),
      cause_(cause) {}

std::string Backend::generate(const ChatHistory& history, const GenParams& params, Rng& rng) {
    if (history.empty() || history.back().role != Role::user) {
        throw ArgumentError("generate needs a history ending in a user turn");
    }
    return do_generate(history, params, rng);
}

ScriptedBackend::ScriptedBackend(std::string model_id, std::vector<std::string> script)
    : Backend(std::move(model_id)), script_(std::move(script)) {}

std::size_t ScriptedBackend::position() const {
    std::lock_guard lock(mutex_);
    return next_;
}

std::string ScriptedBackend::do_generate(const ChatHistory&, const GenParams&, Rng&) {
    std::lock_guard lock(mutex_);
    if (next_ >= script_.size()) {
        throw BackendError(model_id(), BackendError::Cause::script,
                           "after " + std::to_string(script_.size()) + " responses");
    }
    return script_[next_++];
}

DiscreteLmBackend::DiscreteLmBackend(std::string model_id, ResponseDistribution fallback,
                                     std::map<std::string, ResponseDistribution> by_last_bot)
    : Backend(std::move(model_id)), default_(std::move(fallback)), by_last_bot_(std::move(by_last_bot)) {
    auto check = [this](const ResponseDistribution& d) {
        if (d.size() == 0) throw ValidationError(this->model_id() + ": empty distribution");
        for (const auto& response : d.support()) {
            if (response.empty()) {
                throw ValidationError(this->model_id() + ": responses must be nonempty");
            }
        }
    };
    check(default_);
    for (const auto& [key, d] : by_last_bot_) check(d);
}

const ResponseDistribution& DiscreteLmBackend::distribution(const ChatHistory& history) const {
    const auto it = by_last_bot_.find(std::string(history.last_bot_text()));
    return it == by_last_bot_.end() ? default_ : it->second;
}

std::string DiscreteLmBackend::do_generate(const ChatHistory& history, const GenParams&, Rng& rng) {
    return distribution(history).sample(rng);
}

ResponseDistribution distribution_from_json(const Json& object) {
    if (!object.is_object()) {
        throw ValidationError("distribution must be an object of response -> probability");
    }
    std::vector<std::string> support;
    std::vector<double> probs;
    for (const auto& [response, p] : object.items()) {
        if (!p.is_number()) {
            throw ValidationError("probability for \"" + response + "\" is not a number");
        }
        support.push_back(response);
        probs.push_back(p.get<double>());
    }
    return ResponseDistribution(std::move(support), std::move(probs));
}

std::shared_ptr<Backend> make_mock(MockKind kind, const std::string& model_id, const Json& spec) {
    if (kind == MockKind::scripted) {
        if (!spec.contains("script") || !spec["script"].is_array()) {
            throw ValidationError(model_id + ": scripted mock needs a \"script\" array");
        }
        std::vector<std::string> script;
        for (const auto& line : spec["script"]) {
            if (!line.is_string()) throw ValidationError(model_id + ": script entries must be strings");
            script.push_back(line.get<std::string>());
        }
        return std::make_shared<ScriptedBackend>(model_id, std::move(script));
    }
    if (!spec.contains("default")) {
        throw ValidationError(model_id + ": discrete_lm mock needs a \"default\" distribution");
    }
    std::map<std::string, ResponseDistribution> by_last_bot;
    if (spec.contains("by_last_bot")) {
        const Json& keyed = spec["by_last_bot"];
        if (!keyed.is_object()) throw ValidationError(model_id + ": \"by_last_bot\" must be an object");
        for (const auto& [key, d] : keyed.items()) by_last_bot.emplace(key, distribution_from_json(d));
    }
    return std::make_shared<DiscreteLmBackend>(model_id, distribution_from_json(spec["default"]),
                                               std::move(by_last_bot));
}

BackendLocator BackendLocator::from_json(const Json& j) {
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
        throw ConfigError("backend.type", "backend needs a \"type\" of \"remote\" or \"mock\"");
    }
    const auto type = j["type"].get<std::string>();
    if (type == "remote") {
        if (!j.contains("endpoint") || !j["endpoint"].is_string()) {
            throw ConfigError("backend.endpoint", "remote backend needs an endpoint URL");
        }
    } else if (type == "mock") {
        const auto kind = j.value("kind", std::string{});
        if (kind != "scripted" && kind != "discrete_lm") {
            throw ConfigError("backend.kind", "mock kind must be \"scripted\" or \"discrete_lm\"");
        }
    } else {
        throw ConfigError("backend.type", "unknown backend type \"" + type + "\"");
    }
    BackendLocator locator{j};
    locator.params().validate();
    // Surface mock spec errors at load time rather than at first use.
    try {
        if (type == "mock") locator.instantiate("config-check");
    } catch (const ValidationError& e) {
        throw ConfigError("backend", e.what());
    }
    return locator;
}

std::shared_ptr<Backend> BackendLocator::instantiate(const std::string& model_id) const {
    const auto type = description.at("type").get<std::string>();
    if (type == "remote") {
        RemoteEndpoint endpoint;
        endpoint.base_url = description.at("endpoint").get<std::string>();
        endpoint.timeout_ms = description.value("timeout_ms", endpoint.timeout_ms);
        endpoint.retries = description.value("retries", endpoint.retries);
        return std::make_shared<RemoteBackend>(model_id, std::move(endpoint));
    }
    const auto kind = description.at("kind").get<std::string>() == "scripted" ? MockKind::scripted
                                                                             : MockKind::discrete_lm;
    return make_mock(kind, model_id, description);
}

GenParams BackendLocator::params() const {
    GenParams params;
    if (description.contains("params")) {
        const Json& p = description["params"];
        params.temperature = p.value("temperature", params.temperature);
        params.max_tokens = p.value("max_tokens", params.max_tokens);
    }
    return params;
}

}  // namespace blendgate
