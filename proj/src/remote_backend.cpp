#include <httplib.h>

#include "blendgate/backend.hpp"

namespace blendgate {

namespace {

struct SplitUrl {
    std::string scheme_host_port;
    std::string path_prefix;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = url.find('/', host_start);
    if (path_start == std::string::npos) return {url, ""};
    std::string prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path_start), prefix};
}

}  // namespace

Json generate_request_body(const ChatHistory& history, const GenParams& params) {
    Json turns = Json::array();
    for (const auto& turn : history.turns()) {
        turns.push_back(Json{{"role", to_string(turn.role)}, {"text", turn.text}});
    }
    return Json{{"history", std::move(turns)},
                {"params", Json{{"temperature", params.temperature}, {"max_tokens", params.max_tokens}}}};
}

std::string parse_generate_reply(const std::string& model_id, const std::string& body) {
    const Json reply = Json::parse(body, nullptr, /*allow_exceptions=*/false);
    if (reply.is_discarded()) {
        throw BackendError(model_id, BackendError::Cause::protocol, "reply is not JSON");
    }
    if (!reply.is_object() || reply.size() != 1 || !reply.contains("text") || !reply["text"].is_string()) {
        throw BackendError(model_id, BackendError::Cause::protocol,
                           "reply must be exactly {\"text\": string}");
    }
    auto text = reply["text"].get<std::string>();
    if (text.empty()) throw BackendError(model_id, BackendError::Cause::protocol, "empty text");
    return text;
}

std::string remote_generate(const std::string& model_id, const RemoteEndpoint& endpoint,
                            const ChatHistory& history, const GenParams& params) {
    if (endpoint.retries < 0) throw ArgumentError("retries must be >= 0");
    const SplitUrl url = split_url(endpoint.base_url);
    httplib::Client client(url.scheme_host_port);
    if (!client.is_valid()) {
        throw BackendError(model_id, BackendError::Cause::unavailable,
                           "invalid endpoint " + endpoint.base_url);
    }
    const auto timeout = std::chrono::milliseconds(endpoint.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    const std::string body = generate_request_body(history, params).dump();
    const std::string path = url.path_prefix + "/generate";
    std::string last_failure;
    for (int attempt = 0; attempt <= endpoint.retries; ++attempt) {
        auto result = client.Post(path, body, "application/json");
        if (!result) {
            last_failure = httplib::to_string(result.error());
            continue;
        }
        if (result->status < 200 || result->status >= 300) {
            throw BackendError(model_id, BackendError::Cause::protocol,
                               "HTTP status " + std::to_string(result->status));
        }
        return parse_generate_reply(model_id, result->body);
    }
    throw BackendError(model_id, BackendError::Cause::unavailable,
                       std::to_string(endpoint.retries + 1) + " attempts failed, last: " + last_failure);
}

RemoteBackend::RemoteBackend(std::string model_id, RemoteEndpoint endpoint)
    : Backend(std::move(model_id)), endpoint_(std::move(endpoint)) {}

std::string RemoteBackend::do_generate(const ChatHistory& history, const GenParams& params, Rng&) {
    return remote_generate(model_id(), endpoint_, history, params);
}

}  // namespace blendgate
