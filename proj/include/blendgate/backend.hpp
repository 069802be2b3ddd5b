#pragma once

#include <memory>
#include <mutex>
#include <map>
#include <string>
#include <vector>

#include "blendgate/json.hpp"

#include "blendgate/errors.hpp"
#include "blendgate/history.hpp"
#include "blendgate/response_distribution.hpp"
#include "blendgate/rng.hpp"

namespace blendgate {

struct GenParams {
    double temperature = 1.0;
    int max_tokens = 256;

    void validate() const;
};

/// A backend call failed. Carries the serving model so gateway errors can name it.
class BackendError : public Error {
public:
    enum class Cause {
        unavailable,  ///< connection errors / timeouts, retries exhausted
        protocol,     ///< malformed reply, or a non-2xx status
        script,       ///< scripted mock ran out of responses
    };

    BackendError(std::string model_id, Cause cause, const std::string& detail);

    const std::string& model_id() const noexcept { return model_id_; }
    Cause cause() const noexcept { return cause_; }

private:
    std::string model_id_;
    Cause cause_;
};

/// Anything that can produce the next bot response for a history ending in a user turn.
class Backend {
public:
    explicit Backend(std::string model_id) : model_id_(std::move(model_id)) {}
    virtual ~Backend() = default;

    Backend(const Backend&) = delete;
    Backend& operator=(const Backend&) = delete;

    /// Samples one response. Never mutates `history`.
    /// Throws ArgumentError if the last turn is not a user turn.
    std::string generate(const ChatHistory& history, const GenParams& params, Rng& rng);

    const std::string& model_id() const noexcept { return model_id_; }

protected:
    virtual std::string do_generate(const ChatHistory& history, const GenParams& params,
                                    Rng& rng) = 0;

private:
    std::string model_id_;
};

/// Backend whose exact response distribution is known for any history.
class DistributionProvider {
public:
    virtual ~DistributionProvider() = default;
    virtual const ResponseDistribution& distribution(const ChatHistory& history) const = 0;
};

/// Returns its script in order, one entry per call. Holds a cursor, so one instance
/// belongs to one session.
class ScriptedBackend final : public Backend {
public:
    ScriptedBackend(std::string model_id, std::vector<std::string> script);

    std::size_t position() const;

protected:
    std::string do_generate(const ChatHistory& history, const GenParams& params,
                            Rng& rng) override;

private:
    std::vector<std::string> script_;
    mutable std::mutex mutex_;
    std::size_t next_ = 0;
};

/// Discrete language-model mock. The distribution is looked up by the text of the most
/// recent bot turn ("" when there is none), falling back to the default entry.
class DiscreteLmBackend final : public Backend, public DistributionProvider {
public:
    DiscreteLmBackend(std::string model_id, ResponseDistribution fallback,
                      std::map<std::string, ResponseDistribution> by_last_bot = {});

    const ResponseDistribution& distribution(const ChatHistory& history) const override;

protected:
    std::string do_generate(const ChatHistory& history, const GenParams& params,
                            Rng& rng) override;

private:
    ResponseDistribution default_;
    std::map<std::string, ResponseDistribution> by_last_bot_;
};

struct RemoteEndpoint {
    std::string base_url;  ///< e.g. "http://127.0.0.1:9000"; POST {base_url}/generate
    int timeout_ms = 10'000;
    int retries = 2;
};

/// Client for the minimal JSON generate protocol.
class RemoteBackend final : public Backend {
public:
    RemoteBackend(std::string model_id, RemoteEndpoint endpoint);

    const RemoteEndpoint& endpoint() const noexcept { return endpoint_; }

protected:
    std::string do_generate(const ChatHistory& history, const GenParams& params,
                            Rng& rng) override;

private:
    RemoteEndpoint endpoint_;
};

/// Request body for POST /generate.
Json generate_request_body(const ChatHistory& history, const GenParams& params);

/// Extracts "text" from a /generate reply body; throws BackendError(protocol) on any
/// other shape.
std::string parse_generate_reply(const std::string& model_id, const std::string& body);

/// One remote call with retry on connection errors and timeouts only.
/// At most `retries + 1` attempts.
std::string remote_generate(const std::string& model_id, const RemoteEndpoint& endpoint,
                            const ChatHistory& history, const GenParams& params);

enum class MockKind { scripted, discrete_lm };

/// Builds a mock from its JSON description:
///   scripted:    {"script": ["hi", "bye"]}
///   discrete_lm: {"default": {"a": 0.5, "b": 0.5}, "by_last_bot": {"a": {"c": 1.0}}}
/// Distribution objects keep their key order as the support order.
std::shared_ptr<Backend> make_mock(MockKind kind, const std::string& model_id,
                                   const Json& spec);

/// Parses {"a": 0.5, ...} into a validated distribution.
ResponseDistribution distribution_from_json(const Json& object);

/// Where a model is served from. JSON forms:
///   {"type": "remote", "endpoint": "http://host:port", "timeout_ms": 10000, "retries": 2}
///   {"type": "mock", "kind": "scripted" | "discrete_lm", ...mock spec...}
/// Both accept an optional "params": {"temperature": .., "max_tokens": ..}.
struct BackendLocator {
    Json description;

    static BackendLocator from_json(const Json& j);

    /// Instantiates a fresh backend. Stateful mocks get their own cursor per call.
    std::shared_ptr<Backend> instantiate(const std::string& model_id) const;

    GenParams params() const;
};

}  // namespace blendgate
