#include <httplib.h>

#include "blendgate/gateway.hpp"
#include "blendgate/json.hpp"

namespace blendgate {

struct HttpServer::Impl {
    Gateway& gateway;
    httplib::Server server;

    explicit Impl(Gateway& g) : gateway(g) {}
};

namespace {

void reply_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
    reply_json(res, status, Json{{"error", message}});
}

Json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return Json::object();
    Json body = Json::parse(req.body, nullptr, /*allow_exceptions=*/false);
    if (body.is_discarded() || !body.is_object()) throw GatewayError(400, "body must be a JSON object");
    return body;
}

Json turn_json(const TurnResult& turn, bool expose_model) {
    Json out{{"response", turn.response}, {"turn_index", turn.turn_index}};
    if (expose_model) out["model_id"] = turn.model_id;
    return out;
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const GatewayError& e) {
            reply_error(res, e.status(), e.what());
        } catch (const std::exception& e) {
            reply_error(res, 500, e.what());
        }
    };
}

}  // namespace

HttpServer::HttpServer(Gateway& gateway) : impl_(std::make_unique<Impl>(gateway)) {
    auto& server = impl_->server;
    Gateway& gw = gateway;

    // The browser client may be served from another origin.
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/v1/healthz", [](const httplib::Request&, httplib::Response& res) {
        reply_json(res, 200, Json{{"status", "ok"}});
    });

    server.Post("/v1/sessions", guarded([&gw](const httplib::Request& req, httplib::Response& res) {
        const Json body = parse_body(req);
        const auto user = body.find("user_id");
        if (user == body.end() || !user->is_string()) throw GatewayError(400, "user_id must be a string");
        const SessionInfo info = gw.create_session(user->get<std::string>());
        reply_json(res, 200, Json{{"session_id", info.session_id}, {"cohort", info.cohort}});
    }));

    server.Post(R"(/v1/sessions/([^/]+)/turns)", guarded([&gw](const httplib::Request& req, httplib::Response& res) {
        const Json body = parse_body(req);
        const auto text = body.find("text");
        if (text == body.end() || !text->is_string()) throw GatewayError(400, "text must be a string");
        const TurnResult turn = gw.post_turn(req.matches[1].str(), text->get<std::string>());
        reply_json(res, 200, turn_json(turn, gw.config().debug_expose_model));
    }));

    server.Post(R"(/v1/sessions/([^/]+)/regenerate)",
                guarded([&gw](const httplib::Request& req, httplib::Response& res) {
                    parse_body(req);
                    const TurnResult turn = gw.regenerate(req.matches[1].str());
                    reply_json(res, 200, turn_json(turn, gw.config().debug_expose_model));
                }));
}

HttpServer::~HttpServer() {
    stop();
}

int HttpServer::bind(const std::string& host, int port) {
    auto& server = impl_->server;
    const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
    if (bound <= 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void HttpServer::listen() {
    impl_->server.listen_after_bind();
}

void HttpServer::stop() {
    if (impl_) impl_->server.stop();
}

bool HttpServer::running() const {
    return impl_->server.is_running();
}

}  // namespace blendgate
