// JSON-in, JSON-out bindings over the core library. The Python package wraps these
// with dict/list conversions.

#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "blendgate/analytics.hpp"
#include "blendgate/blend.hpp"
#include "blendgate/simulator.hpp"

namespace py = pybind11;
using namespace blendgate;

namespace {

ChatHistory history_from_json(const std::string& text) {
    std::vector<Turn> turns;
    const Json j = Json::parse(text);
    int exchange = 0;
    for (const auto& t : j) {
        Turn turn;
        const std::string role = t.at("role").get<std::string>();
        if (role != "user" && role != "bot") throw ValidationError("role must be \"user\" or \"bot\"");
        turn.role = role == "user" ? Role::user : Role::bot;
        turn.text = t.at("text").get<std::string>();
        if (turn.role == Role::bot) turn.model_id = t.value("model_id", std::string("unknown"));
        turn.turn_index = exchange;
        if (turn.role == Role::bot) ++exchange;
        turns.push_back(std::move(turn));
    }
    return ChatHistory(std::move(turns));
}

std::vector<double> selection_probabilities(const std::string& policy) {
    return SelectionPolicy::from_json(Json::parse(policy)).probabilities();
}

std::vector<std::string> select_models(const std::string& policy_json, std::uint64_t seed, int n) {
    const auto policy = SelectionPolicy::from_json(Json::parse(policy_json));
    Rng rng(seed);
    std::vector<std::string> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(select_model(policy, rng).model_id);
    return out;
}

std::vector<std::pair<std::string, std::string>> blended_turns(const std::string& policy_json,
                                                               const std::string& history_json,
                                                               const std::string& user_text, std::uint64_t seed,
                                                               int sessions) {
    const auto policy = SelectionPolicy::from_json(Json::parse(policy_json));
    const ChatHistory history = history_from_json(history_json);
    std::vector<std::pair<std::string, std::string>> out;
    for (int s = 0; s < sessions; ++s) {
        const Ensemble ensemble = Ensemble::instantiate(policy);
        Rng rng = Rng::for_stream(seed, std::to_string(s));
        auto reply = blended_turn(history, user_text, ensemble, rng);
        out.emplace_back(std::move(reply.response), std::move(reply.model_id));
    }
    return out;
}

std::string mixture(const std::string& policy_json, const std::string& history_json) {
    const auto policy = SelectionPolicy::from_json(Json::parse(policy_json));
    const Ensemble ensemble = Ensemble::instantiate(policy);
    const ChatHistory history = history_from_json(history_json);
    std::vector<MixtureComponent> components;
    const auto& probs = policy.probabilities(history);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        auto provider = std::dynamic_pointer_cast<DistributionProvider>(ensemble.backends[i]);
        if (!provider) throw ArgumentError(policy.models()[i].model_id + " has no known response distribution");
        components.push_back({probs[i], [provider](const ChatHistory& h) { return provider->distribution(h); }});
    }
    const auto dist = mixture_distribution(history, components);
    Json out = Json::object();
    for (std::size_t i = 0; i < dist.size(); ++i) out[dist.support()[i]] = dist.probs()[i];
    return out.dump();
}

double expected_cost_of(const std::string& policy) {
    return expected_cost(SelectionPolicy::from_json(Json::parse(policy)));
}

std::string fit(const std::vector<std::pair<double, double>>& points) {
    std::vector<SeriesPoint> series;
    for (const auto& [x, y] : points) series.push_back({x, y});
    const FitResult r = fit_loglog(series);
    return Json{{"intercept", r.intercept},
                {"slope", r.slope},
                {"points_used", r.points_used},
                {"points_dropped", r.points_dropped}}
        .dump();
}

std::string simulate_log(const std::string& config) {
    std::string out;
    for (const auto& e : simulate(SimulationConfig::from_json(Json::parse(config)))) {
        out += serialize_event(e);
        out += '\n';
    }
    return out;
}

std::string analyze(const std::string& log_text, const std::string& config) {
    const EventIndex index(parse_log(log_text));
    return report_to_json(build_report(index, ExperimentConfig::from_json(Json::parse(config)))).dump();
}

std::string recover(const std::string& config, double tolerance) {
    const RecoveryReport report = recovery_check(SimulationConfig::from_json(Json::parse(config)), tolerance);
    Json rows = Json::array();
    auto deltas = [](const Deltas& d) {
        return Json{{"delta_zeta", d.zeta}, {"delta_beta", d.beta}, {"delta_alpha", d.alpha}, {"delta_gamma", d.gamma}};
    };
    for (const auto& row : report.rows) {
        Json r{{"group", row.group}, {"truth", deltas(row.truth)}, {"passed", row.passed}};
        r["estimate"] = row.estimate ? deltas(*row.estimate) : Json(nullptr);
        if (row.error) r["error"] = *row.error;
        rows.push_back(std::move(r));
    }
    return Json{{"rows", std::move(rows)}, {"tolerance", tolerance}, {"passed", report.passed()}}.dump();
}

}  // namespace

PYBIND11_MODULE(_blendgate, m) {
    m.doc() = "blendgate core bindings";

    // Translators run newest first, so the base class is registered before its subclasses.
    const auto base = py::register_exception<Error>(m, "BlendgateError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<AnalyticsError>(m, "AnalyticsError", base.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const nlohmann::json::exception& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
    });

    m.def("selection_probabilities", &selection_probabilities, py::arg("policy"));
    m.def("select_models", &select_models, py::arg("policy"), py::arg("seed"), py::arg("n"));
    m.def("blended_turns", &blended_turns, py::arg("policy"), py::arg("history"), py::arg("user_text"),
          py::arg("seed"), py::arg("sessions"));
    m.def("mixture_distribution", &mixture, py::arg("policy"), py::arg("history"));
    m.def("expected_cost", &expected_cost_of, py::arg("policy"));
    m.def("fit_loglog", &fit, py::arg("points"));
    m.def("simulate", &simulate_log, py::arg("config"));
    m.def("analyze", &analyze, py::arg("log_text"), py::arg("config"));
    m.def("recovery_check", &recover, py::arg("config"), py::arg("tolerance"));
    m.def("format_report_row",
          py::overload_cast<const std::string&, double, double, double, double, double>(&format_report_row),
          py::arg("name"), py::arg("delta_zeta"), py::arg("delta_beta"), py::arg("delta_gamma"),
          py::arg("delta_alpha"), py::arg("flop_ratio"));
}
