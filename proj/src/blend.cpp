#include "blendgate/blend.hpp"

#include <cmath>
#include <set>

namespace blendgate {

std::string_view to_string(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::single: return "single";
        case PolicyKind::blended_uniform: return "blended-uniform";
        case PolicyKind::blended_weighted: return "blended-weighted";
    }
    return "single";
}

PolicyKind policy_kind_from_string(std::string_view name) {
    if (name == "single") return PolicyKind::single;
    if (name == "blended-uniform") return PolicyKind::blended_uniform;
    if (name == "blended-weighted") return PolicyKind::blended_weighted;
    throw ConfigError("policy.kind", "unknown policy kind \"" + std::string(name) + "\"");
}

SelectionPolicy::SelectionPolicy(PolicyKind kind, std::vector<ModelSpec> models)
    : kind_(kind), models_(std::move(models)) {
    if (models_.empty()) throw ConfigError("policy.models", "selection set is empty");
    if (kind_ == PolicyKind::single && models_.size() != 1) {
        throw ConfigError("policy.models", "single policy takes exactly one model");
    }
    std::set<std::string_view> ids;
    double total_weight = 0.0;
    for (const auto& model : models_) {
        if (model.model_id.empty()) throw ConfigError("policy.models.model_id", "empty model id");
        if (!ids.insert(model.model_id).second) {
            throw ConfigError("policy.models.model_id", "duplicate model id \"" + model.model_id + "\"");
        }
        if (!(model.weight >= 0.0) || !std::isfinite(model.weight)) {
            throw ConfigError("policy.models.weight", model.model_id + ": weight must be >= 0");
        }
        if (!(model.cost_flops > 0.0) || !std::isfinite(model.cost_flops)) {
            throw ConfigError("policy.models.cost_flops", model.model_id + ": cost must be > 0");
        }
        total_weight += model.weight;
    }

    const auto n = models_.size();
    probs_.assign(n, 1.0 / static_cast<double>(n));
    if (kind_ == PolicyKind::blended_weighted) {
        if (!(total_weight > 0.0)) throw ConfigError("policy.models.weight", "weights sum to 0");
        for (std::size_t i = 0; i < n; ++i) probs_[i] = models_[i].weight / total_weight;
    }
}

SelectionPolicy SelectionPolicy::single(ModelSpec model) {
    return SelectionPolicy(PolicyKind::single, {std::move(model)});
}

SelectionPolicy SelectionPolicy::uniform(std::vector<ModelSpec> models) {
    return SelectionPolicy(PolicyKind::blended_uniform, std::move(models));
}

SelectionPolicy SelectionPolicy::weighted(std::vector<ModelSpec> models) {
    return SelectionPolicy(PolicyKind::blended_weighted, std::move(models));
}

SelectionPolicy SelectionPolicy::from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("policy", "must be an object");
    if (!j.contains("kind") || !j["kind"].is_string()) throw ConfigError("policy.kind", "missing");
    if (!j.contains("models") || !j["models"].is_array()) throw ConfigError("policy.models", "missing");
    std::vector<ModelSpec> models;
    for (const auto& m : j["models"]) {
        if (!m.is_object() || !m.contains("model_id") || !m["model_id"].is_string()) {
            throw ConfigError("policy.models.model_id", "missing");
        }
        if (!m.contains("backend")) throw ConfigError("policy.models.backend", "missing");
        ModelSpec spec;
        spec.model_id = m["model_id"].get<std::string>();
        spec.backend = BackendLocator::from_json(m["backend"]);
        try {
            spec.weight = m.value("weight", 1.0);
            spec.cost_flops = m.value("cost_flops", 1.0);
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("policy.models", spec.model_id + ": weight and cost_flops must be numbers");
        }
        models.push_back(std::move(spec));
    }
    return SelectionPolicy(policy_kind_from_string(j["kind"].get<std::string>()), std::move(models));
}

Json SelectionPolicy::to_json() const {
    Json models = Json::array();
    for (const auto& m : models_) {
        models.push_back(Json{{"model_id", m.model_id},
                              {"backend", m.backend.description},
                              {"weight", m.weight},
                              {"cost_flops", m.cost_flops}});
    }
    return Json{{"kind", to_string(kind_)}, {"models", std::move(models)}};
}

const std::vector<double>& SelectionPolicy::probabilities(const ChatHistory&) const {
    return probs_;
}

std::size_t select_model_index(const SelectionPolicy& policy, Rng& rng, const ChatHistory& history) {
    if (policy.size() == 0) throw ConfigError("policy.models", "selection set is empty");
    return sample_index(policy.probabilities(history), rng);
}

const ModelSpec& select_model(const SelectionPolicy& policy, Rng& rng, const ChatHistory& history) {
    return policy.models()[select_model_index(policy, rng, history)];
}

Ensemble Ensemble::instantiate(SelectionPolicy policy) {
    Ensemble ensemble;
    for (const auto& model : policy.models()) {
        ensemble.backends.push_back(model.backend.instantiate(model.model_id));
    }
    ensemble.policy = std::move(policy);
    return ensemble;
}

BlendedReply blended_reply(const ChatHistory& history_with_user, const Ensemble& ensemble, Rng& rng) {
    if (ensemble.backends.size() != ensemble.policy.size()) {
        throw ConfigError("policy.models", "ensemble has no backend for every model");
    }
    const std::size_t chosen = select_model_index(ensemble.policy, rng, history_with_user);
    const ModelSpec& model = ensemble.policy.models()[chosen];
    Backend& backend = *ensemble.backends[chosen];
    try {
        return {backend.generate(history_with_user, model.backend.params(), rng), model.model_id};
    } catch (const BackendError&) {
        throw;
    } catch (const std::exception& e) {
        throw BackendError(model.model_id, BackendError::Cause::protocol, e.what());
    }
}

BlendedReply blended_turn(const ChatHistory& history, const std::string& user_turn,
                          const Ensemble& ensemble, Rng& rng) {
    if (user_turn.empty()) throw ArgumentError("user turn is empty");
    ChatHistory with_user = history;
    with_user.add_user(user_turn);
    return blended_reply(with_user, ensemble, rng);
}

ResponseDistribution mixture_distribution(const ChatHistory& history,
                                          const std::vector<MixtureComponent>& components) {
    if (components.empty()) throw ValidationError("mixture has no components");
    double total = 0.0;
    for (const auto& c : components) {
        if (!(c.prob >= 0.0)) throw ValidationError("negative component probability");
        total += c.prob;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw ValidationError("component probabilities sum to " + std::to_string(total));
    }

    std::vector<std::string> support;
    std::vector<double> probs;
    for (const auto& c : components) {
        const ResponseDistribution component = c.distribution(history);
        for (std::size_t i = 0; i < component.size(); ++i) {
            const auto& response = component.support()[i];
            std::size_t slot = 0;
            while (slot < support.size() && support[slot] != response) ++slot;
            if (slot == support.size()) {
                support.push_back(response);
                probs.push_back(0.0);
            }
            probs[slot] += c.prob * component.probs()[i];
        }
    }
    return ResponseDistribution(std::move(support), std::move(probs));
}

std::string rejection_sample(Backend& backend, const std::function<double(const std::string&)>& reward,
                             int k, const ChatHistory& history, const GenParams& params, Rng& rng) {
    if (k < 1) throw ArgumentError("rejection_sample needs k >= 1");
    std::string best = backend.generate(history, params, rng);
    double best_reward = reward(best);
    for (int i = 1; i < k; ++i) {
        std::string candidate = backend.generate(history, params, rng);
        const double r = reward(candidate);
        if (r > best_reward) {
            best_reward = r;
            best = std::move(candidate);
        }
    }
    return best;
}

double expected_cost(const SelectionPolicy& policy) {
    const auto& probs = policy.probabilities();
    double cost = 0.0;
    for (std::size_t i = 0; i < policy.size(); ++i) cost += probs[i] * policy.models()[i].cost_flops;
    return cost;
}

}  // namespace blendgate
