#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "blendgate/backend.hpp"
#include "blendgate/history.hpp"
#include "blendgate/json.hpp"
#include "blendgate/response_distribution.hpp"
#include "blendgate/rng.hpp"

namespace blendgate {

/// One component chat model in a selection set.
struct ModelSpec {
    std::string model_id;
    BackendLocator backend;
    double weight = 1.0;      ///< unnormalized selection mass (blended-weighted only)
    double cost_flops = 1.0;  ///< inference cost relative to the control model
};

enum class PolicyKind { single, blended_uniform, blended_weighted };

std::string_view to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(std::string_view name);

/// Distribution over the selection set.
class SelectionPolicy {
public:
    SelectionPolicy() = default;

    /// Throws ConfigError on an empty model list, duplicate ids, negative weights,
    /// nonpositive costs, `single` with more than one model, or weighted mass 0.
    SelectionPolicy(PolicyKind kind, std::vector<ModelSpec> models);

    static SelectionPolicy single(ModelSpec model);
    static SelectionPolicy uniform(std::vector<ModelSpec> models);
    static SelectionPolicy weighted(std::vector<ModelSpec> models);

    /// {"kind": "single"|"blended-uniform"|"blended-weighted", "models": [...]}
    static SelectionPolicy from_json(const Json& j);
    Json to_json() const;

    PolicyKind kind() const noexcept { return kind_; }
    const std::vector<ModelSpec>& models() const noexcept { return models_; }
    std::size_t size() const noexcept { return models_.size(); }

    /// Selection probabilities, parallel to models(). The history argument is the
    /// hook for content-aware selection; the current kinds ignore it.
    const std::vector<double>& probabilities(const ChatHistory& history = {}) const;

private:
    PolicyKind kind_ = PolicyKind::single;
    std::vector<ModelSpec> models_;
    std::vector<double> probs_;
};

/// Index into policy.models() drawn from the selection distribution.
std::size_t select_model_index(const SelectionPolicy& policy, Rng& rng,
                               const ChatHistory& history = {});

const ModelSpec& select_model(const SelectionPolicy& policy, Rng& rng,
                              const ChatHistory& history = {});

/// A policy with one live backend per model.
struct Ensemble {
    SelectionPolicy policy;
    std::vector<std::shared_ptr<Backend>> backends;

    /// Instantiates every model's backend from its locator.
    static Ensemble instantiate(SelectionPolicy policy);
};

struct BlendedReply {
    std::string response;
    std::string model_id;
};

/// One step of the blended loop: draws a model from the policy, then lets only that
/// backend answer, conditioned on the whole history (including turns other models
/// produced) plus `user_turn`. BackendError propagates with the model id attached.
BlendedReply blended_turn(const ChatHistory& history, const std::string& user_turn,
                          const Ensemble& ensemble, Rng& rng);

/// Same, for a history that already ends with the pending user turn.
BlendedReply blended_reply(const ChatHistory& history_with_user, const Ensemble& ensemble,
                           Rng& rng);

using DistributionFn = std::function<ResponseDistribution(const ChatHistory&)>;

struct MixtureComponent {
    double prob = 0.0;
    DistributionFn distribution;
};

/// Sum over components of prob * P(r | history). Support is the union of component
/// supports in first-appearance order. Throws ValidationError if the component
/// probabilities do not sum to 1 (1e-9) or a component distribution is invalid.
ResponseDistribution mixture_distribution(const ChatHistory& history,
                                          const std::vector<MixtureComponent>& components);

/// Draws k candidates from `backend` and keeps the one with the highest reward;
/// ties go to the earliest draw.
std::string rejection_sample(Backend& backend, const std::function<double(const std::string&)>& reward,
                             int k, const ChatHistory& history, const GenParams& params, Rng& rng);

/// Expected per-turn inference cost: sum_n P(model n) * cost_flops_n.
double expected_cost(const SelectionPolicy& policy);

}  // namespace blendgate
