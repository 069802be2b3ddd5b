#include "blendgate/response_distribution.hpp"

#include <cmath>
#include <map>
#include <set>

#include "blendgate/errors.hpp"

namespace blendgate {

ResponseDistribution::ResponseDistribution(std::vector<std::string> support,
                                           std::vector<double> probs)
    : support_(std::move(support)), probs_(std::move(probs)) {
    if (support_.size() != probs_.size()) {
        throw ValidationError("distribution support and probs differ in length");
    }
    if (support_.empty()) throw ValidationError("distribution has empty support");
    std::set<std::string_view> seen;
    double total = 0.0;
    for (std::size_t i = 0; i < support_.size(); ++i) {
        if (!seen.insert(support_[i]).second) {
            throw ValidationError("duplicate response in support: \"" + support_[i] + "\"");
        }
        if (!(probs_[i] >= 0.0) || !std::isfinite(probs_[i])) {
            throw ValidationError("negative or non-finite probability for \"" + support_[i] + "\"");
        }
        total += probs_[i];
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw ValidationError("distribution sums to " + std::to_string(total) + ", not 1");
    }
}

ResponseDistribution ResponseDistribution::point(std::string response) {
    return ResponseDistribution({std::move(response)}, {1.0});
}

double ResponseDistribution::probability(const std::string& response) const {
    for (std::size_t i = 0; i < support_.size(); ++i) {
        if (support_[i] == response) return probs_[i];
    }
    return 0.0;
}

const std::string& ResponseDistribution::sample(Rng& rng) const {
    return support_[sample_index(probs_, rng)];
}

std::size_t sample_index(const std::vector<double>& probs, Rng& rng) {
    const double u = rng.uniform();
    double cumulative = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        cumulative += probs[i];
        last_positive = i;
        if (u < cumulative) return i;
    }
    // u landed in the rounding gap above the final cumulative sum.
    return last_positive;
}

double total_variation(const std::vector<std::pair<std::string, double>>& lhs,
                       const std::vector<std::pair<std::string, double>>& rhs) {
    std::map<std::string, double> diff;
    for (const auto& [key, p] : lhs) diff[key] += p;
    for (const auto& [key, p] : rhs) diff[key] -= p;
    double sum = 0.0;
    for (const auto& [key, d] : diff) sum += std::abs(d);
    return 0.5 * sum;
}

}  // namespace blendgate
