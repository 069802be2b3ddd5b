#pragma once

#include <string>
#include <utility>
#include <vector>

#include "blendgate/rng.hpp"

namespace blendgate {

/// Finite distribution over whole response strings.
class ResponseDistribution {
public:
    ResponseDistribution() = default;

    /// Throws ValidationError unless probs are nonnegative, sum to 1 within 1e-9,
    /// have the same length as support, and support entries are distinct.
    ResponseDistribution(std::vector<std::string> support, std::vector<double> probs);

    /// Point mass on `response`.
    static ResponseDistribution point(std::string response);

    const std::vector<std::string>& support() const noexcept { return support_; }
    const std::vector<double>& probs() const noexcept { return probs_; }
    std::size_t size() const noexcept { return support_.size(); }

    /// Mass on `response`; 0 when it is outside the support.
    double probability(const std::string& response) const;

    /// Inverse-CDF draw.
    const std::string& sample(Rng& rng) const;

    bool operator==(const ResponseDistribution&) const = default;

private:
    std::vector<std::string> support_;
    std::vector<double> probs_;
};

/// Index drawn from `probs` (assumed normalized) by inverse CDF over one uniform.
/// Zero-probability entries are never returned.
std::size_t sample_index(const std::vector<double>& probs, Rng& rng);

/// Total-variation distance between two finite distributions keyed by string.
double total_variation(const std::vector<std::pair<std::string, double>>& lhs,
                       const std::vector<std::pair<std::string, double>>& rhs);

}  // namespace blendgate
