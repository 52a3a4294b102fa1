#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "fairfed/errors.hpp"
#include "fairfed/rng.hpp"

namespace fairfed {

// Laplace mechanism for the per-group likelihood vectors each client
// shares once at startup. epsilon = 0 is the perfect-privacy special
// case and replaces the vector with the uninformative uniform one.
struct PrivacyBudget {
    double epsilon = 0.0;
    double sensitivity = 1.0;
};

// One draw from Laplace(0, scale), inverse-CDF on a uniform draw.
inline double laplace_noise(double scale, Rng& rng) {
    if (!(scale > 0.0)) throw ContractError("laplace scale must be positive");
    const double u = rng.uniform_open();
    return u < 0.5 ? scale * std::log(2.0 * u) : -scale * std::log(2.0 * (1.0 - u));
}

struct PrivatizeResult {
    std::vector<double> likelihoods;
    int clamped_components = 0;
};

// Applies the budget to a likelihood vector. Disabled -> identity;
// epsilon = 0 -> uniform replacement; otherwise per-component
// Laplace(sensitivity/epsilon) noise, clamped to [1e-9, 1] so the
// downstream division stays well defined. Clamping is counted so runs
// can report how often it bit.
inline PrivatizeResult privatize_likelihoods(const std::vector<double>& likelihoods,
                                             const std::optional<PrivacyBudget>& budget,
                                             Rng& rng) {
    PrivatizeResult result;
    if (!budget.has_value()) {
        result.likelihoods = likelihoods;
        return result;
    }
    if (budget->epsilon < 0.0) throw ConfigError("dp epsilon must be nonnegative");
    if (!(budget->sensitivity > 0.0)) throw ConfigError("dp sensitivity must be positive");

    if (budget->epsilon == 0.0) {
        result.likelihoods.assign(likelihoods.size(), 1.0 / static_cast<double>(likelihoods.size()));
        return result;
    }
    const double scale = budget->sensitivity / budget->epsilon;
    result.likelihoods.resize(likelihoods.size());
    for (std::size_t g = 0; g < likelihoods.size(); ++g) {
        const double noisy = likelihoods[g] + laplace_noise(scale, rng);
        const double clamped = std::min(1.0, std::max(1e-9, noisy));
        if (clamped != noisy) result.clamped_components++;
        result.likelihoods[g] = clamped;
    }
    return result;
}

} // namespace fairfed
