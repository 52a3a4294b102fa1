#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fairfed/errors.hpp"
#include "fairfed/model.hpp"

namespace fairfed {

// Per-group multiplicative weights, maintained client-side. Strictly
// positive; never renormalized (importance computation absorbs scale),
// only floored to keep positivity through extreme updates.
struct LambdaState {
    std::vector<double> lambda;
};

inline constexpr double lambda_floor = 1e-300;

// Raw group importance w_g = lambda_g / p(G = g | X) plus its
// normalization over groups.
struct ImportanceWeights {
    std::vector<double> raw;
    std::vector<double> normalized;
};

// Best-group performance guard: the minimum acceptable best-group TPR
// given the observed spread, threshold = btpr - eta * (btpr - wtpr).
struct ThresholdVerdict {
    double btpr = 0.0;
    double wtpr = 0.0;
    double eta_mu = 0.0;
    double threshold = 0.0;
    bool satisfied = false;
};

inline LambdaState init_lambda(const std::vector<double>& group_priors) {
    if (group_priors.empty()) throw ConfigError("no group priors");
    double sum = 0.0;
    for (std::size_t g = 0; g < group_priors.size(); ++g) {
        if (group_priors[g] <= 0.0)
            throw ConfigError("group " + std::to_string(g) +
                              " has a zero prior (empty group upstream)");
        sum += group_priors[g];
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("group priors sum to " + std::to_string(sum) + ", expected 1");
    return {group_priors};
}

// Normalized per-group emphasis from per-sample weights:
// w_hat_g = (sum of weights of group-g samples) / (total weight).
inline std::vector<double> normalize_weights(const std::vector<double>& per_sample_weights,
                                             const std::vector<int>& groups) {
    if (per_sample_weights.size() != groups.size())
        throw ContractError("weight and group vectors differ in length");
    if (per_sample_weights.empty()) throw ContractError("no weights to normalize");
    int num_groups = 0;
    for (int g : groups) {
        if (g < 0) throw ContractError("negative group index");
        num_groups = std::max(num_groups, g + 1);
    }
    std::vector<double> sums(static_cast<std::size_t>(num_groups), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < per_sample_weights.size(); ++i) {
        const double w = per_sample_weights[i];
        if (w < 0.0) throw ContractError("negative sample weight");
        sums[static_cast<std::size_t>(groups[i])] += w;
        total += w;
    }
    if (total <= 0.0) throw ContractError("all sample weights are zero");
    for (auto& s : sums) s /= total;
    return sums;
}

// w_g = lambda_g / mixture_g, normalized by treating each group as one
// weighted point. Invariant to positive rescaling of lambda.
inline ImportanceWeights compute_importance(const LambdaState& lambda,
                                            const std::vector<double>& mixture) {
    if (lambda.lambda.size() != mixture.size())
        throw ContractError("lambda and mixture lengths differ");
    ImportanceWeights w;
    w.raw.resize(lambda.lambda.size());
    std::vector<int> group_ids(lambda.lambda.size());
    for (std::size_t g = 0; g < mixture.size(); ++g) {
        if (!(mixture[g] > 0.0))
            throw NumericError("mixture likelihood for group " + std::to_string(g) +
                               " is not positive");
        w.raw[g] = lambda.lambda[g] / mixture[g];
        group_ids[g] = static_cast<int>(g);
    }
    w.normalized = normalize_weights(w.raw, group_ids);
    return w;
}

// Multiplicative update lambda_g <- lambda_g * exp(-eta * risk_g),
// floored to preserve positivity. Negative eta up-weights high-risk
// groups.
inline LambdaState mw_update(const LambdaState& lambda, const std::vector<double>& group_risks,
                             double eta_mu) {
    if (lambda.lambda.size() != group_risks.size())
        throw ContractError("lambda and risk vectors differ in length");
    if (!std::isfinite(eta_mu)) throw NumericError("eta_mu is not finite");
    LambdaState next = lambda;
    for (std::size_t g = 0; g < next.lambda.size(); ++g) {
        if (!std::isfinite(group_risks[g]))
            throw NumericError("group " + std::to_string(g) + " risk is not finite");
        next.lambda[g] = std::max(lambda_floor, next.lambda[g] * std::exp(-eta_mu * group_risks[g]));
    }
    return next;
}

inline LambdaState mw_update(const LambdaState& lambda, const GroupLossVector& losses,
                             double eta_mu, GroupLossMode mode = GroupLossMode::group_mean) {
    return mw_update(lambda, group_risks(losses, mode), eta_mu);
}

inline ThresholdVerdict evaluate_threshold(double btpr, double wtpr, double eta_mu_threshold) {
    if (!(wtpr >= 0.0 && btpr <= 1.0 && wtpr <= btpr))
        throw ContractError("need 0 <= wtpr <= btpr <= 1, got wtpr=" + std::to_string(wtpr) +
                            " btpr=" + std::to_string(btpr));
    if (!(eta_mu_threshold >= 0.0 && eta_mu_threshold <= 1.0))
        throw ContractError("threshold eta must lie in [0, 1]");
    ThresholdVerdict v;
    v.btpr = btpr;
    v.wtpr = wtpr;
    v.eta_mu = eta_mu_threshold;
    v.threshold = btpr - eta_mu_threshold * (btpr - wtpr);
    v.satisfied = btpr >= v.threshold;
    return v;
}

} // namespace fairfed
