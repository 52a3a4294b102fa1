#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "fairfed/data.hpp"
#include "fairfed/errors.hpp"
#include "fairfed/fairness.hpp"
#include "fairfed/model.hpp"

namespace fairfed {

// Per-client fairness metrics over the per-group TPR vector:
// tprd = max - min, tprsd = standard deviation, wtpr = min, btpr = max.
struct ClientFairness {
    int client_id = 0;
    std::vector<double> tpr;
    double tprd = 0.0;
    double tprsd = 0.0;
    double wtpr = 0.0;
    double btpr = 0.0;
    ThresholdVerdict verdict;
};

struct FairnessReport {
    std::vector<ClientFairness> per_client;
};

// Per-group true positive rate: within group g, the fraction of samples
// whose argmax prediction equals the true label. Ties break toward the
// lowest class index.
inline std::vector<double> group_tpr(const ModelParams& model, const GroupedDataset& test) {
    std::vector<std::size_t> correct(static_cast<std::size_t>(test.num_groups), 0);
    std::vector<std::size_t> total(static_cast<std::size_t>(test.num_groups), 0);
    for (const auto& s : test.samples) {
        const int predicted = argmax_lowest(forward(model, s.features));
        total[static_cast<std::size_t>(s.group)]++;
        if (predicted == s.label) correct[static_cast<std::size_t>(s.group)]++;
    }
    std::vector<double> tpr(static_cast<std::size_t>(test.num_groups));
    for (int g = 0; g < test.num_groups; ++g) {
        if (total[static_cast<std::size_t>(g)] == 0)
            throw ContractError("test set has no samples for group " + std::to_string(g));
        tpr[static_cast<std::size_t>(g)] = static_cast<double>(correct[static_cast<std::size_t>(g)]) /
                                           static_cast<double>(total[static_cast<std::size_t>(g)]);
    }
    return tpr;
}

// TPRSD uses the population (1/n) standard deviation by default; the
// group set is the whole population of interest.
inline ClientFairness fairness_summary(const std::vector<double>& tpr, double eta_mu_threshold,
                                       bool sample_sd = false) {
    if (tpr.empty()) throw ContractError("empty TPR vector");
    for (double t : tpr)
        if (!(t >= 0.0 && t <= 1.0)) throw ContractError("TPR outside [0, 1]");
    ClientFairness f;
    f.tpr = tpr;
    f.wtpr = *std::min_element(tpr.begin(), tpr.end());
    f.btpr = *std::max_element(tpr.begin(), tpr.end());
    f.tprd = f.btpr - f.wtpr;
    const double mean = std::accumulate(tpr.begin(), tpr.end(), 0.0) / static_cast<double>(tpr.size());
    double var = 0.0;
    for (double t : tpr) var += (t - mean) * (t - mean);
    const double denom = sample_sd ? static_cast<double>(tpr.size()) - 1.0
                                   : static_cast<double>(tpr.size());
    f.tprsd = denom > 0.0 ? std::sqrt(var / denom) : 0.0;
    f.verdict = evaluate_threshold(f.btpr, f.wtpr, eta_mu_threshold);
    return f;
}

namespace metrics_detail {

// Fractional ranks, average rank for ties.
inline std::vector<double> ranks(const std::vector<double>& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> r(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

inline double pearson(const std::vector<double>& u, const std::vector<double>& v) {
    const double n = static_cast<double>(u.size());
    const double mu = std::accumulate(u.begin(), u.end(), 0.0) / n;
    const double mv = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double suv = 0.0, suu = 0.0, svv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double du = u[i] - mu;
        const double dv = v[i] - mv;
        suv += du * dv;
        suu += du * du;
        svv += dv * dv;
    }
    if (suu == 0.0 || svv == 0.0) throw NumericError("correlation of a constant vector is undefined");
    return suv / std::sqrt(suu * svv);
}

} // namespace metrics_detail

// Spearman rank correlation: Pearson correlation of fractional ranks.
inline double spearman(const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size()) throw ContractError("vectors differ in length");
    if (u.size() < 2) throw ContractError("need at least 2 points");
    return metrics_detail::pearson(metrics_detail::ranks(u), metrics_detail::ranks(v));
}

// Rank correlation of two flattened parameter-shaped gradients, the
// cross-client heterogeneity diagnostic.
inline double gradient_correlation(const ModelParams& grad_a, const ModelParams& grad_b) {
    if (!grad_a.same_shape(grad_b)) throw ContractError("gradient shapes differ");
    std::vector<double> a = grad_a.weights;
    a.insert(a.end(), grad_a.bias.begin(), grad_a.bias.end());
    std::vector<double> b = grad_b.weights;
    b.insert(b.end(), grad_b.bias.begin(), grad_b.bias.end());
    return spearman(a, b);
}

} // namespace fairfed
