#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "fairfed/data.hpp"
#include "fairfed/errors.hpp"
#include "fairfed/rng.hpp"

namespace fairfed {

// Dense multiclass softmax linear classifier. The same parameter shape
// serves the task model (num_outputs = classes) and the group
// likelihood model (num_outputs = groups). Parameters are immutable
// values; training returns new ones.
struct ModelParams {
    int num_outputs = 0;
    int feature_dim = 0;
    std::vector<double> weights; // num_outputs x feature_dim, row-major
    std::vector<double> bias;    // num_outputs

    static ModelParams zeros(int num_outputs, int feature_dim) {
        ModelParams p;
        p.num_outputs = num_outputs;
        p.feature_dim = feature_dim;
        p.weights.assign(static_cast<std::size_t>(num_outputs) * feature_dim, 0.0);
        p.bias.assign(static_cast<std::size_t>(num_outputs), 0.0);
        return p;
    }

    // Small random init, N(0, scale^2) weights, zero bias.
    static ModelParams random_init(int num_outputs, int feature_dim, Rng& rng,
                                   double scale = 0.01) {
        ModelParams p = zeros(num_outputs, feature_dim);
        for (auto& w : p.weights) w = scale * rng.normal();
        return p;
    }

    std::size_t parameter_count() const { return weights.size() + bias.size(); }

    bool same_shape(const ModelParams& other) const {
        return num_outputs == other.num_outputs && feature_dim == other.feature_dim;
    }

    bool is_zero() const {
        for (double w : weights)
            if (w != 0.0) return false;
        for (double b : bias)
            if (b != 0.0) return false;
        return true;
    }
};

// Unweighted per-group mean cross-entropy over a batch, plus the group
// counts the means were taken over.
struct GroupLossVector {
    std::vector<double> per_group;
    std::vector<std::size_t> counts;
};

// How a GroupLossVector turns into the risks fed to the multiplicative
// update: the within-group mean (default), or the sum over the group
// divided by the number of groups, which scales with group size and is
// the regime the very small fairness rates are calibrated for.
enum class GroupLossMode { group_mean, sum_over_num_groups };

inline std::vector<double> group_risks(const GroupLossVector& losses, GroupLossMode mode) {
    std::vector<double> eps = losses.per_group;
    if (mode == GroupLossMode::sum_over_num_groups) {
        const double num_groups = static_cast<double>(eps.size());
        for (std::size_t j = 0; j < eps.size(); ++j)
            eps[j] = eps[j] * static_cast<double>(losses.counts[j]) / num_groups;
    }
    return eps;
}

// Loss weighting for local training: either normalized per-group
// weights (each group's batch mean scaled by its weight), or plain
// empirical risk where every sample counts 1/batch.
struct GroupWeighting {
    std::optional<std::vector<double>> group_weights;

    static GroupWeighting erm() { return {}; }
    static GroupWeighting weighted(std::vector<double> normalized) {
        return {std::move(normalized)};
    }
    bool is_erm() const { return !group_weights.has_value(); }
};

inline int argmax_lowest(const std::vector<double>& values) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(values.size()); ++i)
        if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(best)]) best = i;
    return best;
}

// softmax(W x + b), computed with max-subtraction so extreme logits
// stay finite.
inline std::vector<double> forward(const ModelParams& params, const std::vector<double>& features) {
    if (static_cast<int>(features.size()) != params.feature_dim)
        throw ShapeError("feature dimension " + std::to_string(features.size()) +
                         " does not match model dimension " + std::to_string(params.feature_dim));
    std::vector<double> logits(static_cast<std::size_t>(params.num_outputs));
    for (int k = 0; k < params.num_outputs; ++k) {
        const double* row = params.weights.data() + static_cast<std::size_t>(k) * params.feature_dim;
        double z = params.bias[static_cast<std::size_t>(k)];
        for (int j = 0; j < params.feature_dim; ++j) z += row[j] * features[static_cast<std::size_t>(j)];
        logits[static_cast<std::size_t>(k)] = z;
    }
    const double z_max = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (auto& z : logits) {
        z = std::exp(z - z_max);
        denom += z;
    }
    for (auto& z : logits) z /= denom;
    return logits;
}

namespace model_detail {

// Per-sample loss coefficients realizing the configured weighting over
// one batch. Weighted mode: sample i of group j gets w_j / n_j(batch),
// i.e. the loss is sum_j w_j * (group-j batch mean). ERM mode: 1/n.
inline std::vector<double> sample_coefficients(const std::vector<const Sample*>& batch,
                                               int num_groups, const GroupWeighting& weighting,
                                               GroupLossVector& out_counts) {
    out_counts.counts.assign(static_cast<std::size_t>(num_groups), 0);
    for (const Sample* s : batch) {
        if (s->group < 0 || s->group >= num_groups)
            throw ContractError("sample group " + std::to_string(s->group) +
                                " outside the weighted range");
        out_counts.counts[static_cast<std::size_t>(s->group)]++;
    }
    std::vector<double> coeff(batch.size());
    if (weighting.is_erm()) {
        const double c = 1.0 / static_cast<double>(batch.size());
        std::fill(coeff.begin(), coeff.end(), c);
        return coeff;
    }
    const auto& w = *weighting.group_weights;
    if (static_cast<int>(w.size()) != num_groups)
        throw ContractError("group weight vector has " + std::to_string(w.size()) +
                            " entries for " + std::to_string(num_groups) + " groups");
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto g = static_cast<std::size_t>(batch[i]->group);
        coeff[i] = w[g] / static_cast<double>(out_counts.counts[g]);
    }
    return coeff;
}

inline double penalty(const ModelParams& params, double l1_coeff) {
    if (l1_coeff == 0.0) return 0.0;
    double sum = 0.0;
    for (double w : params.weights) sum += std::abs(w);
    for (double b : params.bias) sum += std::abs(b);
    return l1_coeff * sum / static_cast<double>(params.parameter_count());
}

inline double safe_log(double p) { return std::log(std::max(p, 1e-300)); }

} // namespace model_detail

struct LossResult {
    double loss = 0.0;
    GroupLossVector group_losses;
};

// Weighted batch objective: sum_j w_j * (mean cross-entropy of group j
// in the batch) + l1_coeff * mean |theta|. Also reports the unweighted
// per-group means. ERM weighting reduces this to the plain batch mean.
inline LossResult weighted_group_loss(const ModelParams& params,
                                      const std::vector<const Sample*>& batch, int num_groups,
                                      const GroupWeighting& weighting, double l1_coeff) {
    if (batch.empty()) throw ContractError("empty batch");
    if (l1_coeff < 0.0) throw ConfigError("l1_coeff must be nonnegative");
    LossResult result;
    const auto coeff =
        model_detail::sample_coefficients(batch, num_groups, weighting, result.group_losses);

    result.group_losses.per_group.assign(static_cast<std::size_t>(num_groups), 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Sample& s = *batch[i];
        const auto probs = forward(params, s.features);
        const double ce = -model_detail::safe_log(probs[static_cast<std::size_t>(s.label)]);
        loss += coeff[i] * ce;
        result.group_losses.per_group[static_cast<std::size_t>(s.group)] += ce;
    }
    for (std::size_t j = 0; j < result.group_losses.per_group.size(); ++j)
        if (result.group_losses.counts[j] > 0)
            result.group_losses.per_group[j] /= static_cast<double>(result.group_losses.counts[j]);

    result.loss = loss + model_detail::penalty(params, l1_coeff);
    return result;
}

inline LossResult weighted_group_loss(const ModelParams& params, const GroupedDataset& data,
                                      const GroupWeighting& weighting, double l1_coeff) {
    std::vector<const Sample*> batch;
    batch.reserve(data.samples.size());
    for (const auto& s : data.samples) batch.push_back(&s);
    return weighted_group_loss(params, batch, data.num_groups, weighting, l1_coeff);
}

struct GradResult {
    ModelParams grad;
    double loss = 0.0;
    GroupLossVector group_losses;
};

// Exact gradient of weighted_group_loss. The L1 term contributes
// (l1/m) sign(theta) with sign(0) = 0.
inline GradResult gradient(const ModelParams& params, const std::vector<const Sample*>& batch,
                           int num_groups, const GroupWeighting& weighting, double l1_coeff) {
    if (batch.empty()) throw ContractError("empty batch");
    if (l1_coeff < 0.0) throw ConfigError("l1_coeff must be nonnegative");
    GradResult result;
    result.grad = ModelParams::zeros(params.num_outputs, params.feature_dim);
    const auto coeff =
        model_detail::sample_coefficients(batch, num_groups, weighting, result.group_losses);

    result.group_losses.per_group.assign(static_cast<std::size_t>(num_groups), 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Sample& s = *batch[i];
        const auto probs = forward(params, s.features);
        const double ce = -model_detail::safe_log(probs[static_cast<std::size_t>(s.label)]);
        loss += coeff[i] * ce;
        result.group_losses.per_group[static_cast<std::size_t>(s.group)] += ce;
        for (int k = 0; k < params.num_outputs; ++k) {
            const double delta =
                coeff[i] * (probs[static_cast<std::size_t>(k)] - (k == s.label ? 1.0 : 0.0));
            if (delta == 0.0) continue;
            double* grow =
                result.grad.weights.data() + static_cast<std::size_t>(k) * params.feature_dim;
            for (int j = 0; j < params.feature_dim; ++j)
                grow[j] += delta * s.features[static_cast<std::size_t>(j)];
            result.grad.bias[static_cast<std::size_t>(k)] += delta;
        }
    }
    for (std::size_t j = 0; j < result.group_losses.per_group.size(); ++j)
        if (result.group_losses.counts[j] > 0)
            result.group_losses.per_group[j] /= static_cast<double>(result.group_losses.counts[j]);

    if (l1_coeff > 0.0) {
        const double scale = l1_coeff / static_cast<double>(params.parameter_count());
        for (std::size_t i = 0; i < params.weights.size(); ++i) {
            const double w = params.weights[i];
            if (w > 0.0) result.grad.weights[i] += scale;
            else if (w < 0.0) result.grad.weights[i] -= scale;
        }
        for (std::size_t i = 0; i < params.bias.size(); ++i) {
            const double b = params.bias[i];
            if (b > 0.0) result.grad.bias[i] += scale;
            else if (b < 0.0) result.grad.bias[i] -= scale;
        }
    }
    result.loss = loss + model_detail::penalty(params, l1_coeff);
    return result;
}

inline GradResult gradient(const ModelParams& params, const GroupedDataset& data,
                           const GroupWeighting& weighting, double l1_coeff) {
    std::vector<const Sample*> batch;
    batch.reserve(data.samples.size());
    for (const auto& s : data.samples) batch.push_back(&s);
    return gradient(params, batch, data.num_groups, weighting, l1_coeff);
}

// One pass over the shuffled training data in mini-batches; the final
// partial batch is processed, not dropped. Deterministic in the rng.
inline ModelParams sgd_epoch(ModelParams params, const GroupedDataset& train,
                             const GroupWeighting& weighting, double lr, int batch_size,
                             double l1_coeff, Rng& rng) {
    if (train.samples.empty()) throw ContractError("cannot train on an empty shard");
    if (lr < 0.0) throw ConfigError("learning rate must be nonnegative");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");

    std::vector<std::size_t> order(train.samples.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    std::vector<const Sample*> batch;
    batch.reserve(static_cast<std::size_t>(batch_size));
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        batch.clear();
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        for (std::size_t i = start; i < end; ++i) batch.push_back(&train.samples[order[i]]);
        const auto g = gradient(params, batch, train.num_groups, weighting, l1_coeff);
        for (std::size_t i = 0; i < params.weights.size(); ++i)
            params.weights[i] -= lr * g.grad.weights[i];
        for (std::size_t i = 0; i < params.bias.size(); ++i)
            params.bias[i] -= lr * g.grad.bias[i];
    }
    return params;
}

// Trains the group likelihood model: a |G|-output softmax fit with
// plain cross-entropy on (features -> group) targets.
inline ModelParams fit_group_likelihood(const GroupedDataset& train, int epochs, double lr,
                                        int batch_size, Rng& rng) {
    if (train.samples.empty()) throw ContractError("cannot fit likelihoods on an empty shard");
    const auto counts = train.group_counts();
    int present = 0;
    for (auto c : counts)
        if (c > 0) present++;
    if (present < 2)
        throw ConfigError("group likelihood model needs at least 2 groups, shard has " +
                          std::to_string(present));

    GroupedDataset relabeled = train;
    for (auto& s : relabeled.samples) s.label = s.group;
    relabeled.num_classes = train.num_groups;

    ModelParams params = ModelParams::random_init(train.num_groups, train.feature_dim, rng);
    for (int e = 0; e < epochs; ++e)
        params = sgd_epoch(std::move(params), relabeled, GroupWeighting::erm(), lr, batch_size,
                           0.0, rng);
    return params;
}

inline double accuracy(const ModelParams& params, const GroupedDataset& data,
                       bool against_group = false) {
    std::size_t correct = 0;
    for (const auto& s : data.samples) {
        const int predicted = argmax_lowest(forward(params, s.features));
        if (predicted == (against_group ? s.group : s.label)) correct++;
    }
    return static_cast<double>(correct) / static_cast<double>(data.samples.size());
}

// --- checkpoint format -------------------------------------------------
// Little-endian: u32 num_outputs, u32 feature_dim, then the weight
// matrix row-major and the bias vector as f64.

namespace model_detail {

inline void put_le32(std::ostream& out, std::uint32_t v) {
    const unsigned char bytes[4] = {
        static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

inline void put_le64f(std::ostream& out, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

inline std::uint32_t get_le32(std::istream& in, const std::string& path) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4))
        throw FormatError(path + ": truncated checkpoint header");
    return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
           (static_cast<std::uint32_t>(bytes[2]) << 16) |
           (static_cast<std::uint32_t>(bytes[3]) << 24);
}

inline double get_le64f(std::istream& in, const std::string& path) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8))
        throw FormatError(path + ": truncated checkpoint payload");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

} // namespace model_detail

inline void save_params(const ModelParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    model_detail::put_le32(out, static_cast<std::uint32_t>(params.num_outputs));
    model_detail::put_le32(out, static_cast<std::uint32_t>(params.feature_dim));
    for (double w : params.weights) model_detail::put_le64f(out, w);
    for (double b : params.bias) model_detail::put_le64f(out, b);
}

inline ModelParams load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    const auto num_outputs = static_cast<int>(model_detail::get_le32(in, path));
    const auto feature_dim = static_cast<int>(model_detail::get_le32(in, path));
    if (num_outputs < 1 || feature_dim < 1) throw FormatError(path + ": bad checkpoint header");
    ModelParams params = ModelParams::zeros(num_outputs, feature_dim);
    for (auto& w : params.weights) w = model_detail::get_le64f(in, path);
    for (auto& b : params.bias) b = model_detail::get_le64f(in, path);
    return params;
}

} // namespace fairfed
