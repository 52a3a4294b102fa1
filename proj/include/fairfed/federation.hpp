#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fairfed/data.hpp"
#include "fairfed/errors.hpp"
#include "fairfed/fairness.hpp"
#include "fairfed/metrics.hpp"
#include "fairfed/model.hpp"
#include "fairfed/rng.hpp"

namespace fairfed {

// Global per-group average conditional likelihoods p(G = g | X),
// obtained once at startup as the client-probability mixture of the
// local averages. Components are averaged independently per group and
// are not renormalized; only positivity matters for the importance
// division.
struct MixtureLikelihoods {
    std::vector<double> per_group;
    int client_count = 0;
};

inline constexpr double mixture_floor = 1e-9;

struct ClientState {
    ClientShard shard;
    ModelParams task_model;
    LambdaState lambda;
    std::vector<double> local_likelihoods; // per-group averages as shared (post-privacy)
    std::uint64_t rng_seed = 0;            // root of this client's training streams
};

struct ClientRoundRecord {
    int client_id = 0;
    GroupLossVector group_losses; // on the full local train set, post-training
    ImportanceWeights weights;
    std::vector<double> lambda; // after the multiplicative update
    ClientFairness fairness;    // aggregated model on the local test set
};

struct RoundRecord {
    int round_index = 0;
    std::vector<ClientRoundRecord> clients;
    ModelParams global_after;
    // Pairwise rank correlation of per-client gradients at the
    // aggregated model; empty unless the diagnostic is enabled.
    std::vector<std::vector<double>> gradient_correlations;
};

struct RoundOptions {
    double lr = 0.01;
    int batch_size = 128;
    double l1_coeff = 0.0;
    double eta_mu = 0.0;
    int local_epochs = 1;
    GroupLossMode loss_mode = GroupLossMode::group_mean;
    bool uniform_weights = false; // plain ERM local training (the FedAvg baseline)
    double eta_mu_threshold = 0.5;
    bool tprsd_sample = false;
    bool track_gradient_correlations = false;
};

// Mean predicted probability per group over a client's train samples.
inline std::vector<double> local_group_likelihoods(const GroupedDataset& train,
                                                   const ModelParams& likelihood_model) {
    if (train.samples.empty()) throw ContractError("no samples to average likelihoods over");
    std::vector<double> mean(static_cast<std::size_t>(likelihood_model.num_outputs), 0.0);
    for (const auto& s : train.samples) {
        const auto probs = forward(likelihood_model, s.features);
        for (std::size_t g = 0; g < mean.size(); ++g) mean[g] += probs[g];
    }
    for (auto& m : mean) m /= static_cast<double>(train.samples.size());
    return mean;
}

// Law-of-total-probability mixture of the clients' local likelihood
// vectors. Components are floored so they can serve as denominators.
inline MixtureLikelihoods mix_likelihoods(const std::vector<std::vector<double>>& client_vectors,
                                          const std::vector<double>& client_probs) {
    if (client_vectors.empty()) throw ContractError("no client likelihood vectors");
    if (client_vectors.size() != client_probs.size())
        throw ContractError("client vector and probability counts differ");
    double prob_sum = 0.0;
    for (double p : client_probs) {
        if (p < 0.0) throw ContractError("negative client probability");
        prob_sum += p;
    }
    if (std::abs(prob_sum - 1.0) > 1e-9)
        throw ContractError("client probabilities sum to " + std::to_string(prob_sum));

    const std::size_t num_groups = client_vectors.front().size();
    MixtureLikelihoods mixture;
    mixture.client_count = static_cast<int>(client_vectors.size());
    mixture.per_group.assign(num_groups, 0.0);
    for (std::size_t k = 0; k < client_vectors.size(); ++k) {
        if (client_vectors[k].size() != num_groups)
            throw ContractError("client " + std::to_string(k) +
                                " likelihood vector length mismatch");
        for (std::size_t g = 0; g < num_groups; ++g)
            mixture.per_group[g] += client_probs[k] * client_vectors[k][g];
    }
    for (auto& m : mixture.per_group) m = std::max(m, mixture_floor);
    return mixture;
}

// Sample-count-weighted parameter average.
inline ModelParams fedavg(const std::vector<ModelParams>& client_params,
                          const std::vector<std::size_t>& sample_counts) {
    if (client_params.empty()) throw ContractError("no client models to aggregate");
    if (client_params.size() != sample_counts.size())
        throw ContractError("model and count lists differ in length");
    double total = 0.0;
    for (std::size_t n : sample_counts) {
        if (n == 0) throw ContractError("client sample count is zero");
        total += static_cast<double>(n);
    }
    ModelParams avg = ModelParams::zeros(client_params.front().num_outputs,
                                         client_params.front().feature_dim);
    for (std::size_t k = 0; k < client_params.size(); ++k) {
        const auto& p = client_params[k];
        if (!p.same_shape(avg)) throw ContractError("client model shapes differ");
        const double w = static_cast<double>(sample_counts[k]) / total;
        for (std::size_t i = 0; i < avg.weights.size(); ++i) avg.weights[i] += w * p.weights[i];
        for (std::size_t i = 0; i < avg.bias.size(); ++i) avg.bias[i] += w * p.bias[i];
    }
    return avg;
}

// One federation round over all clients (no client sampling): each
// client copies the global model, trains locally with its importance
// weights, refreshes lambda from its post-training group risks; the
// server aggregates and the aggregate is scored on every local test
// set.
inline std::pair<ModelParams, RoundRecord> run_round(std::vector<ClientState>& clients,
                                                     const ModelParams& global_model,
                                                     const MixtureLikelihoods& mixture,
                                                     const RoundOptions& options,
                                                     int round_index) {
    if (clients.empty()) throw ContractError("no clients");
    RoundRecord record;
    record.round_index = round_index;

    std::vector<ModelParams> local_params;
    std::vector<std::size_t> counts;
    local_params.reserve(clients.size());
    counts.reserve(clients.size());

    for (auto& client : clients) {
        try {
            ClientRoundRecord cr;
            cr.client_id = client.shard.client_id;
            cr.weights = compute_importance(client.lambda, mixture.per_group);
            const GroupWeighting weighting =
                options.uniform_weights ? GroupWeighting::erm()
                                        : GroupWeighting::weighted(cr.weights.normalized);

            ModelParams params = global_model;
            Rng rng = Rng(client.rng_seed)
                          .child(stream::local_sgd, static_cast<std::uint64_t>(round_index));
            for (int e = 0; e < options.local_epochs; ++e)
                params = sgd_epoch(std::move(params), client.shard.train, weighting, options.lr,
                                   options.batch_size, options.l1_coeff, rng);

            cr.group_losses = weighted_group_loss(params, client.shard.train,
                                                  GroupWeighting::erm(), 0.0)
                                  .group_losses;
            client.lambda = mw_update(client.lambda, cr.group_losses, options.eta_mu,
                                      options.loss_mode);
            cr.lambda = client.lambda.lambda;
            client.task_model = params;

            local_params.push_back(std::move(params));
            counts.push_back(client.shard.train.samples.size());
            record.clients.push_back(std::move(cr));
        } catch (const Error& e) {
            throw Error("round " + std::to_string(round_index) + ", client " +
                        std::to_string(client.shard.client_id) + ": " + e.what());
        }
    }

    ModelParams next_global = fedavg(local_params, counts);

    for (std::size_t k = 0; k < clients.size(); ++k) {
        try {
            const auto tpr = group_tpr(next_global, clients[k].shard.test);
            record.clients[k].fairness =
                fairness_summary(tpr, options.eta_mu_threshold, options.tprsd_sample);
            record.clients[k].fairness.client_id = clients[k].shard.client_id;
        } catch (const Error& e) {
            throw Error("round " + std::to_string(round_index) + ", client " +
                        std::to_string(clients[k].shard.client_id) + ": " + e.what());
        }
    }

    if (options.track_gradient_correlations) {
        std::vector<ModelParams> grads;
        grads.reserve(clients.size());
        for (const auto& client : clients)
            grads.push_back(
                gradient(next_global, client.shard.train, GroupWeighting::erm(), 0.0).grad);
        record.gradient_correlations.assign(clients.size(),
                                            std::vector<double>(clients.size(), 1.0));
        for (std::size_t a = 0; a < grads.size(); ++a)
            for (std::size_t b = a + 1; b < grads.size(); ++b) {
                const double rho = gradient_correlation(grads[a], grads[b]);
                record.gradient_correlations[a][b] = rho;
                record.gradient_correlations[b][a] = rho;
            }
    }

    record.global_after = next_global;
    return {std::move(next_global), std::move(record)};
}

} // namespace fairfed
