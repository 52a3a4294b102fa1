#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fairfed/config.hpp"
#include "fairfed/data.hpp"
#include "fairfed/federation.hpp"
#include "fairfed/idx.hpp"
#include "fairfed/metrics.hpp"
#include "fairfed/privacy.hpp"

namespace fairfed {

// Everything shared at startup: the (possibly privatized) per-client
// likelihood vectors and their one-time mixture.
struct StartupRecord {
    std::vector<std::vector<double>> local_likelihoods;
    std::optional<double> dp_epsilon;
    std::vector<double> mixture;
    int dp_clamped_components = 0;
    std::vector<std::string> warnings;
};

struct ExperimentResult {
    ExperimentConfig config;
    StartupRecord startup;
    std::vector<RoundRecord> rounds;
    FairnessReport final_report;
    bool halted_early = false;
};

inline GroupedDataset build_dataset(const ExperimentConfig& cfg) {
    GroupedDataset ds =
        cfg.dataset == DatasetKind::synthetic
            ? generate_synthetic(cfg.seed, cfg.synth_groups, cfg.synth_classes,
                                 cfg.synth_per_group, cfg.synth_dim, cfg.synth_separation,
                                 cfg.synth_minority_share)
            : load_idx(cfg.idx_images, cfg.idx_labels, cfg.idx_limit);
    if (cfg.group_column) ds = with_groups_from_column(std::move(ds), *cfg.group_column);
    return ds;
}

// Full run: partition, fit likelihood models, share (privatized)
// likelihoods, mix once, then T federation rounds. Pure given the
// config; all randomness comes from config.seed through named streams.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    if (cfg.rounds < 1) throw ConfigError("rounds: must be at least 1");
    if (!cfg.eta_mu.has_value()) throw ConfigError("eta_mu: config was not finalized");
    ExperimentResult result;
    result.config = cfg;

    const GroupedDataset dataset = build_dataset(cfg);
    auto shards = partition(dataset, cfg.num_clients, cfg.noise_plan, cfg.seed, cfg.test_fraction);

    const Rng root(cfg.seed);
    std::vector<ClientState> clients;
    clients.reserve(shards.size());
    for (auto& shard : shards) {
        const auto k = static_cast<std::uint64_t>(shard.client_id);
        ClientState client;
        client.lambda = init_lambda(shard.train.group_priors());
        client.rng_seed = root.child(stream::local_sgd, k).seed();

        Rng lik_rng = root.child(stream::likelihood, k);
        const ModelParams lik_model = fit_group_likelihood(
            shard.train, cfg.likelihood_epochs, cfg.lr, cfg.batch_size, lik_rng);
        if (lik_model.is_zero())
            result.startup.warnings.push_back("client " + std::to_string(shard.client_id) +
                                              ": untrained likelihood model");
        auto likelihoods = local_group_likelihoods(shard.train, lik_model);

        std::optional<PrivacyBudget> budget;
        if (cfg.dp_epsilon) {
            budget = PrivacyBudget{*cfg.dp_epsilon,
                                   cfg.dp_sensitivity.value_or(
                                       1.0 / static_cast<double>(shard.train.samples.size()))};
        }
        Rng dp_rng = root.child(stream::dp, k);
        auto shared = privatize_likelihoods(likelihoods, budget, dp_rng);
        result.startup.dp_clamped_components += shared.clamped_components;
        client.local_likelihoods = std::move(shared.likelihoods);
        result.startup.local_likelihoods.push_back(client.local_likelihoods);

        client.shard = std::move(shard);
        clients.push_back(std::move(client));
    }
    result.startup.dp_epsilon = cfg.dp_epsilon;

    std::vector<std::vector<double>> vectors;
    for (const auto& c : clients) vectors.push_back(c.local_likelihoods);
    const std::vector<double> uniform_probs(clients.size(), 1.0 / static_cast<double>(clients.size()));
    const MixtureLikelihoods mixture = mix_likelihoods(vectors, uniform_probs);
    result.startup.mixture = mixture.per_group;
    for (std::size_t g = 0; g < mixture.per_group.size(); ++g)
        if (mixture.per_group[g] <= mixture_floor)
            result.startup.warnings.push_back("group " + std::to_string(g) +
                                              ": mixture likelihood collapsed to the floor");

    Rng init_rng = root.child(stream::model_init);
    ModelParams global =
        ModelParams::random_init(dataset.num_classes, dataset.feature_dim, init_rng);

    RoundOptions options;
    options.lr = cfg.lr;
    options.batch_size = cfg.batch_size;
    options.l1_coeff = cfg.l1_coeff;
    options.eta_mu = cfg.eta_mu.value();
    options.local_epochs = cfg.local_epochs;
    options.loss_mode = cfg.group_loss_mode;
    options.uniform_weights = cfg.uniform_weights;
    options.eta_mu_threshold = cfg.eta_mu_threshold;
    options.tprsd_sample = cfg.tprsd_sample;
    options.track_gradient_correlations = cfg.log_gradient_correlations;

    for (int r = 0; r < cfg.rounds; ++r) {
        auto [next_global, record] = run_round(clients, global, mixture, options, r);
        global = std::move(next_global);
        bool violated = false;
        for (const auto& cr : record.clients)
            if (!cr.fairness.verdict.satisfied) violated = true;
        result.rounds.push_back(std::move(record));
        if (violated && cfg.halt_on_violation) {
            result.halted_early = true;
            break;
        }
    }

    for (const auto& cr : result.rounds.back().clients)
        result.final_report.per_client.push_back(cr.fairness);
    return result;
}

inline bool any_threshold_violation(const ExperimentResult& result) {
    for (const auto& round : result.rounds)
        for (const auto& cr : round.clients)
            if (!cr.fairness.verdict.satisfied) return true;
    return false;
}

// --- artifact persistence ------------------------------------------------

namespace artifact_detail {

inline void write_atomic(const std::filesystem::path& path, const std::string& contents) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        out << contents;
    }
    std::filesystem::rename(tmp, path);
}

inline std::string checkpoint_name(int round_index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "checkpoints/round_%03d.bin", round_index);
    return buf;
}

} // namespace artifact_detail

inline nlohmann::json report_json(const ExperimentResult& result) {
    nlohmann::json clients = nlohmann::json::array();
    for (const auto& f : result.final_report.per_client) {
        clients.push_back({{"client_id", f.client_id},
                           {"tpr", f.tpr},
                           {"tprd", f.tprd},
                           {"tprsd", f.tprsd},
                           {"wtpr", f.wtpr},
                           {"btpr", f.btpr},
                           {"threshold", f.verdict.threshold},
                           {"threshold_eta_mu", f.verdict.eta_mu},
                           {"threshold_satisfied", f.verdict.satisfied}});
    }
    return {{"algorithm", algorithm_name(result.config.algorithm)},
            {"seed", result.config.seed},
            {"rounds_completed", result.rounds.size()},
            {"halted_early", result.halted_early},
            {"clients", clients}};
}

// CSV report mirrors the summary table: percentages, one decimal.
inline std::string report_csv(const FairnessReport& report) {
    std::string out = "client,tprd,tprsd,wtpr,btpr,threshold,satisfied\n";
    char buf[160];
    for (const auto& f : report.per_client) {
        std::snprintf(buf, sizeof(buf), "%d,%.1f,%.1f,%.1f,%.1f,%.1f,%s\n", f.client_id,
                      100.0 * f.tprd, 100.0 * f.tprsd, 100.0 * f.wtpr, 100.0 * f.btpr,
                      100.0 * f.verdict.threshold, f.verdict.satisfied ? "yes" : "no");
        out += buf;
    }
    return out;
}

inline std::string format_report_table(const FairnessReport& report) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-8s %8s %8s %8s %8s %10s %10s\n", "client", "TPRD",
                  "TPRSD", "WTPR", "BTPR", "threshold", "satisfied");
    out += buf;
    for (const auto& f : report.per_client) {
        std::snprintf(buf, sizeof(buf), "%-8d %8.1f %8.1f %8.1f %8.1f %10.1f %10s\n",
                      f.client_id, 100.0 * f.tprd, 100.0 * f.tprsd, 100.0 * f.wtpr,
                      100.0 * f.btpr, 100.0 * f.verdict.threshold,
                      f.verdict.satisfied ? "yes" : "no");
        out += buf;
    }
    return out;
}

// JSON-lines log: exactly one startup record, then one record per
// (round, client), plus one diagnostic record per round when gradient
// correlations are tracked.
inline std::string experiment_log(const ExperimentResult& result) {
    std::string out;
    {
        nlohmann::json startup = {
            {"record", "startup"},
            {"local_likelihoods", result.startup.local_likelihoods},
            {"dp_epsilon",
             result.startup.dp_epsilon ? nlohmann::json(*result.startup.dp_epsilon)
                                       : nlohmann::json(nullptr)},
            {"mixture", result.startup.mixture},
            {"dp_clamped_components", result.startup.dp_clamped_components},
            {"warnings", result.startup.warnings}};
        out += startup.dump() + "\n";
    }
    for (const auto& round : result.rounds) {
        for (const auto& cr : round.clients) {
            nlohmann::json rec = {{"record", "round"},
                                  {"round", round.round_index},
                                  {"client_id", cr.client_id},
                                  {"group_losses", cr.group_losses.per_group},
                                  {"lambda", cr.lambda},
                                  {"weights_raw", cr.weights.raw},
                                  {"weights_normalized", cr.weights.normalized},
                                  {"tpr", cr.fairness.tpr},
                                  {"tprd", cr.fairness.tprd},
                                  {"tprsd", cr.fairness.tprsd},
                                  {"wtpr", cr.fairness.wtpr},
                                  {"btpr", cr.fairness.btpr},
                                  {"threshold", cr.fairness.verdict.threshold},
                                  {"threshold_satisfied", cr.fairness.verdict.satisfied},
                                  {"checkpoint", artifact_detail::checkpoint_name(round.round_index)}};
            out += rec.dump() + "\n";
        }
        if (!round.gradient_correlations.empty()) {
            nlohmann::json rec = {{"record", "gradient_correlations"},
                                  {"round", round.round_index},
                                  {"matrix", round.gradient_correlations}};
            out += rec.dump() + "\n";
        }
    }
    return out;
}

// Persists config echo, JSON-lines log, per-round checkpoints, and the
// final report (JSON + CSV). Files land atomically (write + rename).
inline void write_artifacts(const ExperimentResult& result, const std::string& output_dir) {
    namespace fs = std::filesystem;
    const fs::path dir(output_dir);
    fs::create_directories(dir / "checkpoints");

    artifact_detail::write_atomic(dir / "config.echo", echo_config(result.config));
    artifact_detail::write_atomic(dir / "log.jsonl", experiment_log(result));
    artifact_detail::write_atomic(dir / "report.json", report_json(result).dump(2) + "\n");
    artifact_detail::write_atomic(dir / "report.csv", report_csv(result.final_report));
    for (const auto& round : result.rounds) {
        const fs::path path = dir / artifact_detail::checkpoint_name(round.round_index);
        const fs::path tmp = path.string() + ".tmp";
        save_params(round.global_after, tmp.string());
        fs::rename(tmp, path);
    }
}

} // namespace fairfed
