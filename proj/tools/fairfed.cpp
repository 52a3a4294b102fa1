// fairfed: deterministic federated-learning simulator with group-bias
// mitigation. `run` executes one experiment from a config file; `sweep`
// repeats it over a list of values for one config key.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fairfed/fairfed.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string seed;
    std::string algorithm;
    std::string dp_epsilon;
    std::string eta_mu;
    std::string output_dir;
    bool fail_on_threshold = false;
};

fairfed::ConfigOverrides to_overrides(const CommonFlags& flags) {
    fairfed::ConfigOverrides o;
    if (!flags.seed.empty())
        o.seed = static_cast<std::uint64_t>(
            fairfed::config_detail::parse_int("--seed", flags.seed));
    if (!flags.algorithm.empty()) o.algorithm = fairfed::parse_algorithm(flags.algorithm);
    if (!flags.dp_epsilon.empty())
        o.dp_epsilon = fairfed::config_detail::parse_double("--dp-epsilon", flags.dp_epsilon);
    if (!flags.eta_mu.empty())
        o.eta_mu = fairfed::config_detail::parse_double("--eta-mu", flags.eta_mu);
    if (!flags.output_dir.empty()) o.output_dir = flags.output_dir;
    return o;
}

int run_one(const fairfed::ExperimentConfig& cfg, bool fail_on_threshold, bool quiet,
            fairfed::ExperimentResult* out = nullptr) {
    if (cfg.output_dir.empty())
        throw fairfed::ConfigError("output_dir: required (set it in the config or via --output)");
    auto result = fairfed::run_experiment(cfg);
    fairfed::write_artifacts(result, cfg.output_dir);
    if (!quiet) {
        std::cout << "algorithm " << fairfed::algorithm_name(cfg.algorithm) << ", seed "
                  << cfg.seed << ", " << result.rounds.size() << " rounds"
                  << (result.halted_early ? " (halted on threshold violation)" : "") << "\n";
        std::cout << fairfed::format_report_table(result.final_report);
        std::cout << "artifacts written to " << cfg.output_dir << "\n";
    }
    const bool violated = fairfed::any_threshold_violation(result);
    if (out) *out = std::move(result);
    return (violated && fail_on_threshold) ? 2 : 0;
}

struct RunMetrics {
    double tprd = 0.0, tprsd = 0.0, wtpr = 0.0, btpr = 0.0;
};

RunMetrics client_means(const fairfed::FairnessReport& report) {
    RunMetrics m;
    for (const auto& f : report.per_client) {
        m.tprd += f.tprd;
        m.tprsd += f.tprsd;
        m.wtpr += f.wtpr;
        m.btpr += f.btpr;
    }
    const double n = static_cast<double>(report.per_client.size());
    m.tprd /= n;
    m.tprsd /= n;
    m.wtpr /= n;
    m.btpr /= n;
    return m;
}

int run_sweep(const CommonFlags& flags, const std::string& vary) {
    const auto eq = vary.find('=');
    if (eq == std::string::npos)
        throw fairfed::ConfigError("--vary: expected key=v1,v2,..., got '" + vary + "'");
    const std::string key = vary.substr(0, eq);
    std::vector<std::string> values;
    {
        std::stringstream ss(vary.substr(eq + 1));
        std::string item;
        while (std::getline(ss, item, ',')) values.push_back(item);
    }
    if (values.empty()) throw fairfed::ConfigError("--vary: no values given");

    std::ifstream in(flags.config_path);
    if (!in) throw fairfed::ConfigError("cannot open config file " + flags.config_path);
    fairfed::ExperimentConfig base = fairfed::parse_config_raw(in);
    fairfed::apply_overrides(base, to_overrides(flags));
    if (base.output_dir.empty())
        throw fairfed::ConfigError("output_dir: required (set it in the config or via --output)");

    const std::string base_dir = base.output_dir;
    std::vector<RunMetrics> metrics;
    int status = 0;
    for (const auto& value : values) {
        fairfed::ExperimentConfig cfg = base;
        fairfed::set_config_key(cfg, key, value);
        cfg.output_dir = base_dir + "/" + key + "_" + value;
        fairfed::finalize_config(cfg);
        std::cout << "=== " << key << " = " << value << " ===\n";
        fairfed::ExperimentResult result;
        status = std::max(status, run_one(cfg, flags.fail_on_threshold, false, &result));
        metrics.push_back(client_means(result.final_report));
    }

    // Per-run client means plus a mean / population-SD row across runs.
    std::string csv = "value,tprd,tprsd,wtpr,btpr\n";
    char buf[200];
    RunMetrics mean;
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f\n", values[i].c_str(),
                      metrics[i].tprd, metrics[i].tprsd, metrics[i].wtpr, metrics[i].btpr);
        csv += buf;
        mean.tprd += metrics[i].tprd;
        mean.tprsd += metrics[i].tprsd;
        mean.wtpr += metrics[i].wtpr;
        mean.btpr += metrics[i].btpr;
    }
    const double n = static_cast<double>(metrics.size());
    mean.tprd /= n;
    mean.tprsd /= n;
    mean.wtpr /= n;
    mean.btpr /= n;
    RunMetrics var;
    for (const auto& m : metrics) {
        var.tprd += (m.tprd - mean.tprd) * (m.tprd - mean.tprd);
        var.tprsd += (m.tprsd - mean.tprsd) * (m.tprsd - mean.tprsd);
        var.wtpr += (m.wtpr - mean.wtpr) * (m.wtpr - mean.wtpr);
        var.btpr += (m.btpr - mean.btpr) * (m.btpr - mean.btpr);
    }
    std::snprintf(buf, sizeof(buf), "mean,%.6f,%.6f,%.6f,%.6f\n", mean.tprd, mean.tprsd,
                  mean.wtpr, mean.btpr);
    csv += buf;
    std::snprintf(buf, sizeof(buf), "sd,%.6f,%.6f,%.6f,%.6f\n", std::sqrt(var.tprd / n),
                  std::sqrt(var.tprsd / n), std::sqrt(var.wtpr / n), std::sqrt(var.btpr / n));
    csv += buf;

    std::filesystem::create_directories(base_dir);
    std::ofstream out(std::filesystem::path(base_dir) / "sweep_summary.csv", std::ios::binary);
    out << csv;
    std::cout << "sweep summary written to " << base_dir << "/sweep_summary.csv\n";
    return status;
}

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "experiment config file")->required();
    cmd->add_option("--seed", flags.seed, "override the experiment seed");
    cmd->add_option("--algorithm", flags.algorithm, "override the algorithm (fedavg|mwr)");
    cmd->add_option("--dp-epsilon", flags.dp_epsilon, "override the privacy budget");
    cmd->add_option("--eta-mu", flags.eta_mu, "override the fairness rate");
    cmd->add_option("--output", flags.output_dir, "override the output directory");
    cmd->add_flag("--fail-on-threshold", flags.fail_on_threshold,
                  "exit nonzero if any round violates the best-group threshold");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fairfed: deterministic federated learning simulator with group-bias mitigation"};
    app.require_subcommand(1);

    CommonFlags run_flags;
    CLI::App* run_cmd = app.add_subcommand("run", "run one experiment");
    add_common_flags(run_cmd, run_flags);

    CommonFlags sweep_flags;
    std::string vary;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "run the experiment once per value");
    add_common_flags(sweep_cmd, sweep_flags);
    sweep_cmd->add_option("--vary", vary, "key=v1,v2,... list to sweep over")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            const auto cfg = fairfed::parse_config(run_flags.config_path, to_overrides(run_flags));
            return run_one(cfg, run_flags.fail_on_threshold, false);
        }
        return run_sweep(sweep_flags, vary);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
