#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fairfed/errors.hpp"
#include "fairfed/model.hpp"

namespace fairfed {

enum class Algorithm { fedavg, mwr };

enum class DatasetKind { synthetic, idx };

// Everything a run needs, parsed from a flat key = value file with
// command-line overrides on top. The parsed form is echoed verbatim
// into the output directory and must round-trip.
struct ExperimentConfig {
    // dataset
    DatasetKind dataset = DatasetKind::synthetic;
    int synth_groups = 2;
    int synth_classes = 2;
    int synth_per_group = 200;
    int synth_dim = 16;
    double synth_separation = 14.0;
    double synth_minority_share = 1.0;
    std::string idx_images;
    std::string idx_labels;
    std::uint64_t idx_limit = 2000;
    std::optional<int> group_column;

    // federation
    int num_clients = 0;
    std::vector<double> noise_plan;
    Algorithm algorithm = Algorithm::mwr;
    int rounds = 0;
    int local_epochs = 1;
    double test_fraction = 0.25;

    // local training
    double lr = 0.01;
    int batch_size = 128;
    double l1_coeff = 1e-5;

    // fairness
    std::optional<double> eta_mu; // required for mwr, forced 0 for fedavg
    double eta_mu_threshold = 0.5;
    GroupLossMode group_loss_mode = GroupLossMode::group_mean;
    bool uniform_weights = false; // forced on for fedavg
    bool halt_on_violation = false;
    bool tprsd_sample = false; // sample (1/(n-1)) instead of population SD

    // likelihood sharing / privacy
    int likelihood_epochs = 20;
    std::optional<double> dp_epsilon;      // absent = privacy disabled
    std::optional<double> dp_sensitivity;  // absent = 1/n_k per client

    // bookkeeping
    std::uint64_t seed = 1;
    std::string output_dir;
    bool log_gradient_correlations = false;

    bool operator==(const ExperimentConfig&) const = default;
};

// Flag-level overrides applied on top of the file.
struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<Algorithm> algorithm;
    std::optional<double> dp_epsilon;
    std::optional<double> eta_mu;
    std::optional<std::string> output_dir;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

inline double parse_double(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0')
        throw ConfigError(key + ": cannot parse '" + value + "' as a number");
    return v;
}

inline long long parse_int(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const long long v = std::strtoll(value.c_str(), &end, 10);
    if (end == value.c_str() || *end != '\0')
        throw ConfigError(key + ": cannot parse '" + value + "' as an integer");
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError(key + ": cannot parse '" + value + "' as a boolean");
}

inline std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
    return out;
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace config_detail

inline Algorithm parse_algorithm(const std::string& value) {
    if (value == "fedavg") return Algorithm::fedavg;
    if (value == "mwr") return Algorithm::mwr;
    throw ConfigError("algorithm: expected 'fedavg' or 'mwr', got '" + value + "'");
}

inline std::string algorithm_name(Algorithm a) {
    return a == Algorithm::fedavg ? "fedavg" : "mwr";
}

// Applies the fedavg coupling and checks every invariant. Called after
// parsing and after overrides.
inline void finalize_config(ExperimentConfig& cfg) {
    using config_detail::parse_double;
    if (cfg.algorithm == Algorithm::fedavg) {
        cfg.eta_mu = 0.0;
        cfg.l1_coeff = 0.0;
        cfg.uniform_weights = true;
    }
    if (!cfg.eta_mu.has_value())
        throw ConfigError("eta_mu: required when algorithm is mwr");
    if (cfg.num_clients < 2) throw ConfigError("num_clients: need at least 2");
    if (static_cast<int>(cfg.noise_plan.size()) != cfg.num_clients)
        throw ConfigError("noise_plan: has " + std::to_string(cfg.noise_plan.size()) +
                          " entries but num_clients is " + std::to_string(cfg.num_clients));
    for (double v : cfg.noise_plan)
        if (v < 0.0) throw ConfigError("noise_plan: variances must be nonnegative");
    if (cfg.rounds < 1) throw ConfigError("rounds: must be at least 1");
    if (!(cfg.lr > 0.0)) throw ConfigError("lr: must be positive");
    if (cfg.batch_size < 1) throw ConfigError("batch_size: must be at least 1");
    if (cfg.l1_coeff < 0.0) throw ConfigError("l1_coeff: must be nonnegative");
    if (cfg.local_epochs < 1) throw ConfigError("local_epochs: must be at least 1");
    if (!(cfg.eta_mu_threshold >= 0.0 && cfg.eta_mu_threshold <= 1.0))
        throw ConfigError("eta_mu_threshold: must lie in [0, 1]");
    if (!(cfg.test_fraction > 0.0 && cfg.test_fraction <= 1.0))
        throw ConfigError("test_fraction: must lie in (0, 1]");
    if (cfg.likelihood_epochs < 1) throw ConfigError("likelihood_epochs: must be at least 1");
    if (cfg.dp_epsilon.has_value() && *cfg.dp_epsilon < 0.0)
        throw ConfigError("dp_epsilon: must be nonnegative");
    if (cfg.dp_sensitivity.has_value() && !(*cfg.dp_sensitivity > 0.0))
        throw ConfigError("dp_sensitivity: must be positive");
    if (cfg.dataset == DatasetKind::idx) {
        if (cfg.idx_images.empty() || cfg.idx_labels.empty())
            throw ConfigError("idx_images/idx_labels: required for an idx dataset");
        if (cfg.idx_limit == 0) throw ConfigError("idx_limit: must be positive");
    } else {
        if (cfg.synth_groups < 2) throw ConfigError("synth_groups: need at least 2");
        if (cfg.synth_classes < 2) throw ConfigError("synth_classes: need at least 2");
        if (cfg.synth_per_group < 2) throw ConfigError("synth_per_group: need at least 2");
        if (cfg.synth_dim < 1) throw ConfigError("synth_dim: must be positive");
        if (!(cfg.synth_separation > 0.0)) throw ConfigError("synth_separation: must be positive");
        if (!(cfg.synth_minority_share > 0.0 && cfg.synth_minority_share <= 1.0))
            throw ConfigError("synth_minority_share: must lie in (0, 1]");
    }
}

inline void set_config_key(ExperimentConfig& cfg, const std::string& key,
                           const std::string& value) {
    using namespace config_detail;
    if (key == "dataset") {
        if (value == "synthetic") cfg.dataset = DatasetKind::synthetic;
        else if (value == "idx") cfg.dataset = DatasetKind::idx;
        else throw ConfigError("dataset: expected 'synthetic' or 'idx', got '" + value + "'");
    } else if (key == "synth_groups") cfg.synth_groups = static_cast<int>(parse_int(key, value));
    else if (key == "synth_classes") cfg.synth_classes = static_cast<int>(parse_int(key, value));
    else if (key == "synth_per_group") cfg.synth_per_group = static_cast<int>(parse_int(key, value));
    else if (key == "synth_dim") cfg.synth_dim = static_cast<int>(parse_int(key, value));
    else if (key == "synth_separation") cfg.synth_separation = parse_double(key, value);
    else if (key == "synth_minority_share") cfg.synth_minority_share = parse_double(key, value);
    else if (key == "idx_images") cfg.idx_images = value;
    else if (key == "idx_labels") cfg.idx_labels = value;
    else if (key == "idx_limit") cfg.idx_limit = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "group_column") cfg.group_column = static_cast<int>(parse_int(key, value));
    else if (key == "num_clients") cfg.num_clients = static_cast<int>(parse_int(key, value));
    else if (key == "noise_plan") cfg.noise_plan = parse_double_list(key, value);
    else if (key == "algorithm") cfg.algorithm = parse_algorithm(value);
    else if (key == "rounds") cfg.rounds = static_cast<int>(parse_int(key, value));
    else if (key == "local_epochs") cfg.local_epochs = static_cast<int>(parse_int(key, value));
    else if (key == "test_fraction") cfg.test_fraction = parse_double(key, value);
    else if (key == "lr") cfg.lr = parse_double(key, value);
    else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "l1_coeff") cfg.l1_coeff = parse_double(key, value);
    else if (key == "eta_mu") cfg.eta_mu = parse_double(key, value);
    else if (key == "eta_mu_threshold") cfg.eta_mu_threshold = parse_double(key, value);
    else if (key == "group_loss_mode") {
        if (value == "mean") cfg.group_loss_mode = GroupLossMode::group_mean;
        else if (value == "sum_over_groups") cfg.group_loss_mode = GroupLossMode::sum_over_num_groups;
        else throw ConfigError("group_loss_mode: expected 'mean' or 'sum_over_groups', got '" +
                               value + "'");
    } else if (key == "uniform_weights") cfg.uniform_weights = parse_bool(key, value);
    else if (key == "halt_on_violation") cfg.halt_on_violation = parse_bool(key, value);
    else if (key == "tprsd_sample") cfg.tprsd_sample = parse_bool(key, value);
    else if (key == "likelihood_epochs") cfg.likelihood_epochs = static_cast<int>(parse_int(key, value));
    else if (key == "dp_epsilon") cfg.dp_epsilon = parse_double(key, value);
    else if (key == "dp_sensitivity") cfg.dp_sensitivity = parse_double(key, value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "output_dir") cfg.output_dir = value;
    else if (key == "log_gradient_correlations") cfg.log_gradient_correlations = parse_bool(key, value);
    else throw ConfigError("unknown key '" + key + "'");
}

// Parses a flat key = value file ('#' starts a comment) without
// validation; sweep drivers mutate the result before finalizing.
inline ExperimentConfig parse_config_raw(std::istream& in) {
    ExperimentConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = config_detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = config_detail::trim(line.substr(0, eq));
        const std::string value = config_detail::trim(line.substr(eq + 1));
        set_config_key(cfg, key, value);
    }
    return cfg;
}

inline void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& overrides) {
    if (overrides.seed) cfg.seed = *overrides.seed;
    if (overrides.algorithm) cfg.algorithm = *overrides.algorithm;
    if (overrides.dp_epsilon) cfg.dp_epsilon = *overrides.dp_epsilon;
    if (overrides.eta_mu) cfg.eta_mu = *overrides.eta_mu;
    if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;
}

inline ExperimentConfig parse_config(std::istream& in, const ConfigOverrides& overrides = {}) {
    ExperimentConfig cfg = parse_config_raw(in);
    apply_overrides(cfg, overrides);
    finalize_config(cfg);
    return cfg;
}

inline ExperimentConfig parse_config(const std::string& path,
                                     const ConfigOverrides& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse_config(in, overrides);
}

// Full-precision echo; parsing the echo reproduces the config exactly.
inline std::string echo_config(const ExperimentConfig& cfg) {
    using config_detail::format_double;
    std::ostringstream out;
    out << "dataset = " << (cfg.dataset == DatasetKind::synthetic ? "synthetic" : "idx") << "\n";
    if (cfg.dataset == DatasetKind::synthetic) {
        out << "synth_groups = " << cfg.synth_groups << "\n";
        out << "synth_classes = " << cfg.synth_classes << "\n";
        out << "synth_per_group = " << cfg.synth_per_group << "\n";
        out << "synth_dim = " << cfg.synth_dim << "\n";
        out << "synth_separation = " << format_double(cfg.synth_separation) << "\n";
        out << "synth_minority_share = " << format_double(cfg.synth_minority_share) << "\n";
    } else {
        out << "idx_images = " << cfg.idx_images << "\n";
        out << "idx_labels = " << cfg.idx_labels << "\n";
        out << "idx_limit = " << cfg.idx_limit << "\n";
    }
    if (cfg.group_column) out << "group_column = " << *cfg.group_column << "\n";
    out << "num_clients = " << cfg.num_clients << "\n";
    out << "noise_plan = ";
    for (std::size_t i = 0; i < cfg.noise_plan.size(); ++i)
        out << (i ? "," : "") << format_double(cfg.noise_plan[i]);
    out << "\n";
    out << "algorithm = " << algorithm_name(cfg.algorithm) << "\n";
    out << "rounds = " << cfg.rounds << "\n";
    out << "local_epochs = " << cfg.local_epochs << "\n";
    out << "test_fraction = " << format_double(cfg.test_fraction) << "\n";
    out << "lr = " << format_double(cfg.lr) << "\n";
    out << "batch_size = " << cfg.batch_size << "\n";
    out << "l1_coeff = " << format_double(cfg.l1_coeff) << "\n";
    out << "eta_mu = " << format_double(cfg.eta_mu.value()) << "\n";
    out << "eta_mu_threshold = " << format_double(cfg.eta_mu_threshold) << "\n";
    out << "group_loss_mode = "
        << (cfg.group_loss_mode == GroupLossMode::group_mean ? "mean" : "sum_over_groups") << "\n";
    out << "uniform_weights = " << (cfg.uniform_weights ? "true" : "false") << "\n";
    out << "halt_on_violation = " << (cfg.halt_on_violation ? "true" : "false") << "\n";
    out << "tprsd_sample = " << (cfg.tprsd_sample ? "true" : "false") << "\n";
    out << "likelihood_epochs = " << cfg.likelihood_epochs << "\n";
    if (cfg.dp_epsilon) out << "dp_epsilon = " << format_double(*cfg.dp_epsilon) << "\n";
    if (cfg.dp_sensitivity) out << "dp_sensitivity = " << format_double(*cfg.dp_sensitivity) << "\n";
    out << "seed = " << cfg.seed << "\n";
    if (!cfg.output_dir.empty()) out << "output_dir = " << cfg.output_dir << "\n";
    out << "log_gradient_correlations = " << (cfg.log_gradient_correlations ? "true" : "false")
        << "\n";
    return out.str();
}

} // namespace fairfed
