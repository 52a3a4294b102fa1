#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "fairfed/errors.hpp"
#include "fairfed/rng.hpp"

namespace fairfed {

// One labelled, group-tagged feature vector. Components are normalized
// to [0,1] at construction time; injected noise may later push them
// outside that range (noise moments must stay untouched).
struct Sample {
    std::vector<double> features;
    int label = 0;
    int group = 0;
};

struct GroupedDataset {
    std::vector<Sample> samples;
    int num_classes = 0;
    int num_groups = 0;
    int feature_dim = 0;

    std::size_t size() const { return samples.size(); }

    std::vector<std::size_t> group_counts() const {
        std::vector<std::size_t> counts(static_cast<std::size_t>(num_groups), 0);
        for (const auto& s : samples) counts[static_cast<std::size_t>(s.group)]++;
        return counts;
    }

    // Empirical p(G = g).
    std::vector<double> group_priors() const {
        const auto counts = group_counts();
        std::vector<double> priors(counts.size());
        for (std::size_t g = 0; g < counts.size(); ++g)
            priors[g] = static_cast<double>(counts[g]) / static_cast<double>(samples.size());
        return priors;
    }

    // Enforces the structural invariants: non-empty, in-range labels and
    // groups, consistent dimensions, no empty group, finite features.
    void validate() const {
        if (samples.empty()) throw ConfigError("dataset is empty");
        if (num_classes < 1 || num_groups < 1 || feature_dim < 1)
            throw ConfigError("dataset has invalid counts");
        std::vector<bool> seen(static_cast<std::size_t>(num_groups), false);
        for (const auto& s : samples) {
            if (static_cast<int>(s.features.size()) != feature_dim)
                throw ShapeError("sample feature dimension mismatch");
            if (s.label < 0 || s.label >= num_classes)
                throw ConfigError("sample label out of range");
            if (s.group < 0 || s.group >= num_groups)
                throw ConfigError("sample group out of range");
            for (double v : s.features)
                if (!std::isfinite(v)) throw NumericError("non-finite feature component");
            seen[static_cast<std::size_t>(s.group)] = true;
        }
        for (int g = 0; g < num_groups; ++g)
            if (!seen[static_cast<std::size_t>(g)])
                throw ConfigError("group " + std::to_string(g) + " has no samples");
    }
};

// A client's slice of the federation: a train shard, a noise-matched
// test set (same variance as train), and the variance that was applied.
struct ClientShard {
    int client_id = 0;
    GroupedDataset train;
    GroupedDataset test;
    double noise_variance = 0.0;
};

// Adds componentwise N(0, variance) noise. Output is intentionally not
// clamped: clamping would distort the injected moments.
inline std::vector<double> inject_gaussian_noise(const std::vector<double>& features,
                                                 double variance, Rng& rng) {
    if (variance < 0.0) throw ConfigError("noise variance must be nonnegative");
    if (variance == 0.0) return features;
    const double stddev = std::sqrt(variance);
    std::vector<double> out(features.size());
    for (std::size_t i = 0; i < features.size(); ++i)
        out[i] = features[i] + stddev * rng.normal();
    return out;
}

// Synthetic grouped dataset: one isotropic Gaussian cluster per class
// (unit variance per axis), class index doubling as group index
// (modulo num_groups). Each cluster owns a block of signature axes;
// cluster means sit `separation` apart before normalization and all
// components are then min-max scaled to [0,1].
//
// minority_share < 1 shrinks class 0 to that share of per_group. With
// unequal priors the cross-entropy optimum drifts toward the majority
// as feature noise flattens the likelihoods, so the minority group's
// recall degrades fastest on noisy clients -- the group-bias regime
// the simulator studies. The default keeps groups balanced.
inline GroupedDataset generate_synthetic(std::uint64_t seed, int num_groups, int num_classes,
                                         int per_group, int feature_dim, double separation,
                                         double minority_share = 1.0) {
    if (num_groups < 2) throw ConfigError("need at least 2 groups");
    if (num_classes < 2) throw ConfigError("need at least 2 classes");
    if (per_group < 2) throw ConfigError("per_group must be at least 2");
    if (feature_dim < 1) throw ConfigError("feature_dim must be positive");
    if (!(separation > 0.0)) throw ConfigError("separation must be positive");
    if (!(minority_share > 0.0 && minority_share <= 1.0))
        throw ConfigError("minority_share must lie in (0, 1]");

    const int block = std::max(1, feature_dim / num_classes);
    // Disjoint blocks put every pair of means separation apart.
    const double amplitude = separation / std::sqrt(2.0 * static_cast<double>(block));

    Rng rng = Rng(seed).child(stream::dataset);
    GroupedDataset ds;
    ds.num_classes = num_classes;
    ds.num_groups = num_groups;
    ds.feature_dim = feature_dim;
    ds.samples.reserve(static_cast<std::size_t>(num_classes) * per_group);
    for (int c = 0; c < num_classes; ++c) {
        const int count =
            c == 0 ? std::max(2, static_cast<int>(std::lround(minority_share * per_group)))
                   : per_group;
        for (int i = 0; i < count; ++i) {
            Sample s;
            s.label = c;
            s.group = c % num_groups;
            s.features.assign(static_cast<std::size_t>(feature_dim), 0.0);
            for (int b = 0; b < block; ++b) {
                const int axis = (c * block + b) % feature_dim;
                s.features[static_cast<std::size_t>(axis)] += amplitude;
            }
            for (int j = 0; j < feature_dim; ++j)
                s.features[static_cast<std::size_t>(j)] += rng.normal();
            ds.samples.push_back(std::move(s));
        }
    }

    // Min-max normalize each component to [0,1].
    std::vector<double> lo(static_cast<std::size_t>(feature_dim),
                           std::numeric_limits<double>::infinity());
    std::vector<double> hi(static_cast<std::size_t>(feature_dim),
                           -std::numeric_limits<double>::infinity());
    for (const auto& s : ds.samples) {
        for (int j = 0; j < feature_dim; ++j) {
            lo[static_cast<std::size_t>(j)] = std::min(lo[static_cast<std::size_t>(j)],
                                                       s.features[static_cast<std::size_t>(j)]);
            hi[static_cast<std::size_t>(j)] = std::max(hi[static_cast<std::size_t>(j)],
                                                       s.features[static_cast<std::size_t>(j)]);
        }
    }
    for (auto& s : ds.samples) {
        for (int j = 0; j < feature_dim; ++j) {
            const double range = hi[static_cast<std::size_t>(j)] - lo[static_cast<std::size_t>(j)];
            s.features[static_cast<std::size_t>(j)] =
                range > 0.0
                    ? (s.features[static_cast<std::size_t>(j)] - lo[static_cast<std::size_t>(j)]) /
                          range
                    : 0.5;
        }
    }

    ds.validate();
    return ds;
}

// Splits a dataset across clients with equal per-group allocation:
// every client receives floor(n_g / K) samples of each group, remainder
// samples are dropped. The test set is a replicated slice of the source
// (the same slice for every client), and each client's train and test
// features get Gaussian noise of that client's plan variance, drawn
// from independent streams.
inline std::vector<ClientShard> partition(const GroupedDataset& dataset, int num_clients,
                                          const std::vector<double>& noise_plan,
                                          std::uint64_t seed, double test_fraction = 0.25) {
    dataset.validate();
    if (num_clients < 2) throw ConfigError("need at least 2 clients");
    if (static_cast<int>(noise_plan.size()) != num_clients)
        throw ConfigError("noise_plan has " + std::to_string(noise_plan.size()) +
                          " entries but num_clients is " + std::to_string(num_clients));
    for (double v : noise_plan)
        if (v < 0.0) throw ConfigError("noise_plan variances must be nonnegative");
    if (!(test_fraction > 0.0 && test_fraction <= 1.0))
        throw ConfigError("test_fraction must be in (0, 1]");

    const Rng root(seed);
    std::vector<std::vector<std::size_t>> by_group(static_cast<std::size_t>(dataset.num_groups));
    for (std::size_t i = 0; i < dataset.samples.size(); ++i)
        by_group[static_cast<std::size_t>(dataset.samples[i].group)].push_back(i);

    std::vector<std::size_t> per_client(static_cast<std::size_t>(dataset.num_groups));
    for (int g = 0; g < dataset.num_groups; ++g) {
        auto& indices = by_group[static_cast<std::size_t>(g)];
        Rng shuffle_rng = root.child(stream::partition, static_cast<std::uint64_t>(g));
        shuffle_rng.shuffle(indices);
        per_client[static_cast<std::size_t>(g)] = indices.size() / static_cast<std::size_t>(num_clients);
        if (per_client[static_cast<std::size_t>(g)] == 0)
            throw ConfigError("group " + std::to_string(g) + " has only " +
                              std::to_string(indices.size()) + " samples for " +
                              std::to_string(num_clients) + " clients");
    }

    // Shared test slice: the leading part of each group's shuffled order.
    std::vector<std::size_t> test_indices;
    for (int g = 0; g < dataset.num_groups; ++g) {
        const auto& indices = by_group[static_cast<std::size_t>(g)];
        const std::size_t want = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(indices.size()))));
        for (std::size_t i = 0; i < std::min(want, indices.size()); ++i)
            test_indices.push_back(indices[i]);
    }

    std::vector<ClientShard> shards;
    shards.reserve(static_cast<std::size_t>(num_clients));
    for (int k = 0; k < num_clients; ++k) {
        ClientShard shard;
        shard.client_id = k;
        shard.noise_variance = noise_plan[static_cast<std::size_t>(k)];
        shard.train.num_classes = shard.test.num_classes = dataset.num_classes;
        shard.train.num_groups = shard.test.num_groups = dataset.num_groups;
        shard.train.feature_dim = shard.test.feature_dim = dataset.feature_dim;

        for (int g = 0; g < dataset.num_groups; ++g) {
            const auto& indices = by_group[static_cast<std::size_t>(g)];
            const std::size_t n = per_client[static_cast<std::size_t>(g)];
            for (std::size_t i = 0; i < n; ++i)
                shard.train.samples.push_back(
                    dataset.samples[indices[static_cast<std::size_t>(k) * n + i]]);
        }
        for (std::size_t idx : test_indices) shard.test.samples.push_back(dataset.samples[idx]);

        Rng train_rng = root.child(stream::train_noise, static_cast<std::uint64_t>(k));
        Rng test_rng = root.child(stream::test_noise, static_cast<std::uint64_t>(k));
        for (auto& s : shard.train.samples)
            s.features = inject_gaussian_noise(s.features, shard.noise_variance, train_rng);
        for (auto& s : shard.test.samples)
            s.features = inject_gaussian_noise(s.features, shard.noise_variance, test_rng);

        shard.train.validate();
        shard.test.validate();
        shards.push_back(std::move(shard));
    }
    return shards;
}

// Reassigns groups from a feature column (rounded to the nearest
// integer). Default grouping is by class label; this covers datasets
// where the sensitive attribute travels as a feature.
inline GroupedDataset with_groups_from_column(GroupedDataset dataset, int column) {
    if (column < 0 || column >= dataset.feature_dim)
        throw ConfigError("group column " + std::to_string(column) + " out of range");
    int max_group = 0;
    for (auto& s : dataset.samples) {
        const double raw = s.features[static_cast<std::size_t>(column)];
        const double rounded = std::nearbyint(raw);
        if (std::abs(raw - rounded) > 1e-6 || rounded < 0.0)
            throw ConfigError("group column holds non-index value " + std::to_string(raw));
        s.group = static_cast<int>(rounded);
        max_group = std::max(max_group, s.group);
    }
    dataset.num_groups = max_group + 1;
    dataset.validate();
    return dataset;
}

inline void write_csv(const GroupedDataset& dataset, std::ostream& out) {
    for (int j = 0; j < dataset.feature_dim; ++j) out << "feature_" << j << ",";
    out << "label,group\n";
    char buf[64];
    for (const auto& s : dataset.samples) {
        for (double v : s.features) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << buf << ",";
        }
        out << s.label << "," << s.group << "\n";
    }
}

inline void write_csv(const GroupedDataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    write_csv(dataset, out);
}

} // namespace fairfed
