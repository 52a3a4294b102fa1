#pragma once

// Shared test support: an independent plain-FedAvg reference
// implementation and small helpers. The reference deliberately reuses
// nothing from the model/federation headers except the pinned Rng and
// its stream labels -- softmax, gradients, batching, and averaging are
// all reimplemented here with different accumulation orders.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "fairfed/config.hpp"
#include "fairfed/data.hpp"
#include "fairfed/idx.hpp"
#include "fairfed/rng.hpp"

namespace testsupport {

// Digit-style IDX fixture: 28x28 images where each class lights two
// class-specific 3x3 patches over a dim background, with per-sample
// pixel jitter. Class counts ladder upward with the class index, so
// low-index classes are minorities. Weak patch contrast keeps the
// classes separable when clean but fragile under heavy feature noise.
inline fairfed::GroupedDataset make_digit_fixture(std::uint64_t seed, int total) {
    fairfed::Rng rng = fairfed::Rng(seed).child(91);
    fairfed::GroupedDataset ds;
    ds.num_classes = ds.num_groups = 10;
    ds.feature_dim = 784;
    double share_sum = 0.0;
    for (int c = 0; c < 10; ++c) share_sum += 4.0 + 2.0 * c;
    for (int c = 0; c < 10; ++c) {
        const int count = std::max(2, static_cast<int>(total * (4.0 + 2.0 * c) / share_sum));
        std::vector<double> stencil(784, 0.10);
        fairfed::Rng patch_rng = fairfed::Rng(7777).child(static_cast<std::uint64_t>(c));
        for (int p = 0; p < 2; ++p) {
            const int r0 = 1 + static_cast<int>(patch_rng.uniform_int(24));
            const int c0 = 1 + static_cast<int>(patch_rng.uniform_int(24));
            for (int dr = 0; dr < 3; ++dr)
                for (int dc = 0; dc < 3; ++dc)
                    stencil[static_cast<std::size_t>((r0 + dr) * 28 + (c0 + dc))] = 0.45;
        }
        for (int i = 0; i < count; ++i) {
            fairfed::Sample s;
            s.label = s.group = c;
            s.features.resize(784);
            for (int j = 0; j < 784; ++j) {
                const double v = stencil[static_cast<std::size_t>(j)] + 0.10 * rng.normal();
                s.features[static_cast<std::size_t>(j)] = std::min(1.0, std::max(0.0, v));
            }
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

inline void write_digit_fixture(const std::string& images_path, const std::string& labels_path,
                                std::uint64_t seed, int total) {
    fairfed::write_idx(make_digit_fixture(seed, total), images_path, labels_path, 28, 28);
}

struct RefModel {
    int outputs = 0;
    int dim = 0;
    std::vector<double> w; // row-major
    std::vector<double> b;
};

inline RefModel ref_init(int outputs, int dim, fairfed::Rng& rng) {
    RefModel m;
    m.outputs = outputs;
    m.dim = dim;
    m.w.resize(static_cast<std::size_t>(outputs) * dim);
    m.b.assign(static_cast<std::size_t>(outputs), 0.0);
    for (auto& v : m.w) v = 0.01 * rng.normal();
    return m;
}

inline std::vector<double> ref_softmax(const RefModel& m, const std::vector<double>& x) {
    std::vector<double> z(static_cast<std::size_t>(m.outputs));
    for (int k = 0; k < m.outputs; ++k) {
        double s = m.b[static_cast<std::size_t>(k)];
        for (int j = 0; j < m.dim; ++j)
            s += m.w[static_cast<std::size_t>(k * m.dim + j)] * x[static_cast<std::size_t>(j)];
        z[static_cast<std::size_t>(k)] = s;
    }
    double zmax = z[0];
    for (double v : z) zmax = std::max(zmax, v);
    double denom = 0.0;
    for (auto& v : z) {
        v = std::exp(v - zmax);
        denom += v;
    }
    for (auto& v : z) v /= denom;
    return z;
}

// One epoch of plain mini-batch SGD on the mean cross-entropy: raw
// gradient sums scaled once per batch.
inline void ref_epoch(RefModel& m, const fairfed::GroupedDataset& train, double lr,
                      int batch_size, fairfed::Rng& rng) {
    std::vector<std::size_t> order(train.samples.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end =
            std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<double> gw(m.w.size(), 0.0), gb(m.b.size(), 0.0);
        for (std::size_t i = start; i < end; ++i) {
            const auto& s = train.samples[order[i]];
            const auto p = ref_softmax(m, s.features);
            for (int k = 0; k < m.outputs; ++k) {
                const double delta = p[static_cast<std::size_t>(k)] - (k == s.label ? 1.0 : 0.0);
                gb[static_cast<std::size_t>(k)] += delta;
                for (int j = 0; j < m.dim; ++j)
                    gw[static_cast<std::size_t>(k * m.dim + j)] +=
                        delta * s.features[static_cast<std::size_t>(j)];
            }
        }
        const double inv = 1.0 / static_cast<double>(end - start);
        for (std::size_t i = 0; i < m.w.size(); ++i) m.w[i] -= lr * gw[i] * inv;
        for (std::size_t i = 0; i < m.b.size(); ++i) m.b[i] -= lr * gb[i] * inv;
    }
}

// Plain FedAvg over the given shards, matching the production stream
// derivation (global init stream, per-client per-round sgd streams) so
// trajectories are comparable round for round.
inline std::vector<RefModel> ref_fedavg_rounds(const std::vector<fairfed::ClientShard>& shards,
                                               int num_classes, int feature_dim,
                                               std::uint64_t seed, int rounds, int local_epochs,
                                               double lr, int batch_size) {
    const fairfed::Rng root(seed);
    fairfed::Rng init_rng = root.child(fairfed::stream::model_init);
    RefModel global = ref_init(num_classes, feature_dim, init_rng);

    std::vector<std::uint64_t> client_seeds;
    for (const auto& shard : shards)
        client_seeds.push_back(
            root.child(fairfed::stream::local_sgd, static_cast<std::uint64_t>(shard.client_id))
                .seed());

    std::vector<RefModel> history;
    for (int r = 0; r < rounds; ++r) {
        std::vector<RefModel> locals;
        double total = 0.0;
        for (std::size_t k = 0; k < shards.size(); ++k) {
            RefModel local = global;
            fairfed::Rng rng = fairfed::Rng(client_seeds[k])
                                   .child(fairfed::stream::local_sgd, static_cast<std::uint64_t>(r));
            for (int e = 0; e < local_epochs; ++e)
                ref_epoch(local, shards[k].train, lr, batch_size, rng);
            locals.push_back(std::move(local));
            total += static_cast<double>(shards[k].train.samples.size());
        }
        RefModel next = global;
        std::fill(next.w.begin(), next.w.end(), 0.0);
        std::fill(next.b.begin(), next.b.end(), 0.0);
        for (std::size_t k = 0; k < locals.size(); ++k) {
            const double n_k = static_cast<double>(shards[k].train.samples.size());
            for (std::size_t i = 0; i < next.w.size(); ++i) next.w[i] += n_k * locals[k].w[i];
            for (std::size_t i = 0; i < next.b.size(); ++i) next.b[i] += n_k * locals[k].b[i];
        }
        for (auto& v : next.w) v /= total;
        for (auto& v : next.b) v /= total;
        global = next;
        history.push_back(global);
    }
    return history;
}

} // namespace testsupport
