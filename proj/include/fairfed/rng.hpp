#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace fairfed {

// Seedable, platform-stable generator: xoshiro256++ seeded through
// splitmix64. The standard library distributions are implementation
// defined, so uniform/normal sampling is done here by hand; every draw
// is reproducible bit-for-bit across platforms for a given seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53 bits of precision.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1): redraws the (probability 2^-53) exact zero.
    double uniform_open() {
        double u = uniform();
        while (u == 0.0) u = uniform();
        return u;
    }

    // Unbiased integer in [0, n), n >= 1. Rejection sampling on the top
    // of the 64-bit range.
    std::uint64_t uniform_int(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    // Standard normal via Box-Muller; the spare draw is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // Derives an independent substream. Streams for distinct labels are
    // decorrelated by a splitmix64 round over (seed, label).
    Rng child(std::uint64_t label) const {
        std::uint64_t s = seed_ ^ (0x9e3779b97f4a7c15ULL * (label + 1));
        return Rng(splitmix64(s));
    }

    Rng child(std::uint64_t a, std::uint64_t b) const { return child(a).child(b); }
    Rng child(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
        return child(a).child(b).child(c);
    }

    std::uint64_t seed() const { return seed_; }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t state_[4] = {};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Stream labels used to derive independent substreams from the
// experiment seed. Keeping them in one place guarantees that adding a
// consumer never shifts an existing stream.
namespace stream {
inline constexpr std::uint64_t dataset = 1;
inline constexpr std::uint64_t partition = 2;
inline constexpr std::uint64_t train_noise = 3;
inline constexpr std::uint64_t test_noise = 4;
inline constexpr std::uint64_t model_init = 5;
inline constexpr std::uint64_t likelihood = 6;
inline constexpr std::uint64_t dp = 7;
inline constexpr std::uint64_t local_sgd = 8;
} // namespace stream

} // namespace fairfed
