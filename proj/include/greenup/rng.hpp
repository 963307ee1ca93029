#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace greenup {

inline constexpr std::uint64_t kDefaultSeed = 816;

// xoshiro256** seeded through splitmix64. All derived draws (uniform, normal,
// index, shuffle) are implemented here rather than via <random> distributions
// so streams are identical across standard libraries and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed = kDefaultSeed);

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 random bits.
    double next_double();
    double uniform(double lo, double hi);
    // Box-Muller; the second variate of each pair is cached.
    double normal(double mean, double stddev);
    bool bernoulli(double p);
    // Uniform integer in [0, n) by rejection sampling.
    std::uint64_t index(std::uint64_t n);

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace greenup
