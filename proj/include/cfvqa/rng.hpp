#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace cfvqa {

// xoshiro256** seeded through splitmix64. The standard <random> distributions
// are implementation-defined, so every distribution used by the library is
// derived here from raw 64-bit output to keep runs portable.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) {
        std::uint64_t s = seed;
        for (auto &word : state_) {
            word = splitmix64(s);
        }
    }

    static std::uint64_t splitmix64(std::uint64_t &x) {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n > 0, by rejection sampling.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = next();
        while (x >= limit) {
            x = next();
        }
        return x % n;
    }

    // Box-Muller, one value per call.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    template <typename T>
    void shuffle(std::vector<T> &v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    // Independent stream for a sub-task; offsets are fixed per module.
    static Rng derive(std::uint64_t seed, std::uint64_t offset) {
        std::uint64_t s = seed ^ (0xa0761d6478bd642fULL * (offset + 1));
        return Rng(splitmix64(s));
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4]{};
};

// Fixed seed offsets so every module's randomness flows from one run seed.
namespace seed_offset {
inline constexpr std::uint64_t model_init = 1;
inline constexpr std::uint64_t train_shuffle = 2;
inline constexpr std::uint64_t synth_train = 3;
inline constexpr std::uint64_t synth_test = 4;
inline constexpr std::uint64_t synth_prototypes = 5;
inline constexpr std::uint64_t resplit = 6;
}  // namespace seed_offset

}  // namespace cfvqa
