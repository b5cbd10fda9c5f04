#ifndef CROWDIRT_RNG_HPP
#define CROWDIRT_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace crowdirt {

/// splitmix64 finalizer; used to derive independent seeds for sub-streams.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for stream `stream` of a run seeded with `base`.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
    return mix64(base ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

/// Well-known stream ids so every consumer of the run seed draws from its own stream.
namespace streams {
inline constexpr std::uint64_t split = 1;
inline constexpr std::uint64_t sampler = 2;
inline constexpr std::uint64_t simulate = 3;
}  // namespace streams

/// Random source with platform-independent output.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The standard distributions are not, so the transforms below are
/// written out explicitly.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1).
    double uniform_open() {
        double u;
        do {
            u = uniform();
        } while (u == 0.0);
        return u;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Uniform integer in [0, n), unbiased by rejection.
    std::uint64_t index(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Beta(1, b) by inversion: 1 - U^(1/b).
    double beta_one(double b) { return 1.0 - std::pow(uniform_open(), 1.0 / b); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace crowdirt

#endif  // CROWDIRT_RNG_HPP
