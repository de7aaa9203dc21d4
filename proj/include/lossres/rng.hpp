#pragma once

#include <cstdint>
#include <random>

namespace lossres {

/// Deterministic random stream. Wraps a mt19937_64 engine seeded through
/// splitmix64 so that (master seed, task index) pairs give independent,
/// reproducible streams regardless of thread scheduling.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : gen_(mix(seed)) {}
    RngStream(std::uint64_t master, std::uint64_t task_index)
        : gen_(mix(mix(master) ^ (0x9e3779b97f4a7c15ULL * (task_index + 1)))) {}

    /// Uniform on (0, 1), 53-bit resolution, never returns 0 or 1.
    double uniform01() {
        const std::uint64_t r = gen_();
        return (static_cast<double>(r >> 11) + 0.5) / 9007199254740992.0;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller (one variate per call).
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }

    double exponential() ;

    /// Gamma(shape, scale) via Marsaglia-Tsang, boosted for shape < 1.
    double gamma(double shape, double scale);

    /// Poisson(lambda); inversion for small lambda, PTRS rejection otherwise.
    std::uint64_t poisson(double lambda);

    std::mt19937_64& engine() { return gen_; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 gen_;
};

}  // namespace lossres
