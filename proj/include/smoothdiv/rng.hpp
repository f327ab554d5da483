#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Core>

namespace smoothdiv {

// Stream tags keep seed derivations for unrelated draw families disjoint, so
// adding draws to one consumer never shifts another consumer's stream.
namespace streams {
inline constexpr std::uint64_t sample = 1;
inline constexpr std::uint64_t limit = 2;
inline constexpr std::uint64_t multiplier = 3;
inline constexpr std::uint64_t tail = 4;
inline constexpr std::uint64_t proposal = 5;
inline constexpr std::uint64_t anchors = 6;
inline constexpr std::uint64_t moment = 7;
}  // namespace streams

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Child seed for (stream, index) under a master seed.  Used everywhere a
// repetition or draw needs its own generator, so results depend only on the
// master seed and the item index, never on scheduling.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream,
                              std::uint64_t index) {
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ splitmix64(stream));
    return splitmix64(h ^ index);
}

// Deterministic generator with pinned output mappings.  std::mt19937_64 has a
// standard-mandated sequence, but std::uniform_real_distribution and
// std::normal_distribution do not, so the transformations live here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; the spare half of each pair is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u = 1.0 - uniform();  // (0, 1], keeps the log finite
        const double r = std::sqrt(-2.0 * std::log(u));
        const double t = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

    Eigen::VectorXd normal_vector(Eigen::Index n) {
        Eigen::VectorXd z(n);
        for (Eigen::Index i = 0; i < n; ++i) z[i] = normal();
        return z;
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace smoothdiv
