#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace scotch {

using Rng = std::mt19937_64;

// Independent stream for (root seed, purpose, a, b). Every random draw in the
// library goes through one of these so runs replay bitwise.
Rng make_rng(std::uint64_t seed, std::string_view purpose, std::uint64_t a = 0, std::uint64_t b = 0);

inline double standard_normal(Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(rng);
}

}  // namespace scotch
