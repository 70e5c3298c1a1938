#include "scotch/rng.hpp"

#include <array>

namespace scotch {

Rng make_rng(std::uint64_t seed, std::string_view purpose, std::uint64_t a, std::uint64_t b) {
    // FNV-1a over the purpose tag.
    std::uint64_t tag = 1469598103934665603ULL;
    for (char c : purpose) {
        tag ^= static_cast<unsigned char>(c);
        tag *= 1099511628211ULL;
    }
    const std::array<std::uint64_t, 4> parts{seed, tag, a, b};
    std::array<std::uint32_t, 8> words{};
    for (std::size_t i = 0; i < parts.size(); ++i) {
        words[2 * i] = static_cast<std::uint32_t>(parts[i]);
        words[2 * i + 1] = static_cast<std::uint32_t>(parts[i] >> 32);
    }
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

}  // namespace scotch
