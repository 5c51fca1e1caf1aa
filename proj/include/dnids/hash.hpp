#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace dnids {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

/// FNV-1a 64-bit. `seed` lets callers chain several spans into one digest.
constexpr std::uint64_t fnv1a64(std::span<const std::uint8_t> data,
                                std::uint64_t seed = kFnvOffset) noexcept {
    std::uint64_t h = seed;
    for (std::uint8_t b : data) {
        h ^= b;
        h *= kFnvPrime;
    }
    return h;
}

constexpr std::uint64_t fnv1a64(std::string_view text, std::uint64_t seed = kFnvOffset) noexcept {
    std::uint64_t h = seed;
    for (char c : text) {
        h ^= static_cast<std::uint8_t>(c);
        h *= kFnvPrime;
    }
    return h;
}

}  // namespace dnids
