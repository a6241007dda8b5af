#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace drn {

inline constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;

/// 64-bit FNV-1a, chainable through `state`.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t state = kFnvOffset)
{
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        state ^= bytes[i];
        state *= 1099511628211ULL;
    }
    return state;
}

std::string hex64(std::uint64_t value);

}  // namespace drn
