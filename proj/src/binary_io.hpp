#pragma once

// Little-endian primitives shared by the dataset and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "amc/error.hpp"

namespace amc::detail {

template <typename U>
void write_le(std::ostream& os, U value) {
    static_assert(std::is_integral_v<U> || std::is_floating_point_v<U>);
    using Bits = std::conditional_t<sizeof(U) == 1, std::uint8_t,
                 std::conditional_t<sizeof(U) == 2, std::uint16_t,
                 std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>>>;
    Bits bits = std::bit_cast<Bits>(value);
    char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bytes[i] = static_cast<char>(bits & 0xFF);
        if constexpr (sizeof(U) > 1) bits = static_cast<Bits>(bits >> 8);
    }
    os.write(bytes, sizeof(U));
}

template <typename U>
U read_le(std::istream& is, const std::string& context) {
    using Bits = std::conditional_t<sizeof(U) == 1, std::uint8_t,
                 std::conditional_t<sizeof(U) == 2, std::uint16_t,
                 std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>>>;
    unsigned char bytes[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
        throw Error(ErrorKind::Truncated, context + ": unexpected end of file");
    }
    Bits bits = 0;
    for (std::size_t i = sizeof(U); i-- > 0;) {
        if constexpr (sizeof(U) > 1) bits = static_cast<Bits>(bits << 8);
        bits = static_cast<Bits>(bits | bytes[i]);
    }
    return std::bit_cast<U>(bits);
}

// SplitMix64 finalizer; used to derive independent seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
    return mix64(seed ^ mix64(value));
}

}  // namespace amc::detail
