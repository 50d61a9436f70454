#pragma once

#include <cstdint>
#include <initializer_list>

namespace psr {

inline std::uint64_t mix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based generator. The stream is a pure function of the key words,
/// so every pixel, texel or sample index can own an independent stream and the
/// output does not depend on evaluation order or thread count.
class KeyedRng
{
public:
    KeyedRng(std::initializer_list<std::uint64_t> key)
    {
        std::uint64_t h = 0x243f6a8885a308d3ULL;
        for (auto k : key) h = mix64(h ^ mix64(k));
        key_ = h;
    }

    std::uint64_t next_u64() { return mix64(key_ ^ mix64(counter_++)); }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n)
    {
        // Lemire's multiply-shift with rejection to stay unbiased.
        std::uint64_t x = next_u64();
        __uint128_t m = __uint128_t(x) * n;
        auto low = std::uint64_t(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                x = next_u64();
                m = __uint128_t(x) * n;
                low = std::uint64_t(m);
            }
        }
        return std::uint64_t(m >> 64);
    }

    void skip_to(std::uint64_t counter) { counter_ = counter; }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

/// Radical inverse in base 2, used for stratified (Hammersley) sequences.
inline double radical_inverse2(std::uint32_t bits)
{
    bits = (bits << 16u) | (bits >> 16u);
    bits = ((bits & 0x55555555u) << 1u) | ((bits & 0xAAAAAAAAu) >> 1u);
    bits = ((bits & 0x33333333u) << 2u) | ((bits & 0xCCCCCCCCu) >> 2u);
    bits = ((bits & 0x0F0F0F0Fu) << 4u) | ((bits & 0xF0F0F0F0u) >> 4u);
    bits = ((bits & 0x00FF00FFu) << 8u) | ((bits & 0xFF00FF00u) >> 8u);
    return double(bits) * 0x1.0p-32;
}

} // namespace psr
