#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace trear {

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
    // splitmix64 finalizer
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace detail

/// Named, seedable counter-based random stream. Output i is a pure function
/// of (seed, name, i), so identical seed + identical call sequence gives
/// identical results on every platform; distinct names give independent
/// streams. All derived draws use integer arithmetic only.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string_view name)
        : key_(detail::mix64(detail::mix64(seed + 0x9E3779B97F4A7C15ULL) ^ detail::fnv1a64(name))) {}

    std::uint64_t next_u64() {
        return detail::mix64(key_ + (counter_++) * 0x9E3779B97F4A7C15ULL);
    }

    /// Uniform double in [0, 1), 53 bits of precision.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    /// Uniform integer in [0, n). n == 0 returns 0.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::uint64_t draws() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace trear
