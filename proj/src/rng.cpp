#include "seqdiff/rng.hpp"

#include <cmath>

#include "seqdiff/errors.hpp"

namespace seqdiff {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mul_hilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    lo = static_cast<std::uint32_t>(p);
    hi = static_cast<std::uint32_t>(p >> 32);
}

inline void philox_round(std::array<std::uint32_t, 4>& ctr, const std::array<std::uint32_t, 2>& key) {
    std::uint32_t lo0, hi0, lo1, hi1;
    mul_hilo(kPhiloxM0, ctr[0], lo0, hi0);
    mul_hilo(kPhiloxM1, ctr[2], lo1, hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

inline std::array<std::uint32_t, 4> philox10(std::array<std::uint32_t, 4> ctr,
                                             std::array<std::uint32_t, 2> key) {
    for (int r = 0; r < 10; ++r) {
        philox_round(ctr, key);
        key[0] += kPhiloxW0;
        key[1] += kPhiloxW1;
    }
    return ctr;
}

} // namespace

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t fnv1a64_str(std::string_view s, std::uint64_t seed) {
    return fnv1a64(s.data(), s.size(), seed);
}

Rng::Rng(std::uint64_t seed, std::string_view tag, std::uint64_t a, std::uint64_t b) {
    std::uint64_t stream = fnv1a64_str(tag);
    stream = fnv1a64(&a, sizeof(a), stream);
    stream = fnv1a64(&b, sizeof(b), stream);
    key_ = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    counter_ = {static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0, 0};
}

void Rng::refill() {
    block_ = philox10(counter_, key_);
    block_pos_ = 0;
    // 64-bit block counter in lanes 2..3.
    if (++counter_[2] == 0) {
        ++counter_[3];
    }
}

std::uint32_t Rng::next_u32() {
    if (block_pos_ >= 4) {
        refill();
    }
    return block_[block_pos_++];
}

double Rng::uniform() {
    const std::uint32_t a = next_u32() >> 5;  // 27 bits
    const std::uint32_t b = next_u32() >> 6;  // 26 bits
    return (static_cast<double>(a) * 67108864.0 + static_cast<double>(b)) / 9007199254740992.0;
}

double Rng::uniform_open() {
    return 1.0 - uniform();
}

double Rng::normal() {
    if (has_spare_normal_) {
        has_spare_normal_ = false;
        return spare_normal_;
    }
    const double u = uniform_open();
    const double v = uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    constexpr double two_pi = 6.283185307179586476925286766559;
    spare_normal_ = r * std::sin(two_pi * v);
    has_spare_normal_ = true;
    return r * std::cos(two_pi * v);
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) {
        throw ValueError("uniform_int: n must be positive");
    }
    auto k = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    return k >= n ? n - 1 : k;
}

void Rng::fill_normal(std::span<double> out) {
    for (double& x : out) {
        x = normal();
    }
}

void Rng::fill_uniform(std::span<double> out) {
    for (double& x : out) {
        x = uniform();
    }
}

} // namespace seqdiff
