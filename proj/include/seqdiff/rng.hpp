#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>

namespace seqdiff {

// FNV-1a over arbitrary bytes; used for stream derivation and file checksums.
std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64_str(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ull);

// Counter-based generator (Philox 4x32-10). A stream is identified by
// (seed, tag, a, b); draws advance only a local block counter, so any number
// of streams can be created independently and replayed exactly. Parallel and
// serial use of per-item streams therefore agree bit for bit.
class Rng {
public:
    Rng(std::uint64_t seed, std::string_view tag, std::uint64_t a = 0, std::uint64_t b = 0);

    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    // Uniform on (0, 1]; safe as a log() argument.
    double uniform_open();
    // Standard normal via Box-Muller (cached spare).
    double normal();
    // Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n);

    void fill_normal(std::span<double> out);
    void fill_uniform(std::span<double> out);

    std::uint32_t next_u32();

private:
    void refill();

    std::array<std::uint32_t, 4> counter_{};
    std::array<std::uint32_t, 2> key_{};
    std::array<std::uint32_t, 4> block_{};
    unsigned block_pos_ = 4;
    double spare_normal_ = 0.0;
    bool has_spare_normal_ = false;
};

} // namespace seqdiff
