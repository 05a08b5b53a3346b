#pragma once

#include <array>
#include <cstdint>

namespace mfr {

// Stream tags keep independent consumers of the same seed apart.
inline constexpr std::uint32_t kStreamBrownian = 1;
inline constexpr std::uint32_t kStreamInitialCloud = 2;
inline constexpr std::uint32_t kStreamChecker = 3;
inline constexpr std::uint32_t kStreamFlow = 4;
inline constexpr std::uint32_t kStreamQuery = 5;

// Philox4x32-10 block: pure function of (key, counter).
std::array<std::uint32_t, 4> philox4x32(std::uint64_t key,
                                        std::array<std::uint32_t, 4> ctr);

// Map two 32-bit words to a double in the open interval (0,1).
double u01_from_bits(std::uint32_t hi, std::uint32_t lo);

// Two independent N(0,1) draws addressed by (seed, tag, a, b, block).
// The value depends only on the address, never on evaluation order, so
// draws are reproducible across runs and worker counts.
std::array<double, 2> normal_pair(std::uint64_t seed, std::uint32_t tag,
                                  std::uint32_t a, std::uint32_t b,
                                  std::uint32_t block);

// Sequential view over one (seed, tag, id) stream for sampling tasks.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint32_t tag, std::uint32_t id = 0)
        : seed_(seed), tag_(tag), id_(id) {}

    double u01();
    double normal();
    double uniform(double lo, double hi);
    // integer in [0, n)
    std::uint32_t below(std::uint32_t n);

private:
    std::array<double, 2> next_block();

    std::uint64_t seed_;
    std::uint32_t tag_, id_;
    std::uint64_t block_ = 0;
    double u_cache_ = 0, n_cache_ = 0;
    bool have_u_ = false, have_n_ = false;
};

} // namespace mfr
