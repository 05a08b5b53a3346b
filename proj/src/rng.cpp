#include "mfr/rng.hpp"

#include <cmath>

namespace mfr {

namespace {

constexpr std::uint32_t kWeylA = 0x9E3779B9u;
constexpr std::uint32_t kWeylB = 0xBB67AE85u;
constexpr std::uint32_t kMulA = 0xD2511F53u;
constexpr std::uint32_t kMulB = 0xCD9E8D57u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) {
    std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

} // namespace

std::array<std::uint32_t, 4> philox4x32(std::uint64_t key,
                                        std::array<std::uint32_t, 4> ctr) {
    std::uint32_t k0 = static_cast<std::uint32_t>(key);
    std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMulA, ctr[0], hi0, lo0);
        mulhilo(kMulB, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
        k0 += kWeylA;
        k1 += kWeylB;
    }
    return ctr;
}

double u01_from_bits(std::uint32_t hi, std::uint32_t lo) {
    std::uint64_t v = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return static_cast<double>(v >> 12) * 0x1.0p-52 + 0x1.0p-53;
}

std::array<double, 2> normal_pair(std::uint64_t seed, std::uint32_t tag,
                                  std::uint32_t a, std::uint32_t b,
                                  std::uint32_t block) {
    auto r = philox4x32(seed, {a, b, block, tag});
    double u1 = u01_from_bits(r[0], r[1]);
    double u2 = u01_from_bits(r[2], r[3]);
    double rad = std::sqrt(-2.0 * std::log(u1));
    double ang = 2.0 * M_PI * u2;
    return {rad * std::cos(ang), rad * std::sin(ang)};
}

std::array<double, 2> CounterRng::next_block() {
    std::uint32_t blo = static_cast<std::uint32_t>(block_);
    std::uint32_t bhi = static_cast<std::uint32_t>(block_ >> 32);
    ++block_;
    auto r = philox4x32(seed_, {id_, bhi, blo, tag_});
    return {u01_from_bits(r[0], r[1]), u01_from_bits(r[2], r[3])};
}

double CounterRng::u01() {
    if (have_u_) {
        have_u_ = false;
        return u_cache_;
    }
    auto b = next_block();
    u_cache_ = b[1];
    have_u_ = true;
    return b[0];
}

double CounterRng::normal() {
    if (have_n_) {
        have_n_ = false;
        return n_cache_;
    }
    auto b = next_block();
    double rad = std::sqrt(-2.0 * std::log(b[0]));
    double ang = 2.0 * M_PI * b[1];
    n_cache_ = rad * std::sin(ang);
    have_n_ = true;
    return rad * std::cos(ang);
}

double CounterRng::uniform(double lo, double hi) {
    return lo + (hi - lo) * u01();
}

std::uint32_t CounterRng::below(std::uint32_t n) {
    if (n <= 1) return 0;
    double u = u01();
    auto k = static_cast<std::uint32_t>(u * n);
    return k >= n ? n - 1 : k;
}

} // namespace mfr
