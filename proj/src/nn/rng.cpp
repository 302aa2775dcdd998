#include "soilgen/nn/rng.hpp"

#include <cmath>

namespace soilgen::nn {

namespace {

constexpr uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void philox_round(std::array<uint32_t, 4>& ctr, uint32_t k0, uint32_t k1) {
    uint64_t p0 = static_cast<uint64_t>(kPhiloxM0) * ctr[0];
    uint64_t p1 = static_cast<uint64_t>(kPhiloxM1) * ctr[2];
    uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
    uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
}

}  // namespace

std::array<uint32_t, 4> Rng::block(uint64_t ctr_lo, uint64_t ctr_hi) const {
    std::array<uint32_t, 4> ctr = {
        static_cast<uint32_t>(ctr_lo), static_cast<uint32_t>(ctr_lo >> 32),
        static_cast<uint32_t>(ctr_hi), static_cast<uint32_t>(ctr_hi >> 32)};
    uint32_t k0 = key_lo_, k1 = key_hi_;
    for (int round = 0; round < 10; ++round) {
        philox_round(ctr, k0, k1);
        k0 += kPhiloxW0;
        k1 += kPhiloxW1;
    }
    return ctr;
}

void Rng::refill() {
    buf_ = block(counter_, stream_);
    ++counter_;
    buf_pos_ = 0;
}

uint32_t Rng::next_u32() {
    if (buf_pos_ >= 4) refill();
    return buf_[static_cast<size_t>(buf_pos_++)];
}

uint64_t Rng::next_u64() {
    uint64_t lo = next_u32();
    uint64_t hi = next_u32();
    return (hi << 32) | lo;
}

double Rng::uniform() {
    // 53 random bits -> [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
    SG_CHECK(lo <= hi, value_error, "uniform_int: empty range [", lo, ",", hi, "]");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(next_u64());  // full 64-bit range
    // rejection sampling to avoid modulo bias
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t r;
    do {
        r = next_u64();
    } while (r >= limit);
    return lo + static_cast<int64_t>(r % span);
}

double Rng::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    double u1, u2;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_normal_ = true;
    return r * std::cos(theta);
}

double Rng::normal(double mean, double std) { return mean + std * normal(); }

double Rng::truncated_normal(double std) {
    double z;
    do {
        z = normal();
    } while (std::abs(z) > 2.0);
    return z * std;
}

void Rng::fill_normal(Tensor& t, double mean, double std) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = normal(mean, std);
}

void Rng::fill_uniform(Tensor& t, double lo, double hi) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
}

Rng Rng::split(uint64_t stream) const {
    Rng child(seed());
    child.stream_ = stream + 1;  // stream 0 is the root
    return child;
}

}  // namespace soilgen::nn
