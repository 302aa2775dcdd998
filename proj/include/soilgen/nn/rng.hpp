#pragma once

#include <array>
#include <cstdint>

#include "soilgen/nn/tensor.hpp"

namespace soilgen::nn {

/// Philox4x32-10 counter-based generator. A fixed (seed, counter) pair always
/// produces the same stream on every platform, which keeps training runs and
/// samplers reproducible without carrying hidden state around.
class Rng {
public:
    explicit Rng(uint64_t seed) : key_lo_(static_cast<uint32_t>(seed)),
                                  key_hi_(static_cast<uint32_t>(seed >> 32)) {}

    uint64_t seed() const {
        return (static_cast<uint64_t>(key_hi_) << 32) | key_lo_;
    }

    uint32_t next_u32();
    uint64_t next_u64();

    /// Uniform double in [0, 1).
    double uniform();
    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi);
    /// Uniform integer in [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi);
    /// Standard normal via Box-Muller.
    double normal();
    double normal(double mean, double std);
    /// Standard normal truncated to +-2 sigma (resampled).
    double truncated_normal(double std);

    void fill_normal(Tensor& t, double mean = 0.0, double std = 1.0);
    void fill_uniform(Tensor& t, double lo, double hi);

    /// Derives an independent stream; `stream` selects the substream.
    Rng split(uint64_t stream) const;

private:
    std::array<uint32_t, 4> block(uint64_t ctr_lo, uint64_t ctr_hi) const;
    void refill();

    uint32_t key_lo_;
    uint32_t key_hi_;
    uint64_t counter_ = 0;
    uint64_t stream_ = 0;
    std::array<uint32_t, 4> buf_{};
    int buf_pos_ = 4;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

}  // namespace soilgen::nn
