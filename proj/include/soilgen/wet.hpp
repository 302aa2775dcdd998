#pragma once

#include <cstdint>
#include <vector>

#include "soilgen/io.hpp"
#include "soilgen/nn/layers.hpp"
#include "soilgen/spectra.hpp"

namespace soilgen::wet {

/// Gravimetric soil moisture content in percent: 100 (m_w - m_d) / m_d.
double smc_gravimetric(double m_wet, double m_dry);

struct WetModelConfig {
    int64_t base_ch = 16;     // channel plan base_ch * {1,2,4,8}
    int iteration_cap = 5000; // hard training stop against overfitting
};

/// Deterministic 1D U-Net regressing the dry-minus-wet difference from the
/// dry spectrum plus a constant smc/100 channel. wet = dry - delta.
class WetModel {
public:
    WetModel(nn::ParameterStore& ps, nn::Rng& rng, WetModelConfig cfg = {});

    /// x [B, 2, 2100] -> predicted delta [B, 2100].
    nn::Var forward(nn::Var x) const;

    /// Pure function of (dry, smc_g): no sampling anywhere.
    Spectrum predict(const Spectrum& dry, double smc_g) const;

    const WetModelConfig& config() const { return cfg_; }

private:
    WetModelConfig cfg_;
    nn::Conv1dLayer stem_, down1_, down2_, down3_, mid_;
    nn::ConvT1dLayer up3_, up2_, up1_;
    nn::Conv1dLayer fuse3_, fuse2_, fuse1_, head_;
};

struct WetSplit {
    std::vector<size_t> train_idx, test_idx;
};

/// Seeded random partition; test_fraction of the samples (rounded down, at
/// least one each side when n >= 2) go to the test set.
WetSplit split_samples(size_t n, double test_fraction, uint64_t seed);

struct WetTrainConfig {
    int iterations = 5000;  // clipped to the model's iteration cap
    int batch = 8;
    double lr = 1e-3;
    uint64_t seed = 0;
    double test_fraction = 0.2;
    int log_every = 500;
};

struct WetTrainLog {
    std::vector<double> iter_loss;
    WetSplit split;
};

/// MSE on delta over the train partition of a wet corpus.
WetTrainLog train_wet(WetModel& model, nn::ParameterStore& ps, const io::Corpus& corpus,
                      const WetTrainConfig& tc);

}  // namespace soilgen::wet
