#pragma once

#include <utility>
#include <vector>

#include "soilgen/nn/layers.hpp"
#include "soilgen/nn/optim.hpp"
#include "soilgen/spectra.hpp"

namespace soilgen::pad {

struct PaddingConfig {
    int64_t d_model = 128;
    int heads = 4;
    int self_layers = 2;
    int64_t ffn_hidden = 256;
    int64_t conv_width = 64;  // base channel count; stages use 1x/2x/2x/1x
};

struct PaddingTrainConfig {
    int epochs = 30;
    int batch = 16;
    double lr = 1e-3;
    uint64_t seed = 0;
    int log_every = 1;  // epochs between log lines; 0 silences
};

/// Reconstructs full-range coarse spectra from partially measured wavebands:
/// masked self-attention over 42 band tokens, a learnable-query readout, and
/// a conv encoder/decoder down to a latent and back up to 525 values.
class PaddingModel {
public:
    PaddingModel(nn::ParameterStore& ps, nn::Rng& rng, PaddingConfig cfg = {});

    /// Band features [B, 42, d_model]; rows of fully masked bands are exact
    /// zeros and measured rows ignore masked-band contents.
    nn::Var embed(const nn::Tensor& bands, const nn::Tensor& band_mask) const;

    /// Raw (pre-clamp) coarse prediction [B, 525] for training.
    nn::Var forward(const nn::Tensor& bands, const nn::Tensor& band_mask) const;

    /// Inference: no graph, output clamped to [0, 1.5].
    CoarseSpectrum predict_coarse(const WavebandTensor& wt) const;

    /// Fills the unmeasured region: predict, upsample, replace measured
    /// values bit-exactly, then smooth only the filled positions. Full-range
    /// inputs pass through unchanged.
    Spectrum pad_spectrum(const Spectrum& s) const;

    const PaddingConfig& config() const { return cfg_; }

private:
    PaddingConfig cfg_;
    nn::Dense band_proj_;
    std::vector<nn::TransformerLayer> self_layers_;
    nn::LayerNormLayer embed_ln_;
    nn::Parameter* queries_;
    nn::TransformerLayer readout_;
    nn::LayerNormLayer readout_ln_;
    std::vector<nn::Conv1dLayer> enc_;
    std::vector<nn::ConvT1dLayer> dec_;
    nn::Conv1dLayer head_;
};

struct TrainLog {
    std::vector<double> epoch_loss;
};

/// Random prefix/suffix band truncation: each length uniform in 0..20,
/// redrawn until at least 8 bands stay measured.
std::pair<int, int> draw_truncation(nn::Rng& rng);

/// MSE training against the 4 nm downsample of each full-range spectrum,
/// zeroing a random prefix/suffix of bands per example (0..20 each, at least
/// 8 bands kept). Deterministic for a fixed seed.
TrainLog train_padding(PaddingModel& model, nn::ParameterStore& ps,
                       const std::vector<Spectrum>& spectra, const PaddingTrainConfig& tc);

}  // namespace soilgen::pad
