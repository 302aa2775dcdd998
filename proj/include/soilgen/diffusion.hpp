#pragma once

#include <string>
#include <vector>

#include "soilgen/io.hpp"
#include "soilgen/nn/layers.hpp"
#include "soilgen/nn/optim.hpp"
#include "soilgen/properties.hpp"
#include "soilgen/spectra.hpp"

namespace soilgen::sogm {

/// Linear-beta DDPM schedule; index t runs 1..T.
struct DiffusionSchedule {
    int T = 0;
    std::vector<double> beta, alpha, alpha_bar;  // [0] holds t=1

    /// Betas linear from lo to hi, scaled by ref_T/T so total noise matches
    /// the reference-length schedule; alpha_bar(T) lands near zero.
    static DiffusionSchedule linear(int T = 300, double beta_lo = 1e-4, double beta_hi = 0.02,
                                    int ref_T = 1000);

    double snr(int t) const;                              // alpha_bar/(1-alpha_bar)
    double loss_weight(int t, double lambda = 5.0) const; // min(snr, lambda)

    nn::Tensor noising(const nn::Tensor& x0, int t, const nn::Tensor& eps) const;
    /// Algebraic inverse of noising given the true eps.
    nn::Tensor invert_noising(const nn::Tensor& xt, int t, const nn::Tensor& eps) const;
};

/// Eq-style weighted noise-matching loss: (1/B) sum_b min(SNR(t_b),lambda) *
/// mean_i (eps_pred - eps_true)^2.
nn::Var noise_loss(nn::Var eps_pred, const nn::Tensor& eps_true, const std::vector<int>& ts,
                   const DiffusionSchedule& sched, double lambda = 5.0);

struct UNetConfig {
    int64_t base_ch = 32;   // channel plan base_ch * {1,2,4,8}
    int64_t cond_dim = 128; // width of the conditioning sequence
    int heads = 4;
    int64_t time_dim = 128;
};

/// 1D U-Net over the 2100-slot grid (2100 -> 525 -> 131 -> 32), sinusoidal
/// time embedding injected per stage, one cross-attention layer over the
/// property conditioning at the bottleneck.
class ConditionalUNet1D {
public:
    ConditionalUNet1D(nn::ParameterStore& ps, nn::Rng& rng, UNetConfig cfg = {});

    /// x [B, 2100], ts length B (1-based steps), cond_seq [B, S, cond_dim],
    /// cond_mask [B, S]. Returns predicted noise [B, 2100].
    nn::Var forward(nn::Var x, const std::vector<int>& ts, nn::Var cond_seq,
                    const nn::Tensor& cond_mask) const;

    const UNetConfig& config() const { return cfg_; }

private:
    UNetConfig cfg_;
    nn::Dense time1_, time2_;
    nn::Conv1dLayer stem_, down1_, down2_, down3_, mid_;
    nn::Dense t_stem_, t_d1_, t_d2_, t_d3_, t_mid_, t_u3_, t_u2_, t_u1_;
    nn::Dense cond_proj_;
    nn::TransformerLayer cross_;
    nn::LayerNormLayer cross_ln_;
    nn::ConvT1dLayer up3_, up2_, up1_;
    nn::Conv1dLayer fuse3_, fuse2_, fuse1_, head_;
};

struct SogmConfig {
    props::EncoderConfig encoder;
    UNetConfig unet;
    int T = 300;
};

struct GenerationResult {
    Spectrum mean;
    std::vector<double> std;          // pointwise std across seeds
    std::vector<Spectrum> per_seed;
};

/// Text-conditioned spectra generator: property encoder + conditional U-Net
/// trained jointly, ancestral DDPM sampler.
class SogmModel {
public:
    SogmModel(nn::ParameterStore& ps, nn::Rng& rng, props::Dictionary dict,
              SogmConfig cfg = {});

    /// Training-path forward: predicts the noise in x_noisy (normalized
    /// space). Sentences are tokenized per call.
    nn::Var predict_noise(const nn::Tensor& x_noisy, const std::vector<int>& ts,
                          const std::vector<std::vector<props::PropertySentence>>& sentences,
                          const std::vector<uint8_t>& null_flags) const;

    /// One spectrum for one seed (deterministic), reflectance clamped [0,1.5].
    Spectrum sample(const std::vector<std::string>& sentences, uint64_t seed) const;

    /// Mean / pointwise std / per-seed spectra; seeds must be nonempty.
    GenerationResult generate(const std::vector<std::string>& sentences,
                              const std::vector<uint64_t>& seeds) const;
    GenerationResult generate_mean(const std::vector<std::string>& sentences, int n_seeds = 10,
                                   uint64_t base_seed = 1) const;

    /// Batched sampler: one spectrum per (sentence set, seed) request pair.
    std::vector<Spectrum> sample_batch(
        const std::vector<std::vector<std::string>>& sentence_sets,
        const std::vector<uint64_t>& seeds) const;

    /// Raw reverse trajectories in normalized space, before denormalization
    /// and clamping: [B, 2100], one row per request. Diagnostic hook.
    nn::Tensor reverse_raw(const std::vector<std::vector<std::string>>& sentence_sets,
                           const std::vector<uint64_t>& seeds) const;

    void set_normalization(double mean, double std);
    double norm_mean() const { return mean_; }
    double norm_std() const { return std_; }

    const DiffusionSchedule& schedule() const { return sched_; }
    const props::PropertyEncoder& encoder() const { return encoder_; }
    const SogmConfig& config() const { return cfg_; }

private:
    SogmConfig cfg_;
    DiffusionSchedule sched_;
    props::PropertyEncoder encoder_;
    ConditionalUNet1D unet_;
    double mean_ = 0.0, std_ = 1.0;
};

struct SogmTrainConfig {
    int epochs = 40;
    int batch = 8;
    double lr = 2e-4;
    uint64_t seed = 0;
    double sentence_dropout = 0.3;
    int log_every = 1;
};

struct TrainLog {
    std::vector<double> epoch_loss;
};

/// Joint training of encoder and U-Net on full-range spectra with property
/// sentences; sets the model's normalization from corpus statistics.
TrainLog train_sogm(SogmModel& model, nn::ParameterStore& ps, const io::Corpus& corpus,
                    const SogmTrainConfig& tc);

}  // namespace soilgen::sogm
