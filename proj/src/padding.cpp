#include "soilgen/padding.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "soilgen/common.hpp"

namespace soilgen::pad {

using nn::Tensor;
using nn::Var;

namespace {

struct ConvStage {
    int64_t out_ch, kernel;
    int stride, padding;
    int64_t out_len;
};

// 42 -> 21 -> 11 -> 6 -> 3, then back up 3 -> 9 -> 27 -> 105 -> 525
constexpr int64_t kLatentLen = 3;
const ConvStage kEncPlan[4] = {{1, 5, 2, 2, 21}, {2, 5, 2, 2, 11}, {2, 5, 2, 2, 6}, {1, 5, 2, 2, 3}};
const ConvStage kDecPlan[4] = {{1, 5, 3, 1, 9}, {2, 5, 3, 1, 27}, {2, 7, 4, 3, 105}, {1, 5, 5, 0, 525}};

}  // namespace

PaddingModel::PaddingModel(nn::ParameterStore& ps, nn::Rng& rng, PaddingConfig cfg)
    : cfg_(cfg),
      band_proj_(ps, rng, "pad.proj", kBandWidth, cfg.d_model),
      embed_ln_(ps, "pad.embed.ln", cfg.d_model),
      readout_(ps, rng, "pad.readout", cfg.d_model, cfg.heads, cfg.ffn_hidden, true),
      readout_ln_(ps, "pad.readout.ln", cfg.d_model),
      head_(ps, rng, "pad.head", cfg.conv_width, 1, 1, 1, 0) {
    SG_CHECK(cfg.d_model > 0 && cfg.heads > 0 && cfg.d_model % cfg.heads == 0, value_error,
             "d_model ", cfg.d_model, " must be divisible by heads ", cfg.heads);
    SG_CHECK(cfg.self_layers > 0 && cfg.conv_width > 0, value_error,
             "padding model needs positive layer counts and widths");

    queries_ = &ps.create("pad.queries", {static_cast<int64_t>(kBandCount), cfg.d_model});
    nn::init_trunc_normal(queries_->value, rng, 0.02);

    self_layers_.reserve(static_cast<size_t>(cfg.self_layers));
    for (int i = 0; i < cfg.self_layers; ++i)
        self_layers_.emplace_back(ps, rng, "pad.self.l" + std::to_string(i), cfg.d_model,
                                  cfg.heads, cfg.ffn_hidden, false);

    int64_t in_ch = cfg.d_model;
    for (int i = 0; i < 4; ++i) {
        int64_t out_ch = kEncPlan[i].out_ch * cfg.conv_width;
        enc_.emplace_back(ps, rng, "pad.enc.c" + std::to_string(i), in_ch, out_ch,
                          kEncPlan[i].kernel, kEncPlan[i].stride, kEncPlan[i].padding);
        in_ch = out_ch;
    }
    for (int i = 0; i < 4; ++i) {
        int64_t out_ch = kDecPlan[i].out_ch * cfg.conv_width;
        dec_.emplace_back(ps, rng, "pad.dec.c" + std::to_string(i), in_ch, out_ch,
                          kDecPlan[i].kernel, kDecPlan[i].stride, kDecPlan[i].padding);
        in_ch = out_ch;
    }
}

Var PaddingModel::embed(const Tensor& bands, const Tensor& band_mask) const {
    SG_CHECK(bands.rank() == 2 && bands.shape()[1] == kBandCount * kBandWidth, shape_error,
             "bands must be [B, ", kBandCount * kBandWidth, "], got ", nn::shape_str(bands.shape()));
    SG_CHECK(band_mask.rank() == 2 && band_mask.shape()[0] == bands.shape()[0] &&
                 band_mask.shape()[1] == kBandCount,
             shape_error, "band mask must be [B, ", kBandCount, "], got ",
             nn::shape_str(band_mask.shape()));
    const int64_t B = bands.shape()[0], D = cfg_.d_model;
    for (int64_t b = 0; b < B; ++b) {
        bool any = false;
        for (int64_t i = 0; i < kBandCount; ++i)
            any = any || band_mask.data()[b * kBandCount + i] != 0.0;
        SG_CHECK(any, precondition_error, "sample ", b, " has no measured bands");
    }

    Tensor flat_mask({B * kBandCount});
    for (int64_t i = 0; i < B * kBandCount; ++i)
        flat_mask.data()[i] = band_mask.data()[i] != 0.0 ? 1.0 : 0.0;

    Var x = band_proj_.forward(Var::constant(bands.reshaped({B * kBandCount, kBandWidth})));
    x = nn::row_scale(x, flat_mask);  // masked bands contribute nothing, bias included

    std::vector<double> pos(kBandCount);
    std::iota(pos.begin(), pos.end(), 0.0);
    Tensor pe = nn::sinusoidal_embedding(pos, D);
    Tensor pet = Tensor::zeros({B * kBandCount, D});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < kBandCount; ++i)
            if (flat_mask.data()[b * kBandCount + i] != 0.0)
                std::copy(pe.data() + i * D, pe.data() + (i + 1) * D,
                          pet.data() + (b * kBandCount + i) * D);
    x = nn::add(x, Var::constant(std::move(pet)));

    x = nn::reshape(x, {B, static_cast<int64_t>(kBandCount), D});
    for (const auto& layer : self_layers_) x = layer.forward(x, band_mask);
    x = embed_ln_.forward(x);
    // zero-padded inputs come out zero-padded
    x = nn::reshape(nn::row_scale(nn::reshape(x, {B * kBandCount, D}), flat_mask),
                    {B, static_cast<int64_t>(kBandCount), D});
    return x;
}

Var PaddingModel::forward(const Tensor& bands, const Tensor& band_mask) const {
    Var emb = embed(bands, band_mask);
    const int64_t B = bands.shape()[0], D = cfg_.d_model;

    std::vector<int64_t> ids(static_cast<size_t>(B * kBandCount));
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < kBandCount; ++i)
            ids[static_cast<size_t>(b * kBandCount + i)] = i;
    Var q = nn::reshape(nn::embedding(Var::param(*queries_), ids),
                        {B, static_cast<int64_t>(kBandCount), D});
    q = readout_.forward(q, Tensor{}, emb, band_mask);
    q = readout_ln_.forward(q);

    Var h = nn::transpose_12(q);  // [B, D, 42]
    for (const auto& c : enc_) h = nn::gelu(c.forward(h));
    for (int i = 0; i < 4; ++i) h = nn::gelu(dec_[static_cast<size_t>(i)].forward(h, kDecPlan[i].out_len));
    h = head_.forward(h);  // [B, 1, 525]
    return nn::reshape(h, {B, static_cast<int64_t>(kCoarseSize)});
}

CoarseSpectrum PaddingModel::predict_coarse(const WavebandTensor& wt) const {
    nn::NoGradGuard ng;
    Tensor bands({1, static_cast<int64_t>(kBandCount * kBandWidth)}, wt.bands);
    Tensor mask({1, static_cast<int64_t>(kBandCount)});
    for (int i = 0; i < kBandCount; ++i)
        mask.data()[i] = wt.band_mask[static_cast<size_t>(i)] ? 1.0 : 0.0;

    Tensor out = forward(bands, mask).value();
    out.clamp_(0.0, 1.5);
    CoarseSpectrum c;
    std::copy(out.data(), out.data() + kCoarseSize, c.values.begin());
    return c;
}

Spectrum PaddingModel::pad_spectrum(const Spectrum& s) const {
    s.validate();
    if (s.fully_measured()) return s;

    Spectrum up = upsample_linear(predict_coarse(reshape_to_wavebands(s)));
    for (int i = 0; i < kGridSize; ++i)
        if (s.mask[static_cast<size_t>(i)]) up.values[static_cast<size_t>(i)] = s.values[static_cast<size_t>(i)];

    Spectrum smoothed = savgol_smooth(up, 100, 2);
    Spectrum out = std::move(up);
    for (int i = 0; i < kGridSize; ++i)
        if (!s.mask[static_cast<size_t>(i)])
            out.values[static_cast<size_t>(i)] = smoothed.values[static_cast<size_t>(i)];
    out.meta = s.meta;
    return out;
}

std::pair<int, int> draw_truncation(nn::Rng& rng) {
    while (true) {
        int p = static_cast<int>(rng.uniform_int(0, 20));
        int q = static_cast<int>(rng.uniform_int(0, 20));
        if (kBandCount - p - q >= 8) return {p, q};
    }
}

TrainLog train_padding(PaddingModel& model, nn::ParameterStore& ps,
                       const std::vector<Spectrum>& spectra, const PaddingTrainConfig& tc) {
    SG_CHECK(!spectra.empty(), precondition_error, "empty training corpus");
    SG_CHECK(tc.epochs > 0 && tc.batch > 0 && tc.lr > 0, value_error,
             "bad training configuration");
    const int64_t N = static_cast<int64_t>(spectra.size());
    std::vector<CoarseSpectrum> targets;
    targets.reserve(spectra.size());
    for (const auto& s : spectra) {
        SG_CHECK(s.fully_measured(), precondition_error,
                 "padding training needs full-range spectra");
        targets.push_back(downsample_4nm(s));
    }

    nn::Rng rng(tc.seed);
    nn::Adam opt(ps, tc.lr);
    std::vector<int64_t> order(static_cast<size_t>(N));
    std::iota(order.begin(), order.end(), 0);

    TrainLog log;
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        for (int64_t i = N - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)],
                      order[static_cast<size_t>(rng.uniform_int(0, i))]);

        double ep_loss = 0;
        int64_t batches = 0;
        for (int64_t start = 0; start < N; start += tc.batch) {
            const int64_t B = std::min<int64_t>(tc.batch, N - start);
            Tensor bands = Tensor::zeros({B, static_cast<int64_t>(kBandCount * kBandWidth)});
            Tensor mask = Tensor::zeros({B, static_cast<int64_t>(kBandCount)});
            Tensor target({B, static_cast<int64_t>(kCoarseSize)});
            for (int64_t b = 0; b < B; ++b) {
                const Spectrum& src = spectra[static_cast<size_t>(order[static_cast<size_t>(start + b)])];
                auto [p, q] = draw_truncation(rng);
                for (int i = 0; i < kBandCount; ++i) {
                    if (i < p || i >= kBandCount - q) continue;
                    mask.data()[b * kBandCount + i] = 1.0;
                    std::copy(src.values.begin() + i * kBandWidth,
                              src.values.begin() + (i + 1) * kBandWidth,
                              bands.data() + b * kBandCount * kBandWidth + i * kBandWidth);
                }
                const auto& t = targets[static_cast<size_t>(order[static_cast<size_t>(start + b)])];
                std::copy(t.values.begin(), t.values.end(), target.data() + b * kCoarseSize);
            }

            Var loss = nn::mse(model.forward(bands, mask), Var::constant(std::move(target)));
            ps.zero_grad();
            loss.backward();
            opt.step();
            ep_loss += loss.value().item();
            ++batches;
        }
        log.epoch_loss.push_back(ep_loss / static_cast<double>(batches));
        if (tc.log_every > 0 && (epoch % tc.log_every == 0 || epoch + 1 == tc.epochs))
            std::printf("[train-pad] epoch %d/%d loss %.6f\n", epoch + 1, tc.epochs,
                        log.epoch_loss.back());
    }
    return log;
}

}  // namespace soilgen::pad
