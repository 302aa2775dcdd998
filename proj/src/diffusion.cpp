#include "soilgen/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <utility>

namespace soilgen::sogm {

using nn::Tensor;
using nn::Var;

namespace {

void check_step(const DiffusionSchedule& s, int t) {
    SG_CHECK(t >= 1 && t <= s.T, precondition_error, "diffusion step ", t, " outside 1..", s.T);
}

}  // namespace

DiffusionSchedule DiffusionSchedule::linear(int T, double beta_lo, double beta_hi, int ref_T) {
    SG_CHECK(T >= 2, precondition_error, "schedule needs T >= 2, got ", T);
    SG_CHECK(beta_lo > 0.0 && beta_hi > beta_lo, precondition_error,
             "beta range must satisfy 0 < lo < hi");
    SG_CHECK(ref_T > 0, precondition_error, "reference length must be positive");

    DiffusionSchedule s;
    s.T = T;
    s.beta.resize(static_cast<size_t>(T));
    s.alpha.resize(static_cast<size_t>(T));
    s.alpha_bar.resize(static_cast<size_t>(T));
    const double scale = static_cast<double>(ref_T) / static_cast<double>(T);
    double ab = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double frac = static_cast<double>(t - 1) / static_cast<double>(T - 1);
        const double b = (beta_lo + (beta_hi - beta_lo) * frac) * scale;
        SG_CHECK(b < 1.0, value_error, "beta at step ", t, " is ", b, ", must stay below 1");
        s.beta[t - 1] = b;
        s.alpha[t - 1] = 1.0 - b;
        ab *= s.alpha[t - 1];
        s.alpha_bar[t - 1] = ab;
    }
    return s;
}

double DiffusionSchedule::snr(int t) const {
    check_step(*this, t);
    const double ab = alpha_bar[static_cast<size_t>(t - 1)];
    return ab / (1.0 - ab);
}

double DiffusionSchedule::loss_weight(int t, double lambda) const {
    return std::min(snr(t), lambda);
}

Tensor DiffusionSchedule::noising(const Tensor& x0, int t, const Tensor& eps) const {
    check_step(*this, t);
    SG_CHECK(x0.same_shape(eps), shape_error, "x0 ", nn::shape_str(x0.shape()), " vs eps ",
             nn::shape_str(eps.shape()));
    const double ab = alpha_bar[static_cast<size_t>(t - 1)];
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    Tensor out(x0.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a * x0[i] + b * eps[i];
    return out;
}

Tensor DiffusionSchedule::invert_noising(const Tensor& xt, int t, const Tensor& eps) const {
    check_step(*this, t);
    SG_CHECK(xt.same_shape(eps), shape_error, "xt ", nn::shape_str(xt.shape()), " vs eps ",
             nn::shape_str(eps.shape()));
    const double ab = alpha_bar[static_cast<size_t>(t - 1)];
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    Tensor out(xt.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = (xt[i] - b * eps[i]) / a;
    return out;
}

Var noise_loss(Var eps_pred, const Tensor& eps_true, const std::vector<int>& ts,
               const DiffusionSchedule& sched, double lambda) {
    SG_CHECK(eps_pred.shape().size() == 2, shape_error, "eps_pred must be [B,N]");
    const int64_t B = eps_pred.shape()[0];
    SG_CHECK(static_cast<int64_t>(ts.size()) == B, shape_error, "need one step index per sample");
    Tensor w({B});
    for (int64_t b = 0; b < B; ++b) w[b] = sched.loss_weight(ts[static_cast<size_t>(b)], lambda);
    return nn::weighted_mse(std::move(eps_pred), Var::constant(eps_true), w);
}

ConditionalUNet1D::ConditionalUNet1D(nn::ParameterStore& ps, nn::Rng& rng, UNetConfig cfg)
    : cfg_(cfg),
      time1_(ps, rng, "unet.time1", 64, cfg.time_dim),
      time2_(ps, rng, "unet.time2", cfg.time_dim, cfg.time_dim),
      stem_(ps, rng, "unet.stem", 1, cfg.base_ch, 7, 1, 3),
      down1_(ps, rng, "unet.down1", cfg.base_ch, 2 * cfg.base_ch, 4, 4, 0),
      down2_(ps, rng, "unet.down2", 2 * cfg.base_ch, 4 * cfg.base_ch, 5, 4, 0),
      down3_(ps, rng, "unet.down3", 4 * cfg.base_ch, 8 * cfg.base_ch, 4, 4, 0),
      mid_(ps, rng, "unet.mid", 8 * cfg.base_ch, 8 * cfg.base_ch, 3, 1, 1),
      t_stem_(ps, rng, "unet.t_stem", cfg.time_dim, cfg.base_ch),
      t_d1_(ps, rng, "unet.t_d1", cfg.time_dim, 2 * cfg.base_ch),
      t_d2_(ps, rng, "unet.t_d2", cfg.time_dim, 4 * cfg.base_ch),
      t_d3_(ps, rng, "unet.t_d3", cfg.time_dim, 8 * cfg.base_ch),
      t_mid_(ps, rng, "unet.t_mid", cfg.time_dim, 8 * cfg.base_ch),
      t_u3_(ps, rng, "unet.t_u3", cfg.time_dim, 4 * cfg.base_ch),
      t_u2_(ps, rng, "unet.t_u2", cfg.time_dim, 2 * cfg.base_ch),
      t_u1_(ps, rng, "unet.t_u1", cfg.time_dim, cfg.base_ch),
      cond_proj_(ps, rng, "unet.cond_proj", cfg.cond_dim, 8 * cfg.base_ch),
      cross_(ps, rng, "unet.cross", 8 * cfg.base_ch, cfg.heads, 16 * cfg.base_ch,
             /*with_cross=*/true),
      cross_ln_(ps, "unet.cross_ln", 8 * cfg.base_ch),
      up3_(ps, rng, "unet.up3", 8 * cfg.base_ch, 4 * cfg.base_ch, 4, 4, 0),
      up2_(ps, rng, "unet.up2", 4 * cfg.base_ch, 2 * cfg.base_ch, 5, 4, 0),
      up1_(ps, rng, "unet.up1", 2 * cfg.base_ch, cfg.base_ch, 4, 4, 0),
      fuse3_(ps, rng, "unet.fuse3", 8 * cfg.base_ch, 4 * cfg.base_ch, 3, 1, 1),
      fuse2_(ps, rng, "unet.fuse2", 4 * cfg.base_ch, 2 * cfg.base_ch, 3, 1, 1),
      fuse1_(ps, rng, "unet.fuse1", 2 * cfg.base_ch, cfg.base_ch, 3, 1, 1),
      head_(ps, rng, "unet.head", cfg.base_ch, 1, 1, 1, 0) {
    SG_CHECK(cfg.base_ch >= 1, precondition_error, "base_ch must be >= 1");
    SG_CHECK((8 * cfg.base_ch) % cfg.heads == 0, precondition_error,
             "bottleneck width ", 8 * cfg.base_ch, " not divisible by ", cfg.heads, " heads");
}

Var ConditionalUNet1D::forward(Var x, const std::vector<int>& ts, Var cond_seq,
                               const Tensor& cond_mask) const {
    SG_CHECK(x.shape().size() == 2 && x.shape()[1] == kGridSize, shape_error,
             "expected [B,", kGridSize, "], got ", nn::shape_str(x.shape()));
    const int64_t B = x.shape()[0];
    SG_CHECK(static_cast<int64_t>(ts.size()) == B, shape_error, "need one step per sample");
    SG_CHECK(cond_seq.shape().size() == 3 && cond_seq.shape()[0] == B &&
                 cond_seq.shape()[2] == cfg_.cond_dim,
             shape_error, "conditioning must be [B,S,", cfg_.cond_dim, "]");
    SG_CHECK(cond_mask.rank() == 2 && cond_mask.dim(0) == B &&
                 cond_mask.dim(1) == cond_seq.shape()[1],
             shape_error, "conditioning mask must be [B,S]");

    std::vector<double> tpos(ts.begin(), ts.end());
    Var temb = time2_.forward(nn::gelu(time1_.forward(
        Var::constant(nn::sinusoidal_embedding(tpos, 64)))));

    auto block = [&](Var h, const nn::Dense& tproj) {
        return nn::gelu(nn::add_channel_bias(std::move(h), tproj.forward(temb)));
    };

    Var h0 = block(stem_.forward(nn::reshape(std::move(x), {B, 1, kGridSize})), t_stem_);
    Var h1 = block(down1_.forward(h0), t_d1_);   // [B, 2c, 525]
    Var h2 = block(down2_.forward(h1), t_d2_);   // [B, 4c, 131]
    Var h3 = block(down3_.forward(h2), t_d3_);   // [B, 8c, 32]

    Var m = block(mid_.forward(h3), t_mid_);
    Var tokens = nn::transpose_12(m);            // [B, 32, 8c]
    tokens = cross_.forward(tokens, Tensor{}, cond_proj_.forward(cond_seq), cond_mask);
    m = nn::transpose_12(cross_ln_.forward(tokens));

    Var u3 = block(fuse3_.forward(nn::concat_dim1(up3_.forward(m, 131), h2)), t_u3_);
    Var u2 = block(fuse2_.forward(nn::concat_dim1(up2_.forward(u3, kCoarseSize), h1)), t_u2_);
    Var u1 = block(fuse1_.forward(nn::concat_dim1(up1_.forward(u2, kGridSize), h0)), t_u1_);
    return nn::reshape(head_.forward(u1), {B, kGridSize});
}

SogmModel::SogmModel(nn::ParameterStore& ps, nn::Rng& rng, props::Dictionary dict, SogmConfig cfg)
    : cfg_(cfg),
      sched_(DiffusionSchedule::linear(cfg.T)),
      encoder_(ps, rng, std::move(dict), cfg.encoder),
      unet_(ps, rng, cfg.unet) {
    SG_CHECK(cfg.unet.cond_dim == cfg.encoder.d_model, precondition_error,
             "unet cond_dim must match encoder d_model");
}

Var SogmModel::predict_noise(const Tensor& x_noisy, const std::vector<int>& ts,
                             const std::vector<std::vector<props::PropertySentence>>& sentences,
                             const std::vector<uint8_t>& null_flags) const {
    props::Conditioning cond = encoder_.encode(sentences, null_flags);
    return unet_.forward(Var::constant(x_noisy), ts, cond.seq, cond.mask);
}

void SogmModel::set_normalization(double mean, double std) {
    SG_CHECK(std::isfinite(mean) && std::isfinite(std) && std > 0.0, precondition_error,
             "normalization needs finite mean and positive std");
    mean_ = mean;
    std_ = std;
}

nn::Tensor SogmModel::reverse_raw(const std::vector<std::vector<std::string>>& sentence_sets,
                                  const std::vector<uint64_t>& seeds) const {
    SG_CHECK(!seeds.empty(), precondition_error, "no sampling requests");
    SG_CHECK(sentence_sets.size() == seeds.size(), precondition_error,
             "need one sentence set per seed");

    nn::NoGradGuard ng;
    const int64_t B = static_cast<int64_t>(seeds.size());

    std::vector<std::vector<props::PropertySentence>> toks(seeds.size());
    std::vector<uint8_t> nulls(seeds.size(), 0);
    for (size_t b = 0; b < seeds.size(); ++b) {
        for (const std::string& s : sentence_sets[b]) toks[b].push_back(props::tokenize(s));
        if (toks[b].empty()) nulls[b] = 1;
    }
    props::Conditioning cond = encoder_.encode(toks, nulls);

    std::vector<nn::Rng> rngs;
    rngs.reserve(seeds.size());
    for (uint64_t s : seeds) rngs.emplace_back(s);

    Tensor x({B, kGridSize});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < kGridSize; ++i)
            x[b * kGridSize + i] = rngs[static_cast<size_t>(b)].normal();

    for (int t = sched_.T; t >= 1; --t) {
        const std::vector<int> ts(static_cast<size_t>(B), t);
        Var eps = unet_.forward(Var::constant(x), ts, cond.seq, cond.mask);
        const double a_t = sched_.alpha[static_cast<size_t>(t - 1)];
        const double b_t = sched_.beta[static_cast<size_t>(t - 1)];
        const double ab = sched_.alpha_bar[static_cast<size_t>(t - 1)];
        const double inv_sqrt_a = 1.0 / std::sqrt(a_t);
        const double eps_coef = b_t / std::sqrt(1.0 - ab);
        const double sigma = std::sqrt(b_t);
        const Tensor& e = eps.value();
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t i = 0; i < kGridSize; ++i) {
                const int64_t k = b * kGridSize + i;
                double v = inv_sqrt_a * (x[k] - eps_coef * e[k]);
                if (t > 1) v += sigma * rngs[static_cast<size_t>(b)].normal();
                x[k] = v;
            }
        }
    }
    return x;
}

std::vector<Spectrum> SogmModel::sample_batch(
    const std::vector<std::vector<std::string>>& sentence_sets,
    const std::vector<uint64_t>& seeds) const {
    Tensor x = reverse_raw(sentence_sets, seeds);
    const int64_t B = x.dim(0);
    std::vector<Spectrum> out;
    out.reserve(seeds.size());
    for (int64_t b = 0; b < B; ++b) {
        std::vector<double> vals(kGridSize);
        for (int64_t i = 0; i < kGridSize; ++i)
            vals[static_cast<size_t>(i)] = x[b * kGridSize + i] * std_ + mean_;
        Spectrum sp = Spectrum::full(std::move(vals));
        for (double& v : sp.values) v = std::clamp(v, 0.0, 1.5);
        out.push_back(std::move(sp));
    }
    return out;
}

Spectrum SogmModel::sample(const std::vector<std::string>& sentences, uint64_t seed) const {
    return sample_batch({sentences}, {seed}).front();
}

GenerationResult SogmModel::generate(const std::vector<std::string>& sentences,
                                     const std::vector<uint64_t>& seeds) const {
    SG_CHECK(!seeds.empty(), precondition_error, "need at least one seed");
    GenerationResult res;
    res.per_seed = sample_batch(std::vector<std::vector<std::string>>(seeds.size(), sentences),
                                seeds);
    const double n = static_cast<double>(seeds.size());
    std::vector<double> mean(kGridSize, 0.0);
    for (const Spectrum& s : res.per_seed)
        for (int i = 0; i < kGridSize; ++i) mean[static_cast<size_t>(i)] += s.values[static_cast<size_t>(i)];
    for (double& v : mean) v /= n;
    res.std.assign(kGridSize, 0.0);
    for (const Spectrum& s : res.per_seed)
        for (int i = 0; i < kGridSize; ++i) {
            const double d = s.values[static_cast<size_t>(i)] - mean[static_cast<size_t>(i)];
            res.std[static_cast<size_t>(i)] += d * d;
        }
    for (double& v : res.std) v = std::sqrt(v / n);
    res.mean = Spectrum::full(std::move(mean));
    return res;
}

GenerationResult SogmModel::generate_mean(const std::vector<std::string>& sentences, int n_seeds,
                                          uint64_t base_seed) const {
    SG_CHECK(n_seeds >= 1, precondition_error, "need at least one seed");
    std::vector<uint64_t> seeds(static_cast<size_t>(n_seeds));
    std::iota(seeds.begin(), seeds.end(), base_seed);
    return generate(sentences, seeds);
}

TrainLog train_sogm(SogmModel& model, nn::ParameterStore& ps, const io::Corpus& corpus,
                    const SogmTrainConfig& tc) {
    SG_CHECK(corpus.size() > 0, precondition_error, "cannot train on an empty corpus");
    SG_CHECK(tc.epochs >= 1 && tc.batch >= 1, precondition_error, "bad training config");
    SG_CHECK(tc.sentence_dropout >= 0.0 && tc.sentence_dropout < 1.0, precondition_error,
             "sentence dropout must lie in [0,1)");

    const int64_t N = static_cast<int64_t>(corpus.size());
    double sum = 0.0;
    for (const Spectrum& s : corpus.spectra) {
        s.validate();
        SG_CHECK(s.fully_measured(), precondition_error,
                 "training spectra must cover the full grid (pad them first)");
        for (double v : s.values) sum += v;
    }
    const double count = static_cast<double>(N) * kGridSize;
    const double mean = sum / count;
    double sq = 0.0;
    for (const Spectrum& s : corpus.spectra)
        for (double v : s.values) sq += (v - mean) * (v - mean);
    const double std = std::sqrt(sq / count);
    SG_CHECK(std > 0.0, value_error, "corpus has zero variance");
    model.set_normalization(mean, std);

    std::vector<std::vector<props::PropertySentence>> toks(corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i)
        for (const std::string& s : corpus.sentences[i]) toks[i].push_back(props::tokenize(s));

    nn::Rng rng(tc.seed);
    nn::Adam opt(ps, tc.lr);
    const DiffusionSchedule& sched = model.schedule();
    std::vector<int64_t> order(static_cast<size_t>(N));
    std::iota(order.begin(), order.end(), 0);

    TrainLog log;
    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        for (int64_t i = N - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)],
                      order[static_cast<size_t>(rng.uniform_int(0, i))]);

        double total = 0.0;
        int steps = 0;
        for (int64_t start = 0; start < N; start += tc.batch) {
            const int64_t B = std::min<int64_t>(tc.batch, N - start);
            Tensor x({B, kGridSize});
            Tensor eps({B, kGridSize});
            std::vector<int> ts(static_cast<size_t>(B));
            std::vector<std::vector<props::PropertySentence>> sents(static_cast<size_t>(B));
            std::vector<uint8_t> nulls(static_cast<size_t>(B), 0);

            for (int64_t b = 0; b < B; ++b) {
                const size_t idx = static_cast<size_t>(order[static_cast<size_t>(start + b)]);
                const Spectrum& sp = corpus.spectra[idx];
                ts[static_cast<size_t>(b)] = static_cast<int>(rng.uniform_int(1, sched.T));
                const double ab = sched.alpha_bar[static_cast<size_t>(ts[static_cast<size_t>(b)] - 1)];
                const double ca = std::sqrt(ab);
                const double cb = std::sqrt(1.0 - ab);
                for (int64_t i = 0; i < kGridSize; ++i) {
                    const double e = rng.normal();
                    const double x0 = (sp.values[static_cast<size_t>(i)] - model.norm_mean()) /
                                      model.norm_std();
                    eps[b * kGridSize + i] = e;
                    x[b * kGridSize + i] = ca * x0 + cb * e;
                }
                for (const props::PropertySentence& s : toks[idx])
                    if (rng.uniform() >= tc.sentence_dropout)
                        sents[static_cast<size_t>(b)].push_back(s);
                if (sents[static_cast<size_t>(b)].empty()) nulls[static_cast<size_t>(b)] = 1;
            }

            Var pred = model.predict_noise(x, ts, sents, nulls);
            Var loss = noise_loss(std::move(pred), eps, ts, sched);
            ps.zero_grad();
            loss.backward();
            opt.step();
            total += loss.value().item();
            ++steps;
        }
        log.epoch_loss.push_back(total / steps);
        if (tc.log_every > 0 && (epoch % tc.log_every == 0 || epoch == tc.epochs))
            std::printf("[train-sogm] epoch %d/%d loss %.6f\n", epoch, tc.epochs,
                        log.epoch_loss.back());
    }
    return log;
}

}  // namespace soilgen::sogm
