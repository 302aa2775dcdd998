#include "soilgen/wet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "soilgen/nn/optim.hpp"

namespace soilgen::wet {

using nn::Tensor;
using nn::Var;

double smc_gravimetric(double m_wet, double m_dry) {
    SG_CHECK(std::isfinite(m_wet) && std::isfinite(m_dry), precondition_error,
             "masses must be finite");
    SG_CHECK(m_dry > 0.0, precondition_error, "dry mass must be positive, got ", m_dry);
    SG_CHECK(m_wet >= m_dry, precondition_error, "wet mass ", m_wet, " below dry mass ", m_dry);
    return 100.0 * (m_wet - m_dry) / m_dry;
}

WetModel::WetModel(nn::ParameterStore& ps, nn::Rng& rng, WetModelConfig cfg)
    : cfg_(cfg),
      stem_(ps, rng, "wet.stem", 2, cfg.base_ch, 7, 1, 3),
      down1_(ps, rng, "wet.down1", cfg.base_ch, 2 * cfg.base_ch, 4, 4, 0),
      down2_(ps, rng, "wet.down2", 2 * cfg.base_ch, 4 * cfg.base_ch, 5, 4, 0),
      down3_(ps, rng, "wet.down3", 4 * cfg.base_ch, 8 * cfg.base_ch, 4, 4, 0),
      mid_(ps, rng, "wet.mid", 8 * cfg.base_ch, 8 * cfg.base_ch, 3, 1, 1),
      up3_(ps, rng, "wet.up3", 8 * cfg.base_ch, 4 * cfg.base_ch, 4, 4, 0),
      up2_(ps, rng, "wet.up2", 4 * cfg.base_ch, 2 * cfg.base_ch, 5, 4, 0),
      up1_(ps, rng, "wet.up1", 2 * cfg.base_ch, cfg.base_ch, 4, 4, 0),
      fuse3_(ps, rng, "wet.fuse3", 8 * cfg.base_ch, 4 * cfg.base_ch, 3, 1, 1),
      fuse2_(ps, rng, "wet.fuse2", 4 * cfg.base_ch, 2 * cfg.base_ch, 3, 1, 1),
      fuse1_(ps, rng, "wet.fuse1", 2 * cfg.base_ch, cfg.base_ch, 3, 1, 1),
      head_(ps, rng, "wet.head", cfg.base_ch, 1, 1, 1, 0) {
    SG_CHECK(cfg.base_ch >= 1, precondition_error, "base_ch must be >= 1");
    SG_CHECK(cfg.iteration_cap >= 1, precondition_error, "iteration cap must be >= 1");
}

Var WetModel::forward(Var x) const {
    SG_CHECK(x.shape().size() == 3 && x.shape()[1] == 2 && x.shape()[2] == kGridSize, shape_error,
             "expected [B,2,", kGridSize, "], got ", nn::shape_str(x.shape()));
    const int64_t B = x.shape()[0];
    Var h0 = nn::gelu(stem_.forward(std::move(x)));  // [B, c, 2100]
    Var h1 = nn::gelu(down1_.forward(h0));           // [B, 2c, 525]
    Var h2 = nn::gelu(down2_.forward(h1));           // [B, 4c, 131]
    Var h3 = nn::gelu(down3_.forward(h2));           // [B, 8c, 32]
    Var m = nn::gelu(mid_.forward(h3));
    Var u3 = nn::gelu(fuse3_.forward(nn::concat_dim1(up3_.forward(m, 131), h2)));
    Var u2 = nn::gelu(fuse2_.forward(nn::concat_dim1(up2_.forward(u3, kCoarseSize), h1)));
    Var u1 = nn::gelu(fuse1_.forward(nn::concat_dim1(up1_.forward(u2, kGridSize), h0)));
    return nn::reshape(head_.forward(u1), {B, kGridSize});
}

Spectrum WetModel::predict(const Spectrum& dry, double smc_g) const {
    dry.validate();
    SG_CHECK(dry.fully_measured(), precondition_error, "dry spectrum must cover the full grid");
    SG_CHECK(std::isfinite(smc_g) && smc_g >= 0.0, precondition_error,
             "smc must be nonnegative, got ", smc_g);

    nn::NoGradGuard ng;
    Tensor x({1, 2, kGridSize});
    for (int i = 0; i < kGridSize; ++i) {
        x[i] = dry.values[static_cast<size_t>(i)];
        x[kGridSize + i] = smc_g / 100.0;
    }
    Var delta = forward(Var::constant(x));
    std::vector<double> vals(kGridSize);
    for (int i = 0; i < kGridSize; ++i)
        vals[static_cast<size_t>(i)] =
            std::clamp(dry.values[static_cast<size_t>(i)] - delta.value()[i], 0.0, 1.5);
    Spectrum out = Spectrum::full(std::move(vals), dry.meta);
    return out;
}

WetSplit split_samples(size_t n, double test_fraction, uint64_t seed) {
    SG_CHECK(n >= 2, precondition_error, "need at least two samples to split");
    SG_CHECK(test_fraction > 0.0 && test_fraction < 1.0, precondition_error,
             "test fraction must lie in (0,1)");
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    nn::Rng rng(seed);
    for (size_t i = n - 1; i > 0; --i)
        std::swap(order[i], order[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i)))]);
    size_t n_test = static_cast<size_t>(static_cast<double>(n) * test_fraction);
    n_test = std::clamp<size_t>(n_test, 1, n - 1);
    WetSplit split;
    split.test_idx.assign(order.begin(), order.begin() + static_cast<long>(n_test));
    split.train_idx.assign(order.begin() + static_cast<long>(n_test), order.end());
    std::sort(split.test_idx.begin(), split.test_idx.end());
    std::sort(split.train_idx.begin(), split.train_idx.end());
    return split;
}

WetTrainLog train_wet(WetModel& model, nn::ParameterStore& ps, const io::Corpus& corpus,
                      const WetTrainConfig& tc) {
    SG_CHECK(corpus.size() > 0, precondition_error, "cannot train on an empty corpus");
    SG_CHECK(corpus.has_wet(), precondition_error, "corpus carries no wet spectra");
    SG_CHECK(corpus.wet_spectra.size() == corpus.size() && corpus.smc.size() == corpus.size(),
             precondition_error, "wet data must align with the dry spectra");
    SG_CHECK(tc.iterations >= 1 && tc.batch >= 1, precondition_error, "bad training config");
    for (size_t i = 0; i < corpus.size(); ++i) {
        corpus.spectra[i].validate();
        corpus.wet_spectra[i].validate();
        SG_CHECK(corpus.spectra[i].fully_measured() && corpus.wet_spectra[i].fully_measured(),
                 precondition_error, "wet training needs full-range spectra");
        SG_CHECK(corpus.smc[i] >= 0.0, precondition_error, "smc must be nonnegative");
    }

    WetTrainLog log;
    log.split = split_samples(corpus.size(), tc.test_fraction, tc.seed);
    const auto& train = log.split.train_idx;

    const int iters = std::min(tc.iterations, model.config().iteration_cap);
    nn::Rng rng(tc.seed + 1);
    nn::Adam opt(ps, tc.lr);

    std::vector<size_t> order = train;
    size_t cursor = order.size();  // forces a shuffle on first use
    for (int it = 1; it <= iters; ++it) {
        const int64_t B = static_cast<int64_t>(
            std::min<size_t>(static_cast<size_t>(tc.batch), order.size()));
        Tensor x({B, 2, kGridSize});
        Tensor target({B, kGridSize});
        for (int64_t b = 0; b < B; ++b) {
            if (cursor >= order.size()) {
                for (size_t i = order.size() - 1; i > 0; --i)
                    std::swap(order[i],
                              order[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i)))]);
                cursor = 0;
            }
            const size_t idx = order[cursor++];
            const Spectrum& dry = corpus.spectra[idx];
            const Spectrum& wetsp = corpus.wet_spectra[idx];
            for (int64_t i = 0; i < kGridSize; ++i) {
                x[(b * 2) * kGridSize + i] = dry.values[static_cast<size_t>(i)];
                x[(b * 2 + 1) * kGridSize + i] = corpus.smc[idx] / 100.0;
                target[b * kGridSize + i] =
                    dry.values[static_cast<size_t>(i)] - wetsp.values[static_cast<size_t>(i)];
            }
        }
        Var loss = nn::mse(model.forward(Var::constant(x)), Var::constant(target));
        ps.zero_grad();
        loss.backward();
        opt.step();
        log.iter_loss.push_back(loss.value().item());
        if (tc.log_every > 0 && (it % tc.log_every == 0 || it == iters))
            std::printf("[train-wet] iter %d/%d loss %.6f\n", it, iters, log.iter_loss.back());
    }
    return log;
}

}  // namespace soilgen::wet
