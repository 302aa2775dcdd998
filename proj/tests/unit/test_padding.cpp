#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "soilgen/nn/checkpoint.hpp"
#include "soilgen/padding.hpp"

using namespace soilgen;
using namespace soilgen::pad;
using nn::ParameterStore;
using nn::Rng;
using nn::Tensor;
using nn::Var;

namespace {

PaddingConfig tiny_cfg() {
    PaddingConfig c;
    c.d_model = 16;
    c.heads = 2;
    c.self_layers = 1;
    c.ffn_hidden = 32;
    c.conv_width = 6;
    return c;
}

// smooth synthetic reflectance curve on the full grid
Spectrum smooth_curve(double base, double slope, double depth) {
    Spectrum s;
    for (int i = 0; i < kGridSize; ++i) {
        double u = i / 2099.0;
        double g = std::exp(-0.5 * std::pow((400.0 + i - 1400.0) / 120.0, 2.0));
        s.values[static_cast<size_t>(i)] = base + slope * u - depth * g;
        s.mask[static_cast<size_t>(i)] = 1;
    }
    return s;
}

Tensor bands_of(const WavebandTensor& wt) {
    return Tensor({1, static_cast<int64_t>(kBandCount * kBandWidth)}, wt.bands);
}

Tensor mask_of(const WavebandTensor& wt) {
    Tensor m({1, static_cast<int64_t>(kBandCount)});
    for (int i = 0; i < kBandCount; ++i)
        m.data()[i] = wt.band_mask[static_cast<size_t>(i)] ? 1.0 : 0.0;
    return m;
}

}  // namespace

TEST_SUITE("padding") {

TEST_CASE("masked band rows come out exactly zero") {
    ParameterStore ps;
    Rng rng(31);
    PaddingModel model(ps, rng, tiny_cfg());

    Spectrum s = smooth_curve(0.3, 0.1, 0.08);
    for (int i = 0; i < 8 * kBandWidth; ++i) {  // zero bands 0-7
        s.values[static_cast<size_t>(i)] = 0.0;
        s.mask[static_cast<size_t>(i)] = 0;
    }
    WavebandTensor wt = reshape_to_wavebands(s);
    Var emb = model.embed(bands_of(wt), mask_of(wt));
    REQUIRE(emb.shape() == std::vector<int64_t>{1, kBandCount, 16});
    const int64_t D = 16;
    for (int b = 0; b < 8; ++b)
        for (int64_t j = 0; j < D; ++j)
            CHECK(emb.value().data()[b * D + j] == 0.0);
    double measured_norm = 0;
    for (int b = 8; b < kBandCount; ++b)
        for (int64_t j = 0; j < D; ++j)
            measured_norm += std::abs(emb.value().data()[b * D + j]);
    CHECK(measured_norm > 0.0);
}

TEST_CASE("masked band contents cannot influence any output") {
    ParameterStore ps;
    Rng rng(32);
    PaddingModel model(ps, rng, tiny_cfg());

    Spectrum s = smooth_curve(0.4, -0.05, 0.1);
    for (int i = 30 * kBandWidth; i < kGridSize; ++i) {  // zero bands 30-41
        s.values[static_cast<size_t>(i)] = 0.0;
        s.mask[static_cast<size_t>(i)] = 0;
    }
    WavebandTensor clean = reshape_to_wavebands(s);
    WavebandTensor garbage = clean;
    Rng junk(99);
    for (int i = 30 * kBandWidth; i < kGridSize; ++i)
        garbage.bands[static_cast<size_t>(i)] = junk.uniform(-5.0, 5.0);

    Var e1 = model.embed(bands_of(clean), mask_of(clean));
    Var e2 = model.embed(bands_of(garbage), mask_of(garbage));
    for (int64_t i = 0; i < e1.value().numel(); ++i)
        CHECK(e1.value().data()[i] == e2.value().data()[i]);

    CoarseSpectrum c1 = model.predict_coarse(clean);
    CoarseSpectrum c2 = model.predict_coarse(garbage);
    for (int i = 0; i < kCoarseSize; ++i)
        CHECK(c1.values[static_cast<size_t>(i)] == c2.values[static_cast<size_t>(i)]);
}

TEST_CASE("all-masked input is rejected") {
    ParameterStore ps;
    Rng rng(33);
    PaddingModel model(ps, rng, tiny_cfg());
    WavebandTensor wt;  // nothing measured
    CHECK_THROWS_AS(model.predict_coarse(wt), precondition_error);
}

TEST_CASE("untrained model produces a finite clamped coarse spectrum") {
    ParameterStore ps;
    Rng rng(34);
    PaddingModel model(ps, rng, tiny_cfg());
    WavebandTensor wt = reshape_to_wavebands(smooth_curve(0.35, 0.2, 0.05));
    CoarseSpectrum c = model.predict_coarse(wt);
    REQUIRE(c.values.size() == kCoarseSize);
    for (double v : c.values) {
        CHECK(std::isfinite(v));
        CHECK(v >= 0.0);
        CHECK(v <= 1.5);
    }
    CoarseSpectrum again = model.predict_coarse(wt);
    for (int i = 0; i < kCoarseSize; ++i)
        CHECK(c.values[static_cast<size_t>(i)] == again.values[static_cast<size_t>(i)]);
}

TEST_CASE("pad_spectrum keeps measured values bit-exact and fills the rest") {
    ParameterStore ps;
    Rng rng(35);
    PaddingModel model(ps, rng, tiny_cfg());

    Spectrum full = smooth_curve(0.3, 0.15, 0.12);
    Spectrum same = model.pad_spectrum(full);
    for (int i = 0; i < kGridSize; ++i) {
        CHECK(same.values[static_cast<size_t>(i)] == full.values[static_cast<size_t>(i)]);
        CHECK(same.mask[static_cast<size_t>(i)] == 1);
    }

    Spectrum part = full;
    for (int i = 0; i < 700; ++i) {  // drop 400-1099 nm (bands 0-13)
        part.values[static_cast<size_t>(i)] = 0.0;
        part.mask[static_cast<size_t>(i)] = 0;
    }
    Spectrum padded = model.pad_spectrum(part);
    padded.validate();
    CHECK(padded.fully_measured());
    for (int i = 700; i < kGridSize; ++i)
        CHECK(padded.values[static_cast<size_t>(i)] == part.values[static_cast<size_t>(i)]);
    for (int i = 0; i < kGridSize; ++i) CHECK(std::isfinite(padded.values[static_cast<size_t>(i)]));

    // suffix truncation: only 2350-2499 changes
    Spectrum tail = full;
    for (int i = 2350 - kGridStart; i < kGridSize; ++i) {
        tail.values[static_cast<size_t>(i)] = 0.0;
        tail.mask[static_cast<size_t>(i)] = 0;
    }
    Spectrum tp = model.pad_spectrum(tail);
    for (int i = 0; i < 2350 - kGridStart; ++i)
        CHECK(tp.values[static_cast<size_t>(i)] == full.values[static_cast<size_t>(i)]);
}

TEST_CASE("truncation draw respects its bounds") {
    Rng rng(36);
    bool saw_prefix = false, saw_suffix = false, saw_redraw_zone = false;
    for (int i = 0; i < 20000; ++i) {
        auto [p, q] = draw_truncation(rng);
        CHECK(p >= 0);
        CHECK(p <= 20);
        CHECK(q >= 0);
        CHECK(q <= 20);
        CHECK(kBandCount - p - q >= 8);
        saw_prefix = saw_prefix || (p > 0 && q == 0);
        saw_suffix = saw_suffix || (q > 0 && p == 0);
        saw_redraw_zone = saw_redraw_zone || (p + q > 30);
    }
    CHECK(saw_prefix);
    CHECK(saw_suffix);
    CHECK(saw_redraw_zone);
}

TEST_CASE("padding forward gradients match finite differences") {
    ParameterStore ps;
    Rng rng(37);
    PaddingConfig cfg;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.self_layers = 1;
    cfg.ffn_hidden = 12;
    cfg.conv_width = 3;
    PaddingModel model(ps, rng, cfg);

    Spectrum s = smooth_curve(0.35, 0.1, 0.06);
    for (int i = 0; i < 10 * kBandWidth; ++i) {
        s.values[static_cast<size_t>(i)] = 0.0;
        s.mask[static_cast<size_t>(i)] = 0;
    }
    WavebandTensor wt = reshape_to_wavebands(s);
    Tensor target = Tensor::full({1, static_cast<int64_t>(kCoarseSize)}, 0.3);
    auto loss = [&] {
        return nn::mse(model.forward(bands_of(wt), mask_of(wt)), Var::constant(target));
    };
    sgtest::check_param_grads(ps, loss);
}

TEST_CASE("short training run reduces loss deterministically") {
    std::vector<Spectrum> corpus;
    Rng gen(38);
    for (int i = 0; i < 24; ++i)
        corpus.push_back(smooth_curve(gen.uniform(0.2, 0.5), gen.uniform(-0.05, 0.2),
                                      gen.uniform(0.0, 0.15)));

    PaddingTrainConfig tc;
    tc.epochs = 4;
    tc.batch = 8;
    tc.lr = 2e-3;
    tc.seed = 7;
    tc.log_every = 0;

    auto run = [&](const std::filesystem::path& out) {
        ParameterStore ps;
        Rng rng(39);
        PaddingModel model(ps, rng, tiny_cfg());
        TrainLog log = train_padding(model, ps, corpus, tc);
        nn::save_checkpoint(out, ps, {{"kind", "pad"}});
        return log;
    };
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "soilgen-padtrain";
    fs::create_directories(dir);
    TrainLog l1 = run(dir / "a.ckpt");
    TrainLog l2 = run(dir / "b.ckpt");

    REQUIRE(l1.epoch_loss.size() == 4);
    CHECK(l1.epoch_loss.back() < l1.epoch_loss.front());
    CHECK(l1.epoch_loss == l2.epoch_loss);

    std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
    std::string ba{std::istreambuf_iterator<char>(fa), std::istreambuf_iterator<char>()};
    std::string bb{std::istreambuf_iterator<char>(fb), std::istreambuf_iterator<char>()};
    CHECK(ba == bb);
    fs::remove_all(dir);

    ParameterStore ps;
    Rng rng(40);
    PaddingModel model(ps, rng, tiny_cfg());
    CHECK_THROWS_AS(train_padding(model, ps, {}, tc), precondition_error);
}

}  // TEST_SUITE
