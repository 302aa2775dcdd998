#include <doctest.h>

#include <cmath>

#include "soilgen/nn/autodiff.hpp"
#include "soilgen/nn/layers.hpp"
#include "soilgen/nn/optim.hpp"
#include "soilgen/nn/rng.hpp"
#include "soilgen/nn/tensor.hpp"

using namespace soilgen;
using namespace soilgen::nn;

TEST_SUITE("algebra") {

TEST_CASE("tensor shape and reshape") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.rank() == 2);
    for (int64_t i = 0; i < 6; ++i) t[i] = static_cast<double>(i);
    Tensor r = t.reshaped({3, 2});
    CHECK(r.dim(0) == 3);
    CHECK(r[5] == 5.0);
    CHECK_THROWS_AS((void)t.reshaped({4, 2}), shape_error);
    CHECK_THROWS_AS((void)Tensor({2, 2}, {1.0, 2.0}), shape_error);
    CHECK(t.sum() == doctest::Approx(15.0));
    CHECK(t.mean() == doctest::Approx(2.5));
    t.clamp_(1.0, 4.0);
    CHECK(t.min() == 1.0);
    CHECK(t.max() == 4.0);
}

TEST_CASE("rng reproducibility and stream independence") {
    Rng a(1234), b(1234);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u32() == b.next_u32());

    Rng c(1234), d(4321);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += (c.next_u32() == d.next_u32());
    CHECK(same <= 1);

    Rng root(77);
    Rng s1 = root.split(0), s1b = root.split(0), s2 = root.split(1);
    int eq12 = 0;
    for (int i = 0; i < 64; ++i) {
        uint32_t va = s1.next_u32();
        CHECK(va == s1b.next_u32());
        eq12 += (s2.next_u32() == va);
    }
    CHECK(eq12 <= 1);
}

TEST_CASE("rng uniform range and integer bounds") {
    Rng r(9);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);

    bool saw_lo = false, saw_hi = false;
    for (int i = 0; i < 2000; ++i) {
        int64_t v = r.uniform_int(-3, 3);
        CHECK(v >= -3);
        CHECK(v <= 3);
        saw_lo = saw_lo || v == -3;
        saw_hi = saw_hi || v == 3;
    }
    CHECK(saw_lo);
    CHECK(saw_hi);
    CHECK(r.uniform_int(5, 5) == 5);
}

TEST_CASE("rng normal moments") {
    Rng r(2024);
    const int n = 40000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double z = r.normal();
        s += z;
        s2 += z * z;
    }
    double mean = s / n;
    double var = s2 / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);

    for (int i = 0; i < 1000; ++i) CHECK(std::abs(r.truncated_normal(1.0)) <= 2.0);
}

TEST_CASE("conv length arithmetic") {
    CHECK(conv1d_out_len(2100, 4, 4, 0) == 525);
    CHECK(conv1d_out_len(525, 5, 4, 0) == 131);
    CHECK(conv1d_out_len(131, 4, 4, 0) == 32);
    CHECK(conv1d_transpose_min_len(32, 7, 4, 0) == 131);
    CHECK(conv1d_transpose_min_len(131, 5, 4, 0) == 525);
    CHECK(conv1d_transpose_min_len(525, 4, 4, 0) == 2100);
    CHECK(conv1d_out_len(42, 5, 2, 2) == 21);
    CHECK(conv1d_out_len(21, 5, 2, 2) == 11);
    CHECK(conv1d_out_len(11, 5, 2, 2) == 6);
    CHECK(conv1d_out_len(6, 5, 2, 2) == 3);
}

TEST_CASE("matmul against a scalar loop") {
    Rng r(5);
    Tensor a({3, 4}), b({4, 2});
    r.fill_normal(a);
    r.fill_normal(b);
    Var y = matmul(Var::constant(a), Var::constant(b));
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 2; ++j) {
            double want = 0.0;
            for (int64_t k = 0; k < 4; ++k) want += a[i * 4 + k] * b[k * 2 + j];
            CHECK(y.value()[i * 2 + j] == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("conv1d against a scalar loop") {
    Rng r(6);
    const int64_t B = 2, Cin = 3, L = 11, Cout = 2, K = 5;
    const int stride = 2, pad = 2;
    Tensor x({B, Cin, L}), w({Cout, Cin, K}), bias({Cout});
    r.fill_normal(x);
    r.fill_normal(w);
    r.fill_normal(bias);
    Var y = conv1d(Var::constant(x), Var::constant(w), Var::constant(bias), stride, pad);
    int64_t Lout = conv1d_out_len(L, K, stride, pad);
    REQUIRE(y.value().shape() == std::vector<int64_t>{B, Cout, Lout});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < Cout; ++co)
            for (int64_t t = 0; t < Lout; ++t) {
                double want = bias[co];
                for (int64_t ci = 0; ci < Cin; ++ci)
                    for (int64_t k = 0; k < K; ++k) {
                        int64_t src = t * stride + k - pad;
                        if (src >= 0 && src < L)
                            want += x[(b * Cin + ci) * L + src] * w[(co * Cin + ci) * K + k];
                    }
                CHECK(y.value()[(b * Cout + co) * Lout + t] ==
                      doctest::Approx(want).epsilon(1e-12));
            }
}

TEST_CASE("conv1d_transpose against a scalar loop") {
    Rng r(7);
    const int64_t B = 2, Cin = 3, L = 6, Cout = 2, K = 5;
    const int stride = 3, pad = 1;
    int64_t out_len = conv1d_transpose_min_len(L, K, stride, pad);
    Tensor x({B, Cin, L}), w({Cin, Cout, K}), bias({Cout});
    r.fill_normal(x);
    r.fill_normal(w);
    r.fill_normal(bias);
    Var y = conv1d_transpose(Var::constant(x), Var::constant(w), Var::constant(bias), stride, pad,
                             out_len);
    REQUIRE(y.value().shape() == std::vector<int64_t>{B, Cout, out_len});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < Cout; ++co)
            for (int64_t t = 0; t < out_len; ++t) {
                double want = bias[co];
                for (int64_t ci = 0; ci < Cin; ++ci)
                    for (int64_t l = 0; l < L; ++l)
                        for (int64_t k = 0; k < K; ++k)
                            if (l * stride + k - pad == t)
                                want += x[(b * Cin + ci) * L + l] * w[(ci * Cout + co) * K + k];
                CHECK(y.value()[(b * Cout + co) * out_len + t] ==
                      doctest::Approx(want).epsilon(1e-12));
            }
}

TEST_CASE("conv1d and conv1d_transpose are adjoint") {
    // <conv(x), y> == <x, conv_T(y)> when both use the same kernel and no bias.
    Rng r(8);
    const int64_t B = 1, Cin = 2, L = 12, Cout = 3, K = 4;
    const int stride = 4, pad = 0;
    int64_t Lout = conv1d_out_len(L, K, stride, pad);
    Tensor x({B, Cin, L}), w({Cout, Cin, K}), y({B, Cout, Lout});
    r.fill_normal(x);
    r.fill_normal(w);
    r.fill_normal(y);
    Tensor zero_out = Tensor::zeros({Cout});
    Tensor zero_in = Tensor::zeros({Cin});
    Var cx = conv1d(Var::constant(x), Var::constant(w), Var::constant(zero_out), stride, pad);
    double lhs = 0.0;
    for (int64_t i = 0; i < cx.value().numel(); ++i) lhs += cx.value()[i] * y[i];
    // same flat weight block read as [Cin_T=Cout, Cout_T=Cin, K] is the adjoint kernel
    Var ct = conv1d_transpose(Var::constant(y), Var::constant(w.reshaped({Cout, Cin, K})),
                              Var::constant(zero_in), stride, pad, L);
    double rhs = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) rhs += x[i] * ct.value()[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("masked attention blocks padded keys exactly") {
    Rng r(10);
    const int64_t B = 2, Tq = 4, Tk = 5, D = 6;
    Tensor q({B, Tq, D}), k({B, Tk, D}), v({B, Tk, D});
    r.fill_normal(q);
    r.fill_normal(k);
    r.fill_normal(v);

    // mask the trailing two keys of sample 0
    Tensor mask = Tensor::full({B, Tq, Tk}, 1.0);
    for (int64_t i = 0; i < Tq; ++i)
        for (int64_t j = 3; j < Tk; ++j) mask[(0 * Tq + i) * Tk + j] = 0.0;

    Var out = masked_attention(Var::constant(q), Var::constant(k), Var::constant(v), mask);

    // changing masked key/value rows must not change the output at all
    Tensor k2 = k, v2 = v;
    for (int64_t j = 3; j < Tk; ++j)
        for (int64_t d = 0; d < D; ++d) {
            k2[(0 * Tk + j) * D + d] = 99.0;
            v2[(0 * Tk + j) * D + d] = -42.0;
        }
    Var out2 = masked_attention(Var::constant(q), Var::constant(k2), Var::constant(v2), mask);
    for (int64_t i = 0; i < out.value().numel(); ++i)
        CHECK(std::abs(out.value()[i] - out2.value()[i]) == 0.0);

    // fully blocked query rows are exact zeros
    Tensor mask_empty = Tensor::full({1, Tq, Tk}, 1.0);
    for (int64_t j = 0; j < Tk; ++j) mask_empty[(0 * Tk) + j] = 0.0;  // row 0 of [Tq,Tk]
    Var out3 = masked_attention(Var::constant(q), Var::constant(k), Var::constant(v), mask_empty);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t d = 0; d < D; ++d) CHECK(out3.value()[(b * Tq + 0) * D + d] == 0.0);
}

TEST_CASE("softmax rows sum to one") {
    Rng r(11);
    Tensor x({3, 7});
    r.fill_normal(x, 0.0, 3.0);
    Var y = softmax_lastdim(Var::constant(x));
    for (int64_t i = 0; i < 3; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < 7; ++j) {
            double v = y.value()[i * 7 + j];
            CHECK(v >= 0.0);
            s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("adam minimizes a quadratic") {
    ParameterStore ps;
    Parameter& p = ps.create("x", {4});
    p.value = Tensor({4}, {3.0, -2.0, 1.5, 0.5});
    Tensor target({4}, {1.0, 1.0, -1.0, 0.0});
    Adam opt(ps, 0.05);
    for (int it = 0; it < 600; ++it) {
        ps.zero_grad();
        Var loss = mse(Var::param(p), Var::constant(target));
        loss.backward();
        opt.step();
    }
    CHECK(ps.step_count == 600);
    for (int64_t i = 0; i < 4; ++i) CHECK(p.value[i] == doctest::Approx(target[i]).epsilon(1e-3));
}

TEST_CASE("double backward without re-forward throws") {
    ParameterStore ps;
    Parameter& p = ps.create("x", {3});
    p.value.fill(2.0);
    Var loss = sum_all(Var::param(p));
    loss.backward();
    CHECK_THROWS_AS(loss.backward(), soilgen::error);
}

TEST_CASE("backward requires a scalar root") {
    ParameterStore ps;
    Parameter& p = ps.create("x", {3});
    Var y = scale(Var::param(p), 2.0);
    CHECK_THROWS_AS(y.backward(), shape_error);
}

TEST_CASE("sinusoidal embedding is bounded and distinct") {
    Tensor e = sinusoidal_embedding({0.0, 1.0, 2.0, 50.0}, 16);
    REQUIRE(e.shape() == std::vector<int64_t>{4, 16});
    CHECK(e.min() >= -1.0);
    CHECK(e.max() <= 1.0);
    double diff = 0.0;
    for (int64_t d = 0; d < 16; ++d) diff += std::abs(e[1 * 16 + d] - e[2 * 16 + d]);
    CHECK(diff > 0.1);
}

}  // TEST_SUITE
