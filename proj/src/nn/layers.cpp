#include "soilgen/nn/layers.hpp"

#include <cmath>

namespace soilgen::nn {

void init_trunc_normal(Tensor& t, Rng& rng, double std) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.truncated_normal(std);
}

void init_kaiming_conv(Tensor& t, Rng& rng, int64_t fan_in) {
    double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.truncated_normal(std);
}

Dense::Dense(ParameterStore& ps, Rng& rng, const std::string& name, int64_t in, int64_t out,
             double w_std)
    : in_(in), out_(out) {
    w_ = &ps.create(name + ".w", {in, out});
    b_ = &ps.create(name + ".b", {out});
    init_trunc_normal(w_->value, rng, w_std);
}

Var Dense::forward(Var x) const {
    auto shape = x.shape();
    SG_CHECK(!shape.empty() && shape.back() == in_, shape_error, "Dense: trailing dim of ",
             shape_str(shape), " must be ", in_);
    int64_t rows = x.value().numel() / in_;
    Var flat = reshape(x, {rows, in_});
    Var y = add_rows(matmul(flat, Var::param(*w_)), Var::param(*b_));
    shape.back() = out_;
    return reshape(y, shape);
}

Conv1dLayer::Conv1dLayer(ParameterStore& ps, Rng& rng, const std::string& name, int64_t in_ch,
                         int64_t out_ch, int64_t kernel, int stride, int padding)
    : kernel_(kernel), stride_(stride), padding_(padding) {
    w_ = &ps.create(name + ".w", {out_ch, in_ch, kernel});
    b_ = &ps.create(name + ".b", {out_ch});
    init_kaiming_conv(w_->value, rng, in_ch * kernel);
}

Var Conv1dLayer::forward(Var x) const {
    return conv1d(x, Var::param(*w_), Var::param(*b_), stride_, padding_);
}

ConvT1dLayer::ConvT1dLayer(ParameterStore& ps, Rng& rng, const std::string& name, int64_t in_ch,
                           int64_t out_ch, int64_t kernel, int stride, int padding)
    : kernel_(kernel), stride_(stride), padding_(padding) {
    w_ = &ps.create(name + ".w", {in_ch, out_ch, kernel});
    b_ = &ps.create(name + ".b", {out_ch});
    init_kaiming_conv(w_->value, rng, in_ch * kernel);
}

Var ConvT1dLayer::forward(Var x, int64_t out_len) const {
    return conv1d_transpose(x, Var::param(*w_), Var::param(*b_), stride_, padding_, out_len);
}

LayerNormLayer::LayerNormLayer(ParameterStore& ps, const std::string& name, int64_t dim) {
    gamma_ = &ps.create(name + ".gamma", {dim});
    beta_ = &ps.create(name + ".beta", {dim});
    gamma_->value.fill(1.0);
}

Var LayerNormLayer::forward(Var x) const {
    return layer_norm(x, Var::param(*gamma_), Var::param(*beta_));
}

MultiheadAttention::MultiheadAttention(ParameterStore& ps, Rng& rng, const std::string& name,
                                       int64_t dim, int heads)
    : wq_(ps, rng, name + ".q", dim, dim),
      wk_(ps, rng, name + ".k", dim, dim),
      wv_(ps, rng, name + ".v", dim, dim),
      wo_(ps, rng, name + ".o", dim, dim),
      dim_(dim),
      heads_(heads) {
    SG_CHECK(dim % heads == 0, value_error, "attention dim ", dim, " not divisible by ", heads,
             " heads");
}

Var MultiheadAttention::forward(Var query, Var keyval, const Tensor& key_mask) const {
    SG_CHECK(query.value().rank() == 3 && keyval.value().rank() == 3, shape_error,
             "attention expects [B,T,D] inputs");
    int64_t B = query.value().dim(0), Tq = query.value().dim(1);
    int64_t Tk = keyval.value().dim(1);
    SG_CHECK(keyval.value().dim(0) == B, shape_error, "attention: batch mismatch");

    Var q = split_heads(wq_.forward(query), heads_);
    Var k = split_heads(wk_.forward(keyval), heads_);
    Var v = split_heads(wv_.forward(keyval), heads_);

    Tensor mask;
    if (key_mask.empty()) {
        mask = Tensor::full({1, Tq, Tk}, 1.0);
    } else {
        SG_CHECK(key_mask.rank() == 2 && key_mask.dim(0) == B && key_mask.dim(1) == Tk,
                 shape_error, "attention: key mask must be [B,Tk], got ",
                 shape_str(key_mask.shape()));
        mask = Tensor({B * heads_, Tq, Tk});
        for (int64_t b = 0; b < B; ++b)
            for (int h = 0; h < heads_; ++h)
                for (int64_t i = 0; i < Tq; ++i)
                    for (int64_t j = 0; j < Tk; ++j)
                        mask[((b * heads_ + h) * Tq + i) * Tk + j] = key_mask[b * Tk + j];
    }
    Var ctx = merge_heads(masked_attention(q, k, v, mask), heads_);
    return wo_.forward(ctx);
}

TransformerLayer::TransformerLayer(ParameterStore& ps, Rng& rng, const std::string& name,
                                   int64_t dim, int heads, int64_t ffn_hidden, bool with_cross)
    : ln1_(ps, name + ".ln1", dim),
      self_attn_(ps, rng, name + ".self", dim, heads),
      with_cross_(with_cross),
      ln2_(ps, name + ".ln2", dim),
      ffn1_(ps, rng, name + ".ffn1", dim, ffn_hidden),
      ffn2_(ps, rng, name + ".ffn2", ffn_hidden, dim) {
    if (with_cross) {
        ln_cross_ = std::make_unique<LayerNormLayer>(ps, name + ".lnc", dim);
        cross_attn_ = std::make_unique<MultiheadAttention>(ps, rng, name + ".cross", dim, heads);
    }
}

Var TransformerLayer::forward(Var x, const Tensor& self_mask, Var context,
                              const Tensor& context_mask) const {
    Var h = ln1_.forward(x);
    x = add(x, self_attn_.forward(h, h, self_mask));
    if (with_cross_) {
        x = add(x, cross_attn_->forward(ln_cross_->forward(x), context, context_mask));
    }
    Var f = ffn2_.forward(gelu(ffn1_.forward(ln2_.forward(x))));
    return add(x, f);
}

Var TransformerLayer::forward(Var x, const Tensor& self_mask) const {
    SG_CHECK(!with_cross_, precondition_error,
             "cross-attention layer called without a context");
    return forward(x, self_mask, Var(), Tensor());
}

Tensor sinusoidal_embedding(const std::vector<double>& positions, int64_t dim) {
    SG_CHECK(dim >= 2 && dim % 2 == 0, value_error, "sinusoidal dim must be even, got ", dim);
    int64_t n = static_cast<int64_t>(positions.size());
    int64_t half = dim / 2;
    Tensor out({n, dim});
    for (int64_t i = 0; i < n; ++i) {
        double p = positions[static_cast<size_t>(i)];
        for (int64_t j = 0; j < half; ++j) {
            double freq = std::pow(10000.0, -static_cast<double>(j) / static_cast<double>(half));
            out[i * dim + 2 * j] = std::sin(p * freq);
            out[i * dim + 2 * j + 1] = std::cos(p * freq);
        }
    }
    return out;
}

}  // namespace soilgen::nn
