#pragma once

#include <string>

#include "soilgen/nn/autodiff.hpp"
#include "soilgen/nn/params.hpp"
#include "soilgen/nn/rng.hpp"

namespace soilgen::nn {

// Initializers. Weights use truncated normals so a bad tail draw can't blow up
// early training; biases start at zero.
void init_trunc_normal(Tensor& t, Rng& rng, double std);
void init_kaiming_conv(Tensor& t, Rng& rng, int64_t fan_in);

// y = x W + b for x flattened to rows of size `in`. Keeps the leading shape.
class Dense {
public:
    Dense(ParameterStore& ps, Rng& rng, const std::string& name, int64_t in, int64_t out,
          double w_std = 0.02);
    Var forward(Var x) const;
    int64_t in_dim() const { return in_; }
    int64_t out_dim() const { return out_; }

private:
    Parameter* w_;
    Parameter* b_;
    int64_t in_, out_;
};

class Conv1dLayer {
public:
    Conv1dLayer(ParameterStore& ps, Rng& rng, const std::string& name, int64_t in_ch,
                int64_t out_ch, int64_t kernel, int stride, int padding);
    Var forward(Var x) const;  // [B,Cin,L] -> [B,Cout,Lout]
    int64_t out_len(int64_t in_len) const { return conv1d_out_len(in_len, kernel_, stride_, padding_); }

private:
    Parameter* w_;
    Parameter* b_;
    int64_t kernel_;
    int stride_, padding_;
};

class ConvT1dLayer {
public:
    ConvT1dLayer(ParameterStore& ps, Rng& rng, const std::string& name, int64_t in_ch,
                 int64_t out_ch, int64_t kernel, int stride, int padding);
    Var forward(Var x, int64_t out_len) const;  // [B,Cin,L] -> [B,Cout,out_len]

private:
    Parameter* w_;
    Parameter* b_;
    int64_t kernel_;
    int stride_, padding_;
};

class LayerNormLayer {
public:
    LayerNormLayer(ParameterStore& ps, const std::string& name, int64_t dim);
    Var forward(Var x) const;

private:
    Parameter* gamma_;
    Parameter* beta_;
};

// Standard multi-head attention. `key_mask` is [B,Tk] with 1 = real key,
// 0 = padding; pass an empty tensor for no masking. Query rows whose keys are
// all masked come out exactly zero.
class MultiheadAttention {
public:
    MultiheadAttention(ParameterStore& ps, Rng& rng, const std::string& name, int64_t dim,
                       int heads);
    Var forward(Var query, Var keyval, const Tensor& key_mask) const;
    int heads() const { return heads_; }

private:
    Dense wq_, wk_, wv_, wo_;
    int64_t dim_;
    int heads_;
};

// Pre-LN transformer block: self-attention, optional cross-attention, then a
// gelu MLP, each with a residual connection.
class TransformerLayer {
public:
    TransformerLayer(ParameterStore& ps, Rng& rng, const std::string& name, int64_t dim,
                     int heads, int64_t ffn_hidden, bool with_cross);
    // self_mask: [B,T] key mask for self-attention (empty = none).
    // context/context_mask used only when built with_cross.
    Var forward(Var x, const Tensor& self_mask, Var context, const Tensor& context_mask) const;
    Var forward(Var x, const Tensor& self_mask) const;

private:
    LayerNormLayer ln1_;
    MultiheadAttention self_attn_;
    bool with_cross_;
    std::unique_ptr<LayerNormLayer> ln_cross_;
    std::unique_ptr<MultiheadAttention> cross_attn_;
    LayerNormLayer ln2_;
    Dense ffn1_, ffn2_;
};

// Fixed sin/cos table: row i encodes positions[i] in `dim` channels.
Tensor sinusoidal_embedding(const std::vector<double>& positions, int64_t dim);

}  // namespace soilgen::nn
