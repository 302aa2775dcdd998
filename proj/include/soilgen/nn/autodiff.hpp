#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "soilgen/nn/params.hpp"
#include "soilgen/nn/tensor.hpp"

namespace soilgen::nn {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the recorded forward graph. Gradient buffers are allocated
/// lazily during backward(); parameter-bound nodes flush into Parameter::grad.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool consumed = false;
    Parameter* param = nullptr;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backprop;

    Tensor& grad_buf();  // allocates zeros on first touch
};

/// Handle to a graph node. Ops below build the graph; backward() runs
/// reverse-mode accumulation from a scalar root and then retires the graph,
/// so a second backward() without a fresh forward pass is an error.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : node_(std::move(n)) {}

    static Var constant(Tensor v);
    static Var leaf(Tensor v, bool requires_grad = true);
    static Var param(Parameter& p);

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    const std::vector<int64_t>& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_->requires_grad; }
    const Tensor& grad() const;
    NodePtr node() const { return node_; }

    void backward();

private:
    NodePtr node_;
};

/// Disables graph recording in scope (inference/sampling loops): ops compute
/// values only, so no closures or saved activations accumulate.
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};
bool grad_enabled();

// ---- elementwise ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var relu(Var x);
Var gelu(Var x);

// ---- linear algebra ----
Var matmul(Var a, Var b);                       // [M,K]x[K,N] -> [M,N]
Var add_rows(Var x, Var b);                     // broadcast b over trailing dim
Var add_channel_bias(Var x, Var b);             // x [B,C,L] + b [B,C] over length
Var reshape(Var x, std::vector<int64_t> shape);
Var transpose_12(Var x);                        // [B,A,C] -> [B,C,A]
Var concat_dim1(Var a, Var b);                  // [B,C1,L],[B,C2,L] -> [B,C1+C2,L]

// ---- normalization / activation over last dim ----
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var softmax_lastdim(Var x);

// ---- attention ----
// q [B,Tq,D], k [B,Tk,D], v [B,Tk,Dv]; mask entries: 1 = attend, 0 = blocked.
// mask shape [B,Tq,Tk] or [1,Tq,Tk] (shared). Fully blocked query rows yield
// exact zeros.
Var masked_attention(Var q, Var k, Var v, const Tensor& mask);
Var split_heads(Var x, int heads);              // [B,T,H*Dh] -> [B*H,T,Dh]
Var merge_heads(Var x, int heads);              // [B*H,T,Dh] -> [B,T,H*Dh]

// ---- embedding / gather ----
Var embedding(Var table, const std::vector<int64_t>& ids);   // [V,D],ids[N] -> [N,D]
// idx entries index rows of x; -1 yields a zero row.
Var gather_rows(Var x, const std::vector<int64_t>& idx);
Var row_scale(Var x, const Tensor& s);          // rows of x scaled by constant s[N]
Var outer_const(const Tensor& s, Var w);        // s[N] outer w[D] -> [N,D]

// ---- convolution ([B,C,L] layout) ----
Var conv1d(Var x, Var w, Var b, int stride, int padding);
// out_len must satisfy the transposed-conv arithmetic for (stride, padding).
Var conv1d_transpose(Var x, Var w, Var b, int stride, int padding, int64_t out_len);

int64_t conv1d_out_len(int64_t in_len, int64_t kernel, int stride, int padding);
int64_t conv1d_transpose_min_len(int64_t in_len, int64_t kernel, int stride, int padding);

// ---- reductions ----
Var sum_all(Var x);
Var mean_all(Var x);
Var mse(Var a, Var b);
// pred/target [B,N], weights w[B] constant: (1/B) sum_b w_b * mean_i (d_bi)^2
Var weighted_mse(Var pred, Var target, const Tensor& w);
// x [B,T,D], mask [B,T] constant: per-sample mean of unmasked rows -> [B,D]
Var masked_mean_rows(Var x, const Tensor& mask);

}  // namespace soilgen::nn
