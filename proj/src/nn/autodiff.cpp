#include "soilgen/nn/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <unordered_set>

namespace soilgen::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;

namespace {

thread_local bool g_grad_enabled = true;

NodePtr make_node(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool rg = false;
    if (g_grad_enabled)
        for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backprop = std::move(fn);
    }
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    SG_CHECK(a.value().same_shape(b.value()), shape_error, op, ": shape mismatch ",
             shape_str(a.shape()), " vs ", shape_str(b.shape()));
}

}  // namespace

Tensor& Node::grad_buf() {
    if (grad.empty() && value.numel() > 0) grad = Tensor::zeros(value.shape());
    return grad;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

Var Var::constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = false;
    return Var(n);
}

Var Var::leaf(Tensor v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return Var(n);
}

Var Var::param(Parameter& p) {
    auto n = std::make_shared<Node>();
    n->value = p.value;
    n->requires_grad = true;
    n->param = &p;
    return Var(n);
}

const Tensor& Var::grad() const {
    SG_CHECK(!node_->grad.empty(), value_error, "gradient not populated; call backward() first");
    return node_->grad;
}

void Var::backward() {
    Node* root = node_.get();
    SG_CHECK(root != nullptr, value_error, "backward() on empty Var");
    SG_CHECK(root->value.numel() == 1, shape_error, "backward() requires a scalar root, got ",
             shape_str(root->value.shape()));
    SG_CHECK(!root->consumed, error,
             "graph already consumed by a previous backward(); rerun the forward pass");

    // Iterative DFS topological order.
    std::vector<Node*> topo;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* parent = node->parents[idx].get();
            ++idx;
            if (parent->requires_grad && seen.insert(parent).second)
                stack.emplace_back(parent, 0);
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    root->grad_buf().fill(1.0);
    // topo is post-order: parents precede children, so walk it backwards.
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
    for (Node* n : topo) {
        if (n->param && !n->grad.empty()) n->param->grad.add_(n->grad);
        n->consumed = true;
        n->backprop = nullptr;
    }
}

// ---------------------------------------------------------------- elementwise

Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Tensor out = a.value();
    out.add_(b.value());
    auto pa = a.node(), pb = b.node();
    return Var(make_node(std::move(out), {pa, pb}, [pa, pb](Node& self) {
        if (pa->requires_grad) pa->grad_buf().add_(self.grad);
        if (pb->requires_grad) pb->grad_buf().add_(self.grad);
    }));
}

Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
    auto pa = a.node(), pb = b.node();
    return Var(make_node(std::move(out), {pa, pb}, [pa, pb](Node& self) {
        if (pa->requires_grad) pa->grad_buf().add_(self.grad);
        if (pb->requires_grad) {
            Tensor& g = pb->grad_buf();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
        }
    }));
}

Var mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
    auto pa = a.node(), pb = b.node();
    return Var(make_node(std::move(out), {pa, pb}, [pa, pb](Node& self) {
        if (pa->requires_grad) {
            Tensor& g = pa->grad_buf();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
            Tensor& g = pb->grad_buf();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pa->value[i];
        }
    }));
}

Var scale(Var a, double s) {
    Tensor out = a.value();
    out.scale_(s);
    auto pa = a.node();
    return Var(make_node(std::move(out), {pa}, [pa, s](Node& self) {
        Tensor& g = pa->grad_buf();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += s * self.grad[i];
    }));
}

Var add_scalar(Var a, double s) {
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += s;
    auto pa = a.node();
    return Var(make_node(std::move(out), {pa}, [pa](Node& self) {
        pa->grad_buf().add_(self.grad);
    }));
}

Var relu(Var x) {
    Tensor out = x.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::max(0.0, out[i]);
    auto px = x.node();
    return Var(make_node(std::move(out), {px}, [px](Node& self) {
        Tensor& g = px->grad_buf();
        for (int64_t i = 0; i < g.numel(); ++i)
            if (px->value[i] > 0.0) g[i] += self.grad[i];
    }));
}

Var gelu(Var x) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    Tensor out = x.value();
    for (int64_t i = 0; i < out.numel(); ++i) {
        double v = out[i];
        out[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
    }
    auto px = x.node();
    return Var(make_node(std::move(out), {px}, [px](Node& self) {
        Tensor& g = px->grad_buf();
        for (int64_t i = 0; i < g.numel(); ++i) {
            double v = px->value[i];
            double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
            g[i] += self.grad[i] * (cdf + v * pdf);
        }
    }));
}

// ------------------------------------------------------------- linear algebra

Var matmul(Var a, Var b) {
    SG_CHECK(a.value().rank() == 2 && b.value().rank() == 2, shape_error,
             "matmul expects rank-2 tensors");
    int64_t M = a.value().dim(0), K = a.value().dim(1);
    SG_CHECK(b.value().dim(0) == K, shape_error, "matmul: inner dims ", K, " vs ",
             b.value().dim(0));
    int64_t N = b.value().dim(1);
    Tensor out({M, N});
    Map(out.data(), M, N).noalias() =
        CMap(a.value().data(), M, K) * CMap(b.value().data(), K, N);
    auto pa = a.node(), pb = b.node();
    return Var(make_node(std::move(out), {pa, pb}, [pa, pb, M, K, N](Node& self) {
        CMap dout(self.grad.data(), M, N);
        if (pa->requires_grad)
            Map(pa->grad_buf().data(), M, K).noalias() +=
                dout * CMap(pb->value.data(), K, N).transpose();
        if (pb->requires_grad)
            Map(pb->grad_buf().data(), K, N).noalias() +=
                CMap(pa->value.data(), M, K).transpose() * dout;
    }));
}

Var add_rows(Var x, Var b) {
    SG_CHECK(b.value().rank() == 1, shape_error, "add_rows: bias must be rank 1");
    int64_t D = b.value().dim(0);
    SG_CHECK(x.value().numel() % D == 0 && x.value().shape().back() == D, shape_error,
             "add_rows: trailing dim of ", shape_str(x.shape()), " must be ", D);
    int64_t rows = x.value().numel() / D;
    Tensor out = x.value();
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t d = 0; d < D; ++d) out[r * D + d] += b.value()[d];
    auto px = x.node(), pbias = b.node();
    return Var(make_node(std::move(out), {px, pbias}, [px, pbias, rows, D](Node& self) {
        if (px->requires_grad) px->grad_buf().add_(self.grad);
        if (pbias->requires_grad) {
            Tensor& g = pbias->grad_buf();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t d = 0; d < D; ++d) g[d] += self.grad[r * D + d];
        }
    }));
}

Var add_channel_bias(Var x, Var b) {
    SG_CHECK(x.value().rank() == 3 && b.value().rank() == 2, shape_error,
             "add_channel_bias expects x [B,C,L], b [B,C]");
    int64_t B = x.value().dim(0), C = x.value().dim(1), L = x.value().dim(2);
    SG_CHECK(b.value().dim(0) == B && b.value().dim(1) == C, shape_error,
             "add_channel_bias: bias ", shape_str(b.shape()), " does not match x ",
             shape_str(x.shape()));
    Tensor out = x.value();
    for (int64_t bb = 0; bb < B; ++bb)
        for (int64_t c = 0; c < C; ++c) {
            double v = b.value()[bb * C + c];
            double* row = out.data() + (bb * C + c) * L;
            for (int64_t l = 0; l < L; ++l) row[l] += v;
        }
    auto px = x.node(), pb = b.node();
    return Var(make_node(std::move(out), {px, pb}, [px, pb, B, C, L](Node& self) {
        if (px->requires_grad) px->grad_buf().add_(self.grad);
        if (pb->requires_grad) {
            Tensor& g = pb->grad_buf();
            for (int64_t bb = 0; bb < B; ++bb)
                for (int64_t c = 0; c < C; ++c) {
                    double s = 0.0;
                    const double* row = self.grad.data() + (bb * C + c) * L;
                    for (int64_t l = 0; l < L; ++l) s += row[l];
                    g[bb * C + c] += s;
                }
        }
    }));
}

Var reshape(Var x, std::vector<int64_t> shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    auto px = x.node();
    return Var(make_node(std::move(out), {px}, [px](Node& self) {
        Tensor& g = px->grad_buf();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }));
}

Var transpose_12(Var x) {
    SG_CHECK(x.value().rank() == 3, shape_error, "transpose_12 expects rank 3");
    int64_t B = x.value().dim(0), A = x.value().dim(1), C = x.value().dim(2);
    Tensor out({B, C, A});
    const Tensor& xv = x.value();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < A; ++i)
            for (int64_t j = 0; j < C; ++j)
                out[(b * C + j) * A + i] = xv[(b * A + i) * C + j];
    auto px = x.node();
    return Var(make_node(std::move(out), {px}, [px, B, A, C](Node& self) {
        Tensor& g = px->grad_buf();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t i = 0; i < A; ++i)
                for (int64_t j = 0; j < C; ++j)
                    g[(b * A + i) * C + j] += self.grad[(b * C + j) * A + i];
    }));
}

Var concat_dim1(Var a, Var b) {
    SG_CHECK(a.value().rank() == 3 && b.value().rank() == 3, shape_error,
             "concat_dim1 expects rank 3");
    int64_t B = a.value().dim(0), C1 = a.value().dim(1), L = a.value().dim(2);
    int64_t C2 = b.value().dim(1);
    SG_CHECK(b.value().dim(0) == B && b.value().dim(2) == L, shape_error,
             "concat_dim1: incompatible shapes ", shape_str(a.shape()), " vs ",
             shape_str(b.shape()));
    Tensor out({B, C1 + C2, L});
    for (int64_t bb = 0; bb < B; ++bb) {
        std::memcpy(out.data() + bb * (C1 + C2) * L, a.value().data() + bb * C1 * L,
                    static_cast<size_t>(C1 * L) * sizeof(double));
        std::memcpy(out.data() + bb * (C1 + C2) * L + C1 * L, b.value().data() + bb * C2 * L,
                    static_cast<size_t>(C2 * L) * sizeof(double));
    }
    auto pa = a.node(), pb = b.node();
    return Var(make_node(std::move(out), {pa, pb}, [pa, pb, B, C1, C2, L](Node& self) {
        for (int64_t bb = 0; bb < B; ++bb) {
            if (pa->requires_grad) {
                Tensor& g = pa->grad_buf();
                for (int64_t i = 0; i < C1 * L; ++i)
                    g[bb * C1 * L + i] += self.grad[bb * (C1 + C2) * L + i];
            }
            if (pb->requires_grad) {
                Tensor& g = pb->grad_buf();
                for (int64_t i = 0; i < C2 * L; ++i)
                    g[bb * C2 * L + i] += self.grad[bb * (C1 + C2) * L + C1 * L + i];
            }
        }
    }));
}

// ------------------------------------------------- normalization / activation

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    int64_t D = gamma.value().numel();
    SG_CHECK(x.value().shape().back() == D && beta.value().numel() == D, shape_error,
             "layer_norm: trailing dim must be ", D);
    int64_t rows = x.value().numel() / D;
    Tensor out(x.value().shape());
    std::vector<double> mu(static_cast<size_t>(rows)), inv(static_cast<size_t>(rows));
    const Tensor& xv = x.value();
    for (int64_t r = 0; r < rows; ++r) {
        double m = 0.0;
        for (int64_t d = 0; d < D; ++d) m += xv[r * D + d];
        m /= static_cast<double>(D);
        double var = 0.0;
        for (int64_t d = 0; d < D; ++d) {
            double c = xv[r * D + d] - m;
            var += c * c;
        }
        var /= static_cast<double>(D);
        double is = 1.0 / std::sqrt(var + eps);
        mu[static_cast<size_t>(r)] = m;
        inv[static_cast<size_t>(r)] = is;
        for (int64_t d = 0; d < D; ++d)
            out[r * D + d] = (xv[r * D + d] - m) * is * gamma.value()[d] + beta.value()[d];
    }
    auto px = x.node(), pg = gamma.node(), pb = beta.node();
    return Var(make_node(
        std::move(out), {px, pg, pb},
        [px, pg, pb, rows, D, mu = std::move(mu), inv = std::move(inv)](Node& self) {
            for (int64_t r = 0; r < rows; ++r) {
                double m = mu[static_cast<size_t>(r)], is = inv[static_cast<size_t>(r)];
                double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                for (int64_t d = 0; d < D; ++d) {
                    double xh = (px->value[r * D + d] - m) * is;
                    double dxh = self.grad[r * D + d] * pg->value[d];
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xh;
                    if (pg->requires_grad) pg->grad_buf()[d] += self.grad[r * D + d] * xh;
                    if (pb->requires_grad) pb->grad_buf()[d] += self.grad[r * D + d];
                }
                if (px->requires_grad) {
                    Tensor& g = px->grad_buf();
                    double inv_d = 1.0 / static_cast<double>(D);
                    for (int64_t d = 0; d < D; ++d) {
                        double xh = (px->value[r * D + d] - m) * is;
                        double dxh = self.grad[r * D + d] * pg->value[d];
                        g[r * D + d] += is * (dxh - sum_dxh * inv_d - xh * sum_dxh_xh * inv_d);
                    }
                }
            }
        }));
}

Var softmax_lastdim(Var x) {
    int64_t D = x.value().shape().back();
    int64_t rows = x.value().numel() / D;
    Tensor out(x.value().shape());
    const Tensor& xv = x.value();
    for (int64_t r = 0; r < rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t d = 0; d < D; ++d) mx = std::max(mx, xv[r * D + d]);
        double z = 0.0;
        for (int64_t d = 0; d < D; ++d) {
            double e = std::exp(xv[r * D + d] - mx);
            out[r * D + d] = e;
            z += e;
        }
        for (int64_t d = 0; d < D; ++d) out[r * D + d] /= z;
    }
    auto px = x.node();
    Tensor saved = out;
    return Var(make_node(std::move(out), {px}, [px, rows, D, saved = std::move(saved)](Node& self) {
        Tensor& g = px->grad_buf();
        for (int64_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (int64_t d = 0; d < D; ++d) dot += self.grad[r * D + d] * saved[r * D + d];
            for (int64_t d = 0; d < D; ++d)
                g[r * D + d] += saved[r * D + d] * (self.grad[r * D + d] - dot);
        }
    }));
}

// ------------------------------------------------------------------ attention

Var masked_attention(Var q, Var k, Var v, const Tensor& mask) {
    SG_CHECK(q.value().rank() == 3 && k.value().rank() == 3 && v.value().rank() == 3, shape_error,
             "masked_attention expects rank-3 q/k/v");
    int64_t B = q.value().dim(0), Tq = q.value().dim(1), D = q.value().dim(2);
    int64_t Tk = k.value().dim(1), Dv = v.value().dim(2);
    SG_CHECK(k.value().dim(0) == B && v.value().dim(0) == B, shape_error,
             "masked_attention: batch mismatch");
    SG_CHECK(k.value().dim(2) == D, shape_error, "masked_attention: q/k depth mismatch");
    SG_CHECK(v.value().dim(1) == Tk, shape_error, "masked_attention: k/v length mismatch");
    SG_CHECK(mask.rank() == 3 && mask.dim(1) == Tq && mask.dim(2) == Tk &&
                 (mask.dim(0) == B || mask.dim(0) == 1),
             shape_error, "masked_attention: mask must be [B|1,Tq,Tk], got ",
             shape_str(mask.shape()));

    double scale_f = 1.0 / std::sqrt(static_cast<double>(D));
    Tensor attn({B, Tq, Tk});
    Tensor out({B, Tq, Dv});
    const Tensor& qv = q.value();
    const Tensor& kv = k.value();
    const Tensor& vv = v.value();
    bool shared_mask = mask.dim(0) == 1;

    for (int64_t b = 0; b < B; ++b) {
        const double* mrow = mask.data() + (shared_mask ? 0 : b * Tq * Tk);
        CMap qm(qv.data() + b * Tq * D, Tq, D);
        CMap km(kv.data() + b * Tk * D, Tk, D);
        CMap vm(vv.data() + b * Tk * Dv, Tk, Dv);
        Map am(attn.data() + b * Tq * Tk, Tq, Tk);
        am.noalias() = qm * km.transpose() * scale_f;
        for (int64_t i = 0; i < Tq; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int64_t j = 0; j < Tk; ++j)
                if (mrow[i * Tk + j] != 0.0) mx = std::max(mx, am(i, j));
            if (!std::isfinite(mx)) {  // fully blocked query
                for (int64_t j = 0; j < Tk; ++j) am(i, j) = 0.0;
                continue;
            }
            double z = 0.0;
            for (int64_t j = 0; j < Tk; ++j) {
                double e = (mrow[i * Tk + j] != 0.0) ? std::exp(am(i, j) - mx) : 0.0;
                am(i, j) = e;
                z += e;
            }
            for (int64_t j = 0; j < Tk; ++j) am(i, j) /= z;
        }
        Map(out.data() + b * Tq * Dv, Tq, Dv).noalias() = am * vm;
    }

    auto pq = q.node(), pk = k.node(), pv = v.node();
    return Var(make_node(
        std::move(out), {pq, pk, pv},
        [pq, pk, pv, B, Tq, Tk, D, Dv, scale_f, attn = std::move(attn)](Node& self) {
            RowMat dS(Tq, Tk);
            for (int64_t b = 0; b < B; ++b) {
                CMap am(attn.data() + b * Tq * Tk, Tq, Tk);
                CMap dout(self.grad.data() + b * Tq * Dv, Tq, Dv);
                CMap vm(pv->value.data() + b * Tk * Dv, Tk, Dv);
                if (pv->requires_grad)
                    Map(pv->grad_buf().data() + b * Tk * Dv, Tk, Dv).noalias() +=
                        am.transpose() * dout;
                RowMat dA = dout * vm.transpose();
                for (int64_t i = 0; i < Tq; ++i) {
                    double dot = 0.0;
                    for (int64_t j = 0; j < Tk; ++j) dot += dA(i, j) * am(i, j);
                    for (int64_t j = 0; j < Tk; ++j)
                        dS(i, j) = am(i, j) * (dA(i, j) - dot);
                }
                CMap qm(pq->value.data() + b * Tq * D, Tq, D);
                CMap km(pk->value.data() + b * Tk * D, Tk, D);
                if (pq->requires_grad)
                    Map(pq->grad_buf().data() + b * Tq * D, Tq, D).noalias() +=
                        dS * km * scale_f;
                if (pk->requires_grad)
                    Map(pk->grad_buf().data() + b * Tk * D, Tk, D).noalias() +=
                        dS.transpose() * qm * scale_f;
            }
        }));
}

Var split_heads(Var x, int heads) {
    SG_CHECK(x.value().rank() == 3, shape_error, "split_heads expects rank 3");
    int64_t B = x.value().dim(0), T = x.value().dim(1), D = x.value().dim(2);
    SG_CHECK(D % heads == 0, shape_error, "split_heads: dim ", D, " not divisible by ", heads);
    int64_t H = heads, Dh = D / heads;
    Tensor out({B * H, T, Dh});
    const Tensor& xv = x.value();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t)
            for (int64_t h = 0; h < H; ++h)
                std::memcpy(out.data() + ((b * H + h) * T + t) * Dh,
                            xv.data() + (b * T + t) * D + h * Dh,
                            static_cast<size_t>(Dh) * sizeof(double));
    auto px = x.node();
    return Var(make_node(std::move(out), {px}, [px, B, T, H, Dh, D](Node& self) {
        Tensor& g = px->grad_buf();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t t = 0; t < T; ++t)
                for (int64_t h = 0; h < H; ++h)
                    for (int64_t d = 0; d < Dh; ++d)
                        g[(b * T + t) * D + h * Dh + d] +=
                            self.grad[((b * H + h) * T + t) * Dh + d];
    }));
}

Var merge_heads(Var x, int heads) {
    SG_CHECK(x.value().rank() == 3, shape_error, "merge_heads expects rank 3");
    int64_t BH = x.value().dim(0), T = x.value().dim(1), Dh = x.value().dim(2);
    SG_CHECK(BH % heads == 0, shape_error, "merge_heads: batch ", BH, " not divisible by ", heads);
    int64_t H = heads, B = BH / H, D = H * Dh;
    Tensor out({B, T, D});
    const Tensor& xv = x.value();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t)
            for (int64_t h = 0; h < H; ++h)
                std::memcpy(out.data() + (b * T + t) * D + h * Dh,
                            xv.data() + ((b * H + h) * T + t) * Dh,
                            static_cast<size_t>(Dh) * sizeof(double));
    auto px = x.node();
    return Var(make_node(std::move(out), {px}, [px, B, T, H, Dh, D](Node& self) {
        Tensor& g = px->grad_buf();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t t = 0; t < T; ++t)
                for (int64_t h = 0; h < H; ++h)
                    for (int64_t d = 0; d < Dh; ++d)
                        g[((b * H + h) * T + t) * Dh + d] +=
                            self.grad[(b * T + t) * D + h * Dh + d];
    }));
}

// ----------------------------------------------------------- embedding/gather

Var embedding(Var table, const std::vector<int64_t>& ids) {
    SG_CHECK(table.value().rank() == 2, shape_error, "embedding table must be rank 2");
    int64_t V = table.value().dim(0), D = table.value().dim(1);
    int64_t N = static_cast<int64_t>(ids.size());
    Tensor out({N, D});
    for (int64_t i = 0; i < N; ++i) {
        int64_t id = ids[static_cast<size_t>(i)];
        SG_CHECK(id >= 0 && id < V, value_error, "embedding id ", id, " out of range [0,", V, ")");
        std::memcpy(out.data() + i * D, table.value().data() + id * D,
                    static_cast<size_t>(D) * sizeof(double));
    }
    auto pt = table.node();
    return Var(make_node(std::move(out), {pt}, [pt, ids, D](Node& self) {
        Tensor& g = pt->grad_buf();
        for (size_t i = 0; i < ids.size(); ++i)
            for (int64_t d = 0; d < D; ++d)
                g[ids[i] * D + d] += self.grad[static_cast<int64_t>(i) * D + d];
    }));
}

Var gather_rows(Var x, const std::vector<int64_t>& idx) {
    SG_CHECK(x.value().rank() == 2, shape_error, "gather_rows expects rank 2");
    int64_t N = x.value().dim(0), D = x.value().dim(1);
    int64_t M = static_cast<int64_t>(idx.size());
    Tensor out({M, D});
    for (int64_t i = 0; i < M; ++i) {
        int64_t r = idx[static_cast<size_t>(i)];
        if (r < 0) continue;  // padding row stays zero
        SG_CHECK(r < N, value_error, "gather_rows index ", r, " out of range");
        std::memcpy(out.data() + i * D, x.value().data() + r * D,
                    static_cast<size_t>(D) * sizeof(double));
    }
    auto px = x.node();
    return Var(make_node(std::move(out), {px}, [px, idx, D](Node& self) {
        Tensor& g = px->grad_buf();
        for (size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0) continue;
            for (int64_t d = 0; d < D; ++d)
                g[idx[i] * D + d] += self.grad[static_cast<int64_t>(i) * D + d];
        }
    }));
}

Var row_scale(Var x, const Tensor& s) {
    SG_CHECK(x.value().rank() == 2, shape_error, "row_scale expects rank 2");
    int64_t N = x.value().dim(0), D = x.value().dim(1);
    SG_CHECK(s.numel() == N, shape_error, "row_scale: scale length ", s.numel(), " != rows ", N);
    Tensor out = x.value();
    for (int64_t i = 0; i < N; ++i)
        for (int64_t d = 0; d < D; ++d) out[i * D + d] *= s[i];
    auto px = x.node();
    return Var(make_node(std::move(out), {px}, [px, s, N, D](Node& self) {
        Tensor& g = px->grad_buf();
        for (int64_t i = 0; i < N; ++i)
            for (int64_t d = 0; d < D; ++d) g[i * D + d] += self.grad[i * D + d] * s[i];
    }));
}

Var outer_const(const Tensor& s, Var w) {
    SG_CHECK(w.value().rank() == 1, shape_error, "outer_const: w must be rank 1");
    int64_t N = s.numel(), D = w.value().numel();
    Tensor out({N, D});
    for (int64_t i = 0; i < N; ++i)
        for (int64_t d = 0; d < D; ++d) out[i * D + d] = s[i] * w.value()[d];
    auto pw = w.node();
    return Var(make_node(std::move(out), {pw}, [pw, s, N, D](Node& self) {
        Tensor& g = pw->grad_buf();
        for (int64_t i = 0; i < N; ++i)
            for (int64_t d = 0; d < D; ++d) g[d] += self.grad[i * D + d] * s[i];
    }));
}

// ---------------------------------------------------------------- convolution

int64_t conv1d_out_len(int64_t in_len, int64_t kernel, int stride, int padding) {
    return (in_len + 2 * padding - kernel) / stride + 1;
}

int64_t conv1d_transpose_min_len(int64_t in_len, int64_t kernel, int stride, int padding) {
    return (in_len - 1) * stride - 2 * padding + kernel;
}

namespace {

// col layout: [B*Lout, Cin*K]
void im2col(const Tensor& x, int64_t B, int64_t Cin, int64_t L, int64_t K, int stride,
            int padding, int64_t Lout, std::vector<double>& col) {
    col.assign(static_cast<size_t>(B * Lout * Cin * K), 0.0);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < Lout; ++t) {
            double* crow = col.data() + (b * Lout + t) * Cin * K;
            int64_t base = t * stride - padding;
            for (int64_t ci = 0; ci < Cin; ++ci) {
                const double* xrow = x.data() + (b * Cin + ci) * L;
                for (int64_t k = 0; k < K; ++k) {
                    int64_t src = base + k;
                    if (src >= 0 && src < L) crow[ci * K + k] = xrow[src];
                }
            }
        }
}

}  // namespace

Var conv1d(Var x, Var w, Var b, int stride, int padding) {
    SG_CHECK(x.value().rank() == 3 && w.value().rank() == 3, shape_error,
             "conv1d expects x[B,C,L], w[Co,Ci,K]");
    int64_t B = x.value().dim(0), Cin = x.value().dim(1), L = x.value().dim(2);
    int64_t Cout = w.value().dim(0), K = w.value().dim(2);
    SG_CHECK(w.value().dim(1) == Cin, shape_error, "conv1d: channel mismatch ", w.value().dim(1),
             " vs ", Cin);
    SG_CHECK(b.value().numel() == Cout, shape_error, "conv1d: bias length");
    SG_CHECK(stride >= 1 && padding >= 0, value_error, "conv1d: bad stride/padding");
    SG_CHECK(L + 2 * padding >= K, shape_error, "conv1d: kernel ", K, " exceeds padded input ",
             L + 2 * padding);
    int64_t Lout = conv1d_out_len(L, K, stride, padding);

    std::vector<double> col;
    im2col(x.value(), B, Cin, L, K, stride, padding, Lout, col);
    // [B*Lout, Cin*K] x [Cin*K, Cout]
    RowMat out2(B * Lout, Cout);
    out2.noalias() = CMap(col.data(), B * Lout, Cin * K) *
                     CMap(w.value().data(), Cout, Cin * K).transpose();
    Tensor out({B, Cout, Lout});
    for (int64_t bb = 0; bb < B; ++bb)
        for (int64_t t = 0; t < Lout; ++t)
            for (int64_t co = 0; co < Cout; ++co)
                out[(bb * Cout + co) * Lout + t] = out2(bb * Lout + t, co) + b.value()[co];

    auto px = x.node(), pw = w.node(), pb = b.node();
    return Var(make_node(
        std::move(out), {px, pw, pb},
        [px, pw, pb, B, Cin, Cout, L, K, Lout, stride, padding](Node& self) {
            RowMat dout2(B * Lout, Cout);
            for (int64_t bb = 0; bb < B; ++bb)
                for (int64_t t = 0; t < Lout; ++t)
                    for (int64_t co = 0; co < Cout; ++co)
                        dout2(bb * Lout + t, co) = self.grad[(bb * Cout + co) * Lout + t];
            if (pb->requires_grad) {
                Tensor& g = pb->grad_buf();
                for (int64_t co = 0; co < Cout; ++co) g[co] += dout2.col(co).sum();
            }
            std::vector<double> col;
            if (pw->requires_grad || px->requires_grad)
                im2col(px->value, B, Cin, L, K, stride, padding, Lout, col);
            if (pw->requires_grad)
                Map(pw->grad_buf().data(), Cout, Cin * K).noalias() +=
                    dout2.transpose() * CMap(col.data(), B * Lout, Cin * K);
            if (px->requires_grad) {
                RowMat dcol = dout2 * CMap(pw->value.data(), Cout, Cin * K);
                Tensor& g = px->grad_buf();
                for (int64_t bb = 0; bb < B; ++bb)
                    for (int64_t t = 0; t < Lout; ++t) {
                        int64_t base = t * stride - padding;
                        const double* drow = dcol.data() + (bb * Lout + t) * Cin * K;
                        for (int64_t ci = 0; ci < Cin; ++ci)
                            for (int64_t k = 0; k < K; ++k) {
                                int64_t src = base + k;
                                if (src >= 0 && src < L)
                                    g[(bb * Cin + ci) * L + src] += drow[ci * K + k];
                            }
                    }
            }
        }));
}

Var conv1d_transpose(Var x, Var w, Var b, int stride, int padding, int64_t out_len) {
    SG_CHECK(x.value().rank() == 3 && w.value().rank() == 3, shape_error,
             "conv1d_transpose expects x[B,C,L], w[Ci,Co,K]");
    int64_t B = x.value().dim(0), Cin = x.value().dim(1), L = x.value().dim(2);
    int64_t Cout = w.value().dim(1), K = w.value().dim(2);
    SG_CHECK(w.value().dim(0) == Cin, shape_error, "conv1d_transpose: channel mismatch");
    SG_CHECK(b.value().numel() == Cout, shape_error, "conv1d_transpose: bias length");
    int64_t base = conv1d_transpose_min_len(L, K, stride, padding);
    SG_CHECK(out_len >= base && out_len < base + stride, shape_error,
             "conv1d_transpose: out_len ", out_len, " incompatible with base ", base,
             " and stride ", stride);

    // cols[B*L, Cout*K] = x2[B*L, Cin] * w[Cin, Cout*K], scattered by t = l*stride + k - padding
    auto x2 = [&](const Tensor& t) {
        // [B,Cin,L] -> [B*L, Cin]
        RowMat m(B * L, Cin);
        for (int64_t bb = 0; bb < B; ++bb)
            for (int64_t l = 0; l < L; ++l)
                for (int64_t ci = 0; ci < Cin; ++ci)
                    m(bb * L + l, ci) = t[(bb * Cin + ci) * L + l];
        return m;
    };
    RowMat cols = x2(x.value()) * CMap(w.value().data(), Cin, Cout * K);
    Tensor out({B, Cout, out_len});
    for (int64_t bb = 0; bb < B; ++bb)
        for (int64_t l = 0; l < L; ++l) {
            const double* crow = cols.data() + (bb * L + l) * Cout * K;
            int64_t tb = l * stride - padding;
            for (int64_t co = 0; co < Cout; ++co)
                for (int64_t k = 0; k < K; ++k) {
                    int64_t t = tb + k;
                    if (t >= 0 && t < out_len) out[(bb * Cout + co) * out_len + t] += crow[co * K + k];
                }
        }
    for (int64_t bb = 0; bb < B; ++bb)
        for (int64_t co = 0; co < Cout; ++co)
            for (int64_t t = 0; t < out_len; ++t) out[(bb * Cout + co) * out_len + t] += b.value()[co];

    auto px = x.node(), pw = w.node(), pb = b.node();
    return Var(make_node(
        std::move(out), {px, pw, pb},
        [px, pw, pb, B, Cin, Cout, L, K, out_len, stride, padding](Node& self) {
            if (pb->requires_grad) {
                Tensor& g = pb->grad_buf();
                for (int64_t bb = 0; bb < B; ++bb)
                    for (int64_t co = 0; co < Cout; ++co)
                        for (int64_t t = 0; t < out_len; ++t)
                            g[co] += self.grad[(bb * Cout + co) * out_len + t];
            }
            // dcols gather
            RowMat dcols = RowMat::Zero(B * L, Cout * K);
            for (int64_t bb = 0; bb < B; ++bb)
                for (int64_t l = 0; l < L; ++l) {
                    double* drow = dcols.data() + (bb * L + l) * Cout * K;
                    int64_t tb = l * stride - padding;
                    for (int64_t co = 0; co < Cout; ++co)
                        for (int64_t k = 0; k < K; ++k) {
                            int64_t t = tb + k;
                            if (t >= 0 && t < out_len)
                                drow[co * K + k] = self.grad[(bb * Cout + co) * out_len + t];
                        }
                }
            if (pw->requires_grad) {
                RowMat xm(B * L, Cin);
                for (int64_t bb = 0; bb < B; ++bb)
                    for (int64_t l = 0; l < L; ++l)
                        for (int64_t ci = 0; ci < Cin; ++ci)
                            xm(bb * L + l, ci) = px->value[(bb * Cin + ci) * L + l];
                Map(pw->grad_buf().data(), Cin, Cout * K).noalias() += xm.transpose() * dcols;
            }
            if (px->requires_grad) {
                RowMat dx2 = dcols * CMap(pw->value.data(), Cin, Cout * K).transpose();
                Tensor& g = px->grad_buf();
                for (int64_t bb = 0; bb < B; ++bb)
                    for (int64_t l = 0; l < L; ++l)
                        for (int64_t ci = 0; ci < Cin; ++ci)
                            g[(bb * Cin + ci) * L + l] += dx2(bb * L + l, ci);
            }
        }));
}

// ----------------------------------------------------------------- reductions

Var sum_all(Var x) {
    Tensor out = Tensor::scalar(x.value().sum());
    auto px = x.node();
    return Var(make_node(std::move(out), {px}, [px](Node& self) {
        Tensor& g = px->grad_buf();
        double d = self.grad[0];
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += d;
    }));
}

Var mean_all(Var x) {
    int64_t n = x.value().numel();
    Tensor out = Tensor::scalar(x.value().sum() / static_cast<double>(n));
    auto px = x.node();
    return Var(make_node(std::move(out), {px}, [px, n](Node& self) {
        Tensor& g = px->grad_buf();
        double d = self.grad[0] / static_cast<double>(n);
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += d;
    }));
}

Var mse(Var a, Var b) {
    check_same_shape(a, b, "mse");
    int64_t n = a.value().numel();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double d = a.value()[i] - b.value()[i];
        s += d * d;
    }
    Tensor out = Tensor::scalar(s / static_cast<double>(n));
    auto pa = a.node(), pb = b.node();
    return Var(make_node(std::move(out), {pa, pb}, [pa, pb, n](Node& self) {
        double c = 2.0 * self.grad[0] / static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) {
            double d = pa->value[i] - pb->value[i];
            if (pa->requires_grad) pa->grad_buf()[i] += c * d;
            if (pb->requires_grad) pb->grad_buf()[i] -= c * d;
        }
    }));
}

Var weighted_mse(Var pred, Var target, const Tensor& w) {
    check_same_shape(pred, target, "weighted_mse");
    SG_CHECK(pred.value().rank() == 2, shape_error, "weighted_mse expects [B,N]");
    int64_t B = pred.value().dim(0), N = pred.value().dim(1);
    SG_CHECK(w.numel() == B, shape_error, "weighted_mse: weights length ", w.numel(), " != ", B);
    double loss = 0.0;
    for (int64_t b = 0; b < B; ++b) {
        double s = 0.0;
        for (int64_t i = 0; i < N; ++i) {
            double d = pred.value()[b * N + i] - target.value()[b * N + i];
            s += d * d;
        }
        loss += w[b] * s / static_cast<double>(N);
    }
    Tensor out = Tensor::scalar(loss / static_cast<double>(B));
    auto pp = pred.node(), pt = target.node();
    return Var(make_node(std::move(out), {pp, pt}, [pp, pt, w, B, N](Node& self) {
        double c0 = 2.0 * self.grad[0] / static_cast<double>(B * N);
        for (int64_t b = 0; b < B; ++b) {
            double c = c0 * w[b];
            for (int64_t i = 0; i < N; ++i) {
                double d = pp->value[b * N + i] - pt->value[b * N + i];
                if (pp->requires_grad) pp->grad_buf()[b * N + i] += c * d;
                if (pt->requires_grad) pt->grad_buf()[b * N + i] -= c * d;
            }
        }
    }));
}

Var masked_mean_rows(Var x, const Tensor& mask) {
    SG_CHECK(x.value().rank() == 3, shape_error, "masked_mean_rows expects [B,T,D]");
    int64_t B = x.value().dim(0), T = x.value().dim(1), D = x.value().dim(2);
    SG_CHECK(mask.rank() == 2 && mask.dim(0) == B && mask.dim(1) == T, shape_error,
             "masked_mean_rows: mask must be [B,T]");
    std::vector<double> cnt(static_cast<size_t>(B), 0.0);
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t t = 0; t < T; ++t) cnt[static_cast<size_t>(b)] += (mask[b * T + t] != 0.0);
        SG_CHECK(cnt[static_cast<size_t>(b)] > 0.0, precondition_error,
                 "masked_mean_rows: sample ", b, " has no unmasked rows");
    }
    Tensor out({B, D});
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t t = 0; t < T; ++t) {
            if (mask[b * T + t] == 0.0) continue;
            for (int64_t d = 0; d < D; ++d) out[b * D + d] += x.value()[(b * T + t) * D + d];
        }
        for (int64_t d = 0; d < D; ++d) out[b * D + d] /= cnt[static_cast<size_t>(b)];
    }
    auto px = x.node();
    return Var(make_node(std::move(out), {px}, [px, mask, B, T, D, cnt = std::move(cnt)](Node& self) {
        Tensor& g = px->grad_buf();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t t = 0; t < T; ++t) {
                if (mask[b * T + t] == 0.0) continue;
                for (int64_t d = 0; d < D; ++d)
                    g[(b * T + t) * D + d] += self.grad[b * D + d] / cnt[static_cast<size_t>(b)];
            }
    }));
}

}  // namespace soilgen::nn
