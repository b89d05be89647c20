#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pldiff/ops.hpp"
#include "pldiff/rng.hpp"
#include "pldiff/tensor.hpp"

namespace pldiff {

// Named trainable parameters in registration order. Registration order is
// the optimizer iteration order, so it must be deterministic.
template <typename T>
struct ParamStore {
    std::vector<std::pair<std::string, Tensor<T>>> items;

    Tensor<T> add(const std::string& name, Tensor<T> t) {
        t.set_requires_grad(true);
        items.emplace_back(name, t);
        return t;
    }

    void zero_grads() {
        for (auto& [name, p] : items) p.zero_grad();
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& [name, p] : items) n += p.size();
        return n;
    }

    std::vector<Tensor<T>> tensors() const {
        std::vector<Tensor<T>> out;
        out.reserve(items.size());
        for (const auto& [name, p] : items) out.push_back(p);
        return out;
    }
};

template <typename T>
struct Linear {
    Tensor<T> w;  // [in, out]
    Tensor<T> b;  // [out]

    Linear() = default;
    Linear(ParamStore<T>& ps, const std::string& name, int in, int out, Rng& rng) {
        w = ps.add(name + ".w", Tensor<T>::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in))));
        b = ps.add(name + ".b", Tensor<T>::zeros({out}));
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return add_rowvec(matmul(x, w), b); }
};

template <typename T>
struct LayerNorm {
    Tensor<T> gain;
    Tensor<T> bias;

    LayerNorm() = default;
    LayerNorm(ParamStore<T>& ps, const std::string& name, int d) {
        gain = ps.add(name + ".g", Tensor<T>::filled({d}, T(1)));
        bias = ps.add(name + ".b", Tensor<T>::zeros({d}));
    }

    Tensor<T> operator()(const Tensor<T>& x) const {
        return add_rowvec(mul_rowvec(layer_norm(x), gain), bias);
    }
};

// Multi-head attention over rank-2 tensors; heads are column slices.
template <typename T>
struct MultiHeadAttention {
    Linear<T> wq, wk, wv, wo;
    int heads = 1;

    MultiHeadAttention() = default;
    MultiHeadAttention(ParamStore<T>& ps, const std::string& name, int d_model, int n_heads, Rng& rng)
        : wq(ps, name + ".q", d_model, d_model, rng),
          wk(ps, name + ".k", d_model, d_model, rng),
          wv(ps, name + ".v", d_model, d_model, rng),
          wo(ps, name + ".o", d_model, d_model, rng),
          heads(n_heads) {
        if (d_model % n_heads != 0) throw std::invalid_argument("MultiHeadAttention: d_model % heads != 0");
    }

    // q_in: [P, d], kv_in: [F, d]; self-attention when they coincide
    Tensor<T> operator()(const Tensor<T>& q_in, const Tensor<T>& kv_in) const {
        Tensor<T> q = wq(q_in), k = wk(kv_in), v = wv(kv_in);
        const int dh = q.cols() / heads;
        Tensor<T> merged;
        for (int h = 0; h < heads; ++h) {
            Tensor<T> qh = slice_cols(q, h * dh, dh);
            Tensor<T> kh = slice_cols(k, h * dh, dh);
            Tensor<T> vh = slice_cols(v, h * dh, dh);
            Tensor<T> oh = attention(qh, kh, vh);
            merged = h == 0 ? oh : concat_cols(merged, oh);
        }
        return wo(merged);
    }
};

// Pre-norm transformer encoder layer; the kv argument switches it to
// cross-attention while keeping the same residual structure.
template <typename T>
struct TransformerLayer {
    MultiHeadAttention<T> attn;
    LayerNorm<T> ln1, ln2;
    Linear<T> ff1, ff2;

    TransformerLayer() = default;
    TransformerLayer(ParamStore<T>& ps, const std::string& name, int d_model, int n_heads, int d_ff, Rng& rng)
        : attn(ps, name + ".attn", d_model, n_heads, rng),
          ln1(ps, name + ".ln1", d_model),
          ln2(ps, name + ".ln2", d_model),
          ff1(ps, name + ".ff1", d_model, d_ff, rng),
          ff2(ps, name + ".ff2", d_ff, d_model, rng) {}

    Tensor<T> operator()(const Tensor<T>& x) const {
        Tensor<T> xn = ln1(x);
        Tensor<T> h = add(x, attn(xn, xn));
        return add(h, ff2(gelu(ff1(ln2(h)))));
    }

    // cross-attention: queries are normalized, the memory is used as given
    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& kv) const {
        Tensor<T> h = add(x, attn(ln1(x), kv));
        return add(h, ff2(gelu(ff1(ln2(h)))));
    }
};

// Two-layer MLP used for condition injection.
template <typename T>
struct Mlp2 {
    Linear<T> l1, l2;

    Mlp2() = default;
    Mlp2(ParamStore<T>& ps, const std::string& name, int in, int hidden, int out, Rng& rng)
        : l1(ps, name + ".l1", in, hidden, rng), l2(ps, name + ".l2", hidden, out, rng) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return l2(gelu(l1(x))); }
};

// Standard sinusoidal position table, returned as a constant leaf.
template <typename T>
Tensor<T> positional_encoding(int n, int d) {
    Tensor<T> pe = Tensor<T>::zeros({n, d});
    for (int pos = 0; pos < n; ++pos) {
        for (int i = 0; i < d; i += 2) {
            const double div = std::exp(-std::log(10000.0) * static_cast<double>(i) / d);
            pe.data()[pos * d + i] = static_cast<T>(std::sin(pos * div));
            if (i + 1 < d) pe.data()[pos * d + i + 1] = static_cast<T>(std::cos(pos * div));
        }
    }
    return pe;
}

// Sinusoidal embedding of a continuous scalar (diffusion timestep).
template <typename T>
Tensor<T> sinusoidal_embedding(double t, int d) {
    Tensor<T> e = Tensor<T>::zeros({1, d});
    for (int i = 0; i < d; i += 2) {
        const double div = std::exp(-std::log(10000.0) * static_cast<double>(i) / d);
        e.data()[i] = static_cast<T>(std::sin(t * div));
        if (i + 1 < d) e.data()[i + 1] = static_cast<T>(std::cos(t * div));
    }
    return e;
}

struct AdamOptions {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
class Adam {
public:
    explicit Adam(AdamOptions opt = {}) : opt_(opt) {}

    void step(ParamStore<T>& params) {
        if (m_.empty()) {
            m_.resize(params.items.size());
            v_.resize(params.items.size());
            for (std::size_t i = 0; i < params.items.size(); ++i) {
                m_[i].assign(params.items[i].second.size(), 0.0);
                v_[i].assign(params.items[i].second.size(), 0.0);
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(opt_.beta1, t_);
        const double bc2 = 1.0 - std::pow(opt_.beta2, t_);
        for (std::size_t i = 0; i < params.items.size(); ++i) {
            auto& p = params.items[i].second;
            const auto& g = p.grad();
            auto& val = p.data();
            for (std::size_t j = 0; j < val.size(); ++j) {
                const double gj = static_cast<double>(g[j]);
                m_[i][j] = opt_.beta1 * m_[i][j] + (1.0 - opt_.beta1) * gj;
                v_[i][j] = opt_.beta2 * v_[i][j] + (1.0 - opt_.beta2) * gj * gj;
                const double mh = m_[i][j] / bc1;
                const double vh = v_[i][j] / bc2;
                val[j] -= static_cast<T>(opt_.lr * mh / (std::sqrt(vh) + opt_.eps));
            }
        }
    }

private:
    AdamOptions opt_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace pldiff
