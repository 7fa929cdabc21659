#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "f2i/core/ops.hpp"
#include "f2i/core/rng.hpp"

namespace f2i {

enum class WeightInit { trunc_normal, xavier_uniform };

/// Ordered registry of named parameters. Registration order is the
/// deterministic iteration order used by the optimizer and checkpoints.
template <class T>
struct ParamStoreT {
    std::vector<std::pair<std::string, VarT<T>>> items;

    VarT<T> add(const std::string& name, TensorT<T> init) {
        auto v = GraphT<T>::leaf(std::move(init), true);
        items.emplace_back(name, v);
        return v;
    }

    VarT<T> find(const std::string& name) const {
        for (const auto& [n, v] : items)
            if (n == name) return v;
        return nullptr;
    }

    std::vector<VarT<T>> with_prefix(const std::string& prefix) const {
        std::vector<VarT<T>> out;
        for (const auto& [n, v] : items)
            if (n.rfind(prefix, 0) == 0) out.push_back(v);
        return out;
    }
};

using ParamStore = ParamStoreT<float>;

namespace nn {

template <class T>
TensorT<T> weight_init(Rng& rng, std::vector<int64_t> shape, int64_t fan_in, int64_t fan_out,
                       WeightInit mode, double stddev = 0.02) {
    TensorT<T> w(std::move(shape));
    if (mode == WeightInit::trunc_normal) {
        rng.fill_trunc_normal(w, stddev);
    } else {
        double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        rng.fill_uniform(w, -limit, limit);
    }
    return w;
}

template <class T>
struct LinearT {
    VarT<T> w, b;
    LinearT() = default;
    LinearT(ParamStoreT<T>& ps, const std::string& name, Rng& rng, int64_t din, int64_t dout,
            WeightInit mode = WeightInit::trunc_normal, bool bias = true) {
        w = ps.add(name + ".w", weight_init<T>(rng, {din, dout}, din, dout, mode));
        if (bias) b = ps.add(name + ".b", TensorT<T>::zeros({dout}));
    }
    VarT<T> operator()(GraphT<T>& g, VarT<T> x) const { return ops::linear(g, x, w, b); }
};

template <class T>
struct Conv1dT {
    VarT<T> w, b;
    int k = 3, stride = 1, pad = 1;
    Conv1dT() = default;
    Conv1dT(ParamStoreT<T>& ps, const std::string& name, Rng& rng, int64_t cin, int64_t cout,
            int k_, int stride_, int pad_, bool zero_init = false)
        : k(k_), stride(stride_), pad(pad_) {
        int64_t fan = static_cast<int64_t>(k_) * cin;
        TensorT<T> wt = zero_init ? TensorT<T>::zeros({fan, cout})
                                  : weight_init<T>(rng, {fan, cout}, fan,
                                                   static_cast<int64_t>(k_) * cout,
                                                   WeightInit::xavier_uniform);
        w = ps.add(name + ".w", std::move(wt));
        b = ps.add(name + ".b", TensorT<T>::zeros({cout}));
    }
    VarT<T> operator()(GraphT<T>& g, VarT<T> x) const {
        return ops::conv1d(g, x, w, b, k, stride, pad);
    }
};

template <class T>
struct Conv2dT {
    VarT<T> w, b;
    int k = 3, stride = 1, pad = 1;
    Conv2dT() = default;
    Conv2dT(ParamStoreT<T>& ps, const std::string& name, Rng& rng, int64_t cin, int64_t cout,
            int k_, int stride_, int pad_, bool zero_init = false)
        : k(k_), stride(stride_), pad(pad_) {
        int64_t fan_in = cin * k_ * k_, fan_out = cout * k_ * k_;
        TensorT<T> wt = zero_init ? TensorT<T>::zeros({cout, fan_in})
                                  : weight_init<T>(rng, {cout, fan_in}, fan_in, fan_out,
                                                   WeightInit::xavier_uniform);
        w = ps.add(name + ".w", std::move(wt));
        b = ps.add(name + ".b", TensorT<T>::zeros({cout}));
    }
    VarT<T> operator()(GraphT<T>& g, VarT<T> x) const {
        return ops::conv2d(g, x, w, b, k, stride, pad);
    }
};

template <class T>
struct LayerNormT {
    VarT<T> gamma, beta;
    LayerNormT() = default;
    LayerNormT(ParamStoreT<T>& ps, const std::string& name, int64_t dim) {
        gamma = ps.add(name + ".g", TensorT<T>::full({dim}, T(1)));
        beta = ps.add(name + ".b", TensorT<T>::zeros({dim}));
    }
    VarT<T> operator()(GraphT<T>& g, VarT<T> x) const {
        return ops::layer_norm(g, x, gamma, beta);
    }
};

template <class T>
struct GroupNormT {
    VarT<T> gamma, beta;
    int groups = 8;
    GroupNormT() = default;
    GroupNormT(ParamStoreT<T>& ps, const std::string& name, int64_t channels, int groups_)
        : groups(groups_) {
        gamma = ps.add(name + ".g", TensorT<T>::full({channels}, T(1)));
        beta = ps.add(name + ".b", TensorT<T>::zeros({channels}));
    }
    VarT<T> operator()(GraphT<T>& g, VarT<T> x) const {
        return ops::group_norm(g, x, gamma, beta, groups);
    }
};

inline int norm_groups(int channels) { return channels >= 256 ? 32 : (channels % 8 == 0 ? 8 : channels); }

template <class T>
struct MlpT {
    LinearT<T> fc1, fc2;
    MlpT() = default;
    MlpT(ParamStoreT<T>& ps, const std::string& name, Rng& rng, int64_t din, int64_t hidden,
         int64_t dout, WeightInit mode = WeightInit::trunc_normal)
        : fc1(ps, name + ".fc1", rng, din, hidden, mode),
          fc2(ps, name + ".fc2", rng, hidden, dout, mode) {}
    VarT<T> operator()(GraphT<T>& g, VarT<T> x) const {
        return fc2(g, ops::gelu(g, fc1(g, x)));
    }
};

/// Multi-head attention. Self-attention when ctx == x; cross-attention
/// otherwise (keys/values from ctx).
template <class T>
struct AttentionT {
    LinearT<T> wq, wk, wv, wo;
    int heads = 1;
    int64_t dim = 0;
    AttentionT() = default;
    AttentionT(ParamStoreT<T>& ps, const std::string& name, Rng& rng, int64_t dim_, int heads_,
               int64_t ctx_dim = -1, WeightInit mode = WeightInit::trunc_normal)
        : heads(heads_), dim(dim_) {
        if (dim_ % heads_ != 0) throw ShapeError("attention: dim not divisible by heads");
        int64_t cd = ctx_dim < 0 ? dim_ : ctx_dim;
        wq = LinearT<T>(ps, name + ".q", rng, dim_, dim_, mode);
        wk = LinearT<T>(ps, name + ".k", rng, cd, dim_, mode);
        wv = LinearT<T>(ps, name + ".v", rng, cd, dim_, mode);
        wo = LinearT<T>(ps, name + ".o", rng, dim_, dim_, mode);
    }

    VarT<T> operator()(GraphT<T>& g, VarT<T> x, VarT<T> ctx) const {
        int64_t N = x->val.dim(0), L = x->val.dim(1);
        int64_t Lc = ctx->val.dim(1);
        int64_t dh = dim / heads;
        auto split = [&](VarT<T> t, int64_t len) {
            t = ops::reshape(g, t, {N, len, heads, dh});
            t = ops::permute_0213(g, t);  // [N, heads, len, dh]
            return ops::reshape(g, t, {N * heads, len, dh});
        };
        auto q = split(wq(g, x), L);
        auto k = split(wk(g, ctx), Lc);
        auto v = split(wv(g, ctx), Lc);
        auto scores = ops::scale(g, ops::bmm(g, q, k, false, true), 1.0 / std::sqrt(double(dh)));
        auto attn = ops::softmax_last(g, scores);
        auto o = ops::bmm(g, attn, v);  // [N*heads, L, dh]
        o = ops::reshape(g, o, {N, heads, L, dh});
        o = ops::permute_0213(g, o);  // [N, L, heads, dh]
        o = ops::reshape(g, o, {N, L, dim});
        return wo(g, o);
    }
};

/// Pre-norm ViT block: x + attn(ln(x)), then x + mlp(ln(x)).
template <class T>
struct ViTBlockT {
    LayerNormT<T> ln1, ln2;
    AttentionT<T> attn;
    MlpT<T> mlp;
    ViTBlockT() = default;
    ViTBlockT(ParamStoreT<T>& ps, const std::string& name, Rng& rng, int64_t dim, int heads,
              WeightInit mode = WeightInit::trunc_normal)
        : ln1(ps, name + ".ln1", dim),
          ln2(ps, name + ".ln2", dim),
          attn(ps, name + ".attn", rng, dim, heads, -1, mode),
          mlp(ps, name + ".mlp", rng, dim, 4 * dim, dim, mode) {}
    VarT<T> operator()(GraphT<T>& g, VarT<T> x) const {
        auto h = ln1(g, x);
        x = ops::add(g, x, attn(g, h, h));
        return ops::add(g, x, mlp(g, ln2(g, x)));
    }
};

/// Two strided 1-D convolutions over the token axis followed by truncation
/// to exactly `out_tokens` rows. Strides are chosen so the composed stride
/// lands at or above the target before truncating.
template <class T>
struct TokenDownsamplerT {
    Conv1dT<T> conv1, conv2;
    int64_t out_tokens = 0;

    static std::pair<int, int> pick_strides(int64_t l_in, int64_t l_out) {
        auto conv_out = [](int64_t l, int s) { return (l + 2 - 3) / s + 1; };
        int s1 = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(l_in) /
                                                        static_cast<double>(l_out))));
        while (s1 > 1 && conv_out(l_in, s1) < l_out) --s1;
        int64_t l1 = conv_out(l_in, s1);
        int s2 = 1;
        while (conv_out(l1, s2 + 1) >= l_out) ++s2;
        if (conv_out(l1, s2) < l_out) throw ShapeError("token downsampler: cannot reach target");
        return {s1, s2};
    }

    TokenDownsamplerT() = default;
    TokenDownsamplerT(ParamStoreT<T>& ps, const std::string& name, Rng& rng, int64_t l_in,
                      int64_t l_out, int64_t channels)
        : out_tokens(l_out) {
        auto [s1, s2] = pick_strides(l_in, l_out);
        conv1 = Conv1dT<T>(ps, name + ".conv1", rng, channels, channels, 3, s1, 1);
        conv2 = Conv1dT<T>(ps, name + ".conv2", rng, channels, channels, 3, s2, 1);
    }

    VarT<T> operator()(GraphT<T>& g, VarT<T> x) const {
        x = ops::gelu(g, conv1(g, x));
        x = ops::gelu(g, conv2(g, x));
        if (x->val.dim(1) < out_tokens) throw ShapeError("token downsampler: undershoot");
        if (x->val.dim(1) > out_tokens) x = ops::slice(g, x, 1, 0, out_tokens);
        return x;
    }
};

/// Sinusoidal embedding of integer timesteps, [N] -> [N, dim].
template <class T>
TensorT<T> sinusoidal_embedding(const std::vector<int>& ts, int64_t dim) {
    int64_t half = dim / 2;
    TensorT<T> out({static_cast<int64_t>(ts.size()), dim});
    for (size_t n = 0; n < ts.size(); ++n)
        for (int64_t i = 0; i < half; ++i) {
            double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                   static_cast<double>(half));
            double arg = static_cast<double>(ts[n]) * freq;
            out[static_cast<int64_t>(n) * dim + i] = static_cast<T>(std::sin(arg));
            out[static_cast<int64_t>(n) * dim + half + i] = static_cast<T>(std::cos(arg));
        }
    return out;
}

}  // namespace nn
}  // namespace f2i
