#pragma once

#include <string>
#include <vector>

#include "f2i/backbone/unet.hpp"
#include "f2i/core/nn.hpp"
#include "f2i/data/preset.hpp"
#include "f2i/llmn/inject.hpp"

namespace f2i {

/// Non-negative control scale applied to the injected residuals at
/// inference. A runtime argument, never persisted with the weights.
struct ControlScale {
    double alpha = 1.0;
    ControlScale() = default;
    explicit ControlScale(double a) : alpha(a) {
        if (!(a >= 0.0)) throw UsageError("control scale: alpha must be >= 0");
    }
};

/// Token-axis convolutions plus a per-token MLP, reshaped into the backbone
/// latent geometry. Infeasible preset arithmetic fails at construction.
template <class T>
struct FeatureTransformT {
    int l_r = 0, d_r = 0, ft_tokens = 0, ft_dim = 0;
    int c = 0, h = 0, w = 0;
    ParamStoreT<T> params;
    nn::TokenDownsamplerT<T> down;
    nn::MlpT<T> mlp;

    FeatureTransformT(const ScalePreset& p, Rng& rng)
        : l_r(p.tokens()), d_r(p.d_r), ft_tokens(p.ft_tokens), ft_dim(p.ft_dim),
          c(p.latent_c), h(p.latent_h), w(p.latent_w) {
        if (static_cast<int64_t>(ft_tokens) * ft_dim !=
            static_cast<int64_t>(c) * h * w)
            throw DataError("feature transform: token*dim product not reshapeable to latent");
        down = nn::TokenDownsamplerT<T>(params, "down", rng, l_r, ft_tokens, d_r);
        mlp = nn::MlpT<T>(params, "mlp", rng, d_r, d_r, ft_dim);
    }

    /// [N, L_r, d_r] -> [N, c, h, w]
    VarT<T> operator()(GraphT<T>& g, VarT<T> latent) const {
        if (latent->val.rank() != 3 || latent->val.dim(1) != l_r || latent->val.dim(2) != d_r)
            throw ShapeError("feature transform: latent shape mismatch, got " +
                             TensorT<T>::shape_str(latent->val.shape()));
        int64_t N = latent->val.dim(0);
        auto x = mlp(g, down(g, latent));  // [N, ft_tokens, ft_dim]
        return ops::reshape(g, x, {N, c, h, w});
    }
};

/// Trainable copy of the backbone encoder (conv_in + levels + middle + time
/// MLP) plus one zero-initialized 1x1 convolution per injection site. At
/// fresh initialization every emitted map is exactly zero, so attaching the
/// branch leaves the backbone's function unchanged.
template <class T>
struct ControlBranchT {
    UNetConfig cfg;
    ParamStoreT<T> params;
    UNetCoreT<T> core;
    std::vector<nn::Conv2dT<T>> zero_convs;

    ControlBranchT(const UNetConfig& c, Rng& rng) : cfg(c) {
        core = UNetCoreT<T>(params, "core", rng, cfg);
        auto sites = cfg.injection_site_shapes();
        for (size_t i = 0; i < sites.size(); ++i)
            zero_convs.emplace_back(params, "zero." + std::to_string(i), rng,
                                    static_cast<int>(sites[i][0]), static_cast<int>(sites[i][0]),
                                    1, 1, 0, /*zero_init=*/true);
    }

    /// Adopt the (typically pretrained, frozen) backbone encoder weights.
    /// Zero convolutions stay zero, preserving init equivalence.
    void copy_core_from(const UNetT<T>& unet) {
        for (auto& [name, var] : params.items) {
            if (name.rfind("core.", 0) != 0) continue;
            auto src = unet.params.find(name);
            if (!src) throw CheckpointError("control branch: backbone lacks parameter " + name);
            if (!src->val.same_shape(var->val))
                throw ShapeError("control branch: shape mismatch for " + name);
            var->val = src->val;
        }
    }

    /// Runs the copy on (z_t + seed) under the same timestep/semantic
    /// conditioning as the backbone; emits the 13 zero-convolved maps.
    std::vector<VarT<T>> forward(GraphT<T>& g, VarT<T> z_t, VarT<T> seed,
                                 const std::vector<int>& ts, VarT<T> ctx) const {
        if (!z_t->val.same_shape(seed->val))
            throw ShapeError("control branch: seed/latent shape mismatch");
        auto x = ops::add(g, z_t, seed);
        auto temb = core.time_embed(g, ts);
        auto feats = core.forward(g, x, temb, ctx);
        std::vector<VarT<T>> out;
        out.reserve(zero_convs.size());
        for (size_t i = 0; i + 1 < zero_convs.size(); ++i)
            out.push_back(zero_convs[i](g, feats.skips[i]));
        out.push_back(zero_convs.back()(g, feats.mid));
        return out;
    }
};

using FeatureTransform = FeatureTransformT<float>;
using ControlBranch = ControlBranchT<float>;

}  // namespace f2i
