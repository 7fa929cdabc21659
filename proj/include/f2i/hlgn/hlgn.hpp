#pragma once

#include <string>

#include "f2i/core/nn.hpp"
#include "f2i/data/preset.hpp"

namespace f2i {

struct HlgnConfig {
    int l_r = 65, d_r = 128;  // fMRI latent
    int l_t = 8, d_t = 32;    // text-condition space

    static HlgnConfig from_preset(const ScalePreset& p) {
        return {p.tokens(), p.d_r, p.text_tokens, p.text_dim};
    }
};

/// High-Level Guiding Network. Two parallel branches map the fMRI latent
/// into the text-conditioning space: a hard-aligned fMRI-to-text branch
/// (trained against frozen caption embeddings) and an auxiliary branch whose
/// final 1-D convolution is zero-initialized, so at construction the
/// semantic condition equals the hard branch exactly.
template <class T>
struct HlgnT {
    HlgnConfig cfg;
    ParamStoreT<T> params;

    nn::TokenDownsamplerT<T> main_down, aux_down;
    nn::MlpT<T> main_mlp, aux_mlp;
    nn::Conv1dT<T> aux_zero;

    HlgnT(const HlgnConfig& c, Rng& rng) : cfg(c) {
        main_down = nn::TokenDownsamplerT<T>(params, "main.down", rng, cfg.l_r, cfg.l_t, cfg.d_r);
        main_mlp = nn::MlpT<T>(params, "main.mlp", rng, cfg.d_r, cfg.d_r, cfg.d_t);
        aux_down = nn::TokenDownsamplerT<T>(params, "aux.down", rng, cfg.l_r, cfg.l_t, cfg.d_r);
        aux_mlp = nn::MlpT<T>(params, "aux.mlp", rng, cfg.d_r, cfg.d_r, cfg.d_t);
        aux_zero = nn::Conv1dT<T>(params, "aux.zero", rng, cfg.d_t, cfg.d_t, 1, 1, 0,
                                  /*zero_init=*/true);
    }

    void check_latent(const VarT<T>& latent) const {
        if (latent->val.rank() != 3 || latent->val.dim(1) != cfg.l_r ||
            latent->val.dim(2) != cfg.d_r)
            throw ShapeError("hlgn: latent shape mismatch, got " +
                             TensorT<T>::shape_str(latent->val.shape()));
    }

    /// Hard-aligned branch, [N, L_r, d_r] -> [N, L_T, d_T].
    VarT<T> fmri_to_text(GraphT<T>& g, VarT<T> latent) const {
        check_latent(latent);
        return main_mlp(g, main_down(g, latent));
    }

    /// Auxiliary branch; exactly zero at fresh initialization.
    VarT<T> auxiliary_encode(GraphT<T>& g, VarT<T> latent) const {
        check_latent(latent);
        return aux_zero(g, aux_mlp(g, aux_down(g, latent)));
    }

    static VarT<T> combine(GraphT<T>& g, VarT<T> f_txt, VarT<T> f_au) {
        return ops::add(g, f_txt, f_au);
    }

    VarT<T> semantic_condition(GraphT<T>& g, VarT<T> latent, bool use_auxiliary = true) const {
        auto f_txt = fmri_to_text(g, latent);
        if (!use_auxiliary) return f_txt;
        return combine(g, f_txt, auxiliary_encode(g, latent));
    }
};

using Hlgn = HlgnT<float>;

/// Per-token squared L2 distance averaged over tokens (sum over the feature
/// dimension, not mean), then averaged over the batch.
template <class T>
VarT<T> semantic_loss(GraphT<T>& g, VarT<T> target, VarT<T> pred) {
    if (!target->val.same_shape(pred->val)) throw ShapeError("semantic_loss: shape mismatch");
    int64_t rows = target->val.rank() == 3 ? target->val.dim(0) * target->val.dim(1)
                                           : target->val.dim(0);
    auto d = ops::sub(g, target, pred);
    auto sq = ops::mul(g, d, d);
    return ops::scale(g, ops::sum_all(g, sq), 1.0 / static_cast<double>(rows));
}

}  // namespace f2i
