#pragma once

#include <string>
#include <vector>

#include "f2i/core/nn.hpp"
#include "f2i/data/preset.hpp"

namespace f2i {

struct EncoderConfig {
    int side = 64;
    int patch = 8;
    int depth = 4;
    int heads = 4;
    int dim = 128;
    WeightInit init = WeightInit::trunc_normal;

    static EncoderConfig from_preset(const ScalePreset& p) {
        EncoderConfig c;
        c.side = p.surface_side;
        c.patch = p.patch_size;
        c.depth = p.enc_depth;
        c.heads = p.enc_heads;
        c.dim = p.d_r;
        return c;
    }
    int patches() const {
        int q = side / patch;
        return q * q;
    }
    int tokens() const { return patches() + 1; }  // L_r, class token first
    void validate() const {
        if (side % patch != 0) throw ShapeError("encoder: side not divisible by patch");
        if (dim % heads != 0) throw ShapeError("encoder: dim not divisible by heads");
    }
};

/// Patch-transformer autoencoder over surface maps. The reconstruction
/// decoder sees only the class token: every patch position is replaced by
/// one shared learnable guide token, so all information must pass through
/// token 0. encode() with frozen weights is pure; training is single-writer.
template <class T>
struct CalibratedEncoderT {
    EncoderConfig cfg;
    ParamStoreT<T> params;

    nn::LinearT<T> patch_proj;
    VarT<T> cls_token, enc_pos;
    std::vector<nn::ViTBlockT<T>> enc_blocks;
    nn::LayerNormT<T> enc_ln;

    nn::LinearT<T> cls_proj;
    VarT<T> guide_token, dec_pos;
    std::vector<nn::ViTBlockT<T>> dec_blocks;
    nn::LayerNormT<T> dec_ln;
    nn::LinearT<T> pixel_proj;

    CalibratedEncoderT(const EncoderConfig& c, Rng& rng) : cfg(c) {
        cfg.validate();
        int64_t d = cfg.dim, p2 = static_cast<int64_t>(cfg.patch) * cfg.patch;
        int64_t L = cfg.tokens();
        patch_proj = nn::LinearT<T>(params, "enc.patch_proj", rng, p2, d, cfg.init);
        {
            TensorT<T> t({d});
            rng.fill_trunc_normal(t, 0.02);
            cls_token = params.add("enc.cls", std::move(t));
        }
        {
            TensorT<T> t({L, d});
            rng.fill_trunc_normal(t, 0.02);
            enc_pos = params.add("enc.pos", std::move(t));
        }
        for (int i = 0; i < cfg.depth; ++i)
            enc_blocks.emplace_back(params, "enc.blocks." + std::to_string(i), rng, d, cfg.heads,
                                    cfg.init);
        enc_ln = nn::LayerNormT<T>(params, "enc.ln", d);

        cls_proj = nn::LinearT<T>(params, "dec.cls_proj", rng, d, d, cfg.init);
        {
            TensorT<T> t({d});
            rng.fill_trunc_normal(t, 0.02);
            guide_token = params.add("dec.guide", std::move(t));
        }
        {
            TensorT<T> t({L, d});
            rng.fill_trunc_normal(t, 0.02);
            dec_pos = params.add("dec.pos", std::move(t));
        }
        for (int i = 0; i < cfg.depth; ++i)
            dec_blocks.emplace_back(params, "dec.blocks." + std::to_string(i), rng, d, cfg.heads,
                                    cfg.init);
        dec_ln = nn::LayerNormT<T>(params, "dec.ln", d);
        pixel_proj = nn::LinearT<T>(params, "dec.pixel_proj", rng, d, p2, cfg.init);
    }

    /// [N, S, S] -> [N, L_r, d_r]; token 0 is the class token.
    VarT<T> encode(GraphT<T>& g, VarT<T> surfaces) const {
        if (surfaces->val.rank() != 3 || surfaces->val.dim(1) != cfg.side ||
            surfaces->val.dim(2) != cfg.side)
            throw ShapeError("encode: expected [N," + std::to_string(cfg.side) + "," +
                             std::to_string(cfg.side) + "], got " +
                             TensorT<T>::shape_str(surfaces->val.shape()));
        int64_t N = surfaces->val.dim(0);
        auto x = ops::patchify(g, surfaces, cfg.patch);  // [N, P, p^2]
        x = patch_proj(g, x);                            // [N, P, d]
        auto cls = ops::bcast_rows(g, ops::bcast_rows(g, cls_token, 1), N);  // [N,1,d]
        x = ops::concat(g, cls, x, 1);                   // [N, L, d]
        x = ops::add_bcast(g, x, enc_pos);
        for (const auto& blk : enc_blocks) x = blk(g, x);
        return enc_ln(g, x);
    }

    /// [N, L_r, d_r] -> [N, S, S]. Only token 0 is read; all patch positions
    /// are rebuilt from the shared guide token.
    VarT<T> decode(GraphT<T>& g, VarT<T> latent) const {
        if (latent->val.rank() != 3 || latent->val.dim(1) != cfg.tokens() ||
            latent->val.dim(2) != cfg.dim)
            throw ShapeError("decode: latent shape mismatch, got " +
                             TensorT<T>::shape_str(latent->val.shape()));
        int64_t N = latent->val.dim(0);
        int64_t P = cfg.patches();
        auto cls = ops::slice(g, latent, 1, 0, 1);  // [N,1,d] - the only tokens used
        cls = cls_proj(g, cls);
        auto guide = ops::bcast_rows(g, ops::bcast_rows(g, guide_token, P), N);  // [N,P,d]
        auto x = ops::concat(g, cls, guide, 1);  // [N, L, d]
        x = ops::add_bcast(g, x, dec_pos);
        for (const auto& blk : dec_blocks) x = blk(g, x);
        x = dec_ln(g, x);
        x = pixel_proj(g, x);                      // [N, L, p^2]
        x = ops::slice(g, x, 1, 1, P);             // drop the class position
        return ops::unpatchify(g, x, cfg.patch);   // [N, S, S]
    }

    TensorT<T> encode_t(const TensorT<T>& surfaces) const {
        GraphT<T> g;
        return encode(g, GraphT<T>::leaf(surfaces))->val;
    }

    TensorT<T> decode_t(const TensorT<T>& latent) const {
        GraphT<T> g;
        return decode(g, GraphT<T>::leaf(latent))->val;
    }
};

using CalibratedEncoder = CalibratedEncoderT<float>;

/// Mean over pixels of the squared reconstruction error.
template <class T>
VarT<T> reconstruction_loss(GraphT<T>& g, VarT<T> target, VarT<T> recon) {
    if (!target->val.same_shape(recon->val)) throw ShapeError("reconstruction_loss: shape mismatch");
    return ops::mse_mean(g, target, recon);
}

}  // namespace f2i
