#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "f2i/core/nn.hpp"
#include "f2i/data/preset.hpp"
#include "f2i/llmn/inject.hpp"

namespace f2i {

struct UNetConfig {
    int in_ch = 4;
    int base = 32;
    std::vector<int> mult = {1, 2, 2, 2};
    int res_blocks = 2;
    std::vector<int> attn_levels = {0, 1, 2};
    int head_dim = 16;
    int ctx_dim = 32;  // d_T of the semantic condition
    int h = 8, w = 8;

    static UNetConfig from_preset(const ScalePreset& p) {
        UNetConfig c;
        c.in_ch = p.latent_c;
        c.base = p.unet_base;
        c.mult = p.unet_mult;
        c.res_blocks = p.unet_res_blocks;
        c.attn_levels = p.unet_attn_levels;
        c.head_dim = p.unet_head_dim;
        c.ctx_dim = p.text_dim;
        c.h = p.latent_h;
        c.w = p.latent_w;
        return c;
    }

    int levels() const { return static_cast<int>(mult.size()); }
    int ch(int level) const { return base * mult[static_cast<size_t>(level)]; }
    int tdim() const { return 4 * base; }
    bool attn_at(int level) const {
        for (int l : attn_levels)
            if (l == level) return true;
        return false;
    }

    /// Shapes [c, h, w] of the 13 control-injection sites: the 12 encoder
    /// feature maps in emission order, then the middle-block output.
    /// Computed statically so both presets can be audited without weights.
    std::vector<std::array<int64_t, 3>> injection_site_shapes() const {
        std::vector<std::array<int64_t, 3>> sites;
        int64_t hh = h, ww = w;
        sites.push_back({base, hh, ww});  // conv_in
        for (int l = 0; l < levels(); ++l) {
            for (int j = 0; j < res_blocks; ++j) sites.push_back({ch(l), hh, ww});
            if (l + 1 < levels()) {
                hh /= 2;
                ww /= 2;
                sites.push_back({ch(l), hh, ww});  // downsample
            }
        }
        sites.push_back({ch(levels() - 1), hh, ww});  // middle
        return sites;
    }
};

/// GroupNorm-SiLU-conv residual block with per-sample timestep bias.
template <class T>
struct ResBlockT {
    nn::GroupNormT<T> gn1, gn2;
    nn::Conv2dT<T> conv1, conv2;
    nn::LinearT<T> temb_proj;
    nn::Conv2dT<T> skip;
    bool project_skip = false;

    ResBlockT() = default;
    ResBlockT(ParamStoreT<T>& ps, const std::string& name, Rng& rng, int cin, int cout, int tdim)
        : gn1(ps, name + ".gn1", cin, nn::norm_groups(cin)),
          gn2(ps, name + ".gn2", cout, nn::norm_groups(cout)),
          conv1(ps, name + ".conv1", rng, cin, cout, 3, 1, 1),
          conv2(ps, name + ".conv2", rng, cout, cout, 3, 1, 1),
          temb_proj(ps, name + ".temb", rng, tdim, cout, WeightInit::xavier_uniform),
          project_skip(cin != cout) {
        if (project_skip) skip = nn::Conv2dT<T>(ps, name + ".skip", rng, cin, cout, 1, 1, 0);
    }

    VarT<T> operator()(GraphT<T>& g, VarT<T> x, VarT<T> temb) const {
        auto h = conv1(g, ops::silu(g, gn1(g, x)));
        h = ops::add_chan_bias(g, h, temb_proj(g, ops::silu(g, temb)));
        h = conv2(g, ops::silu(g, gn2(g, h)));
        return ops::add(g, h, project_skip ? skip(g, x) : x);
    }
};

/// Self-attention + cross-attention over flattened spatial positions, with
/// the semantic condition as cross-attention context.
template <class T>
struct SpatialXfmrT {
    nn::GroupNormT<T> gn;
    nn::Conv2dT<T> proj_in, proj_out;
    nn::LayerNormT<T> ln1, ln2, ln3;
    nn::AttentionT<T> self_attn, cross_attn;
    nn::MlpT<T> ff;

    SpatialXfmrT() = default;
    SpatialXfmrT(ParamStoreT<T>& ps, const std::string& name, Rng& rng, int channels,
                 int head_dim, int ctx_dim)
        : gn(ps, name + ".gn", channels, nn::norm_groups(channels)),
          proj_in(ps, name + ".pin", rng, channels, channels, 1, 1, 0),
          proj_out(ps, name + ".pout", rng, channels, channels, 1, 1, 0),
          ln1(ps, name + ".ln1", channels),
          ln2(ps, name + ".ln2", channels),
          ln3(ps, name + ".ln3", channels),
          self_attn(ps, name + ".sattn", rng, channels, channels / head_dim, -1,
                    WeightInit::xavier_uniform),
          cross_attn(ps, name + ".xattn", rng, channels, channels / head_dim, ctx_dim,
                     WeightInit::xavier_uniform),
          ff(ps, name + ".ff", rng, channels, 4 * channels, channels, WeightInit::xavier_uniform) {}

    VarT<T> operator()(GraphT<T>& g, VarT<T> x, VarT<T> ctx) const {
        int64_t N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
        auto h = proj_in(g, gn(g, x));
        // [N,C,H,W] -> [N,HW,C]
        auto t = ops::reshape(g, h, {N, C, H * W, 1});
        t = ops::permute_0213(g, t);
        t = ops::reshape(g, t, {N, H * W, C});
        auto s = ln1(g, t);
        t = ops::add(g, t, self_attn(g, s, s));
        t = ops::add(g, t, cross_attn(g, ln2(g, t), ctx));
        t = ops::add(g, t, ff(g, ln3(g, t)));
        // back to [N,C,H,W]
        t = ops::reshape(g, t, {N, H * W, C, 1});
        t = ops::permute_0213(g, t);
        t = ops::reshape(g, t, {N, C, H, W});
        return ops::add(g, x, proj_out(g, t));
    }
};

/// conv_in + encoder levels + middle block + the timestep MLP. Shared
/// structure between the locked backbone and the trainable control copy.
template <class T>
struct UNetCoreT {
    UNetConfig cfg;
    nn::LinearT<T> time_fc1, time_fc2;
    nn::Conv2dT<T> conv_in;
    struct EncBlock {
        ResBlockT<T> res;
        std::optional<SpatialXfmrT<T>> attn;
    };
    std::vector<EncBlock> enc;
    std::vector<nn::Conv2dT<T>> downs;
    ResBlockT<T> mid1;
    SpatialXfmrT<T> mid_attn;
    ResBlockT<T> mid2;

    UNetCoreT() = default;
    UNetCoreT(ParamStoreT<T>& ps, const std::string& pre, Rng& rng, const UNetConfig& c) : cfg(c) {
        time_fc1 = nn::LinearT<T>(ps, pre + ".time.fc1", rng, cfg.base, cfg.tdim(),
                                  WeightInit::xavier_uniform);
        time_fc2 = nn::LinearT<T>(ps, pre + ".time.fc2", rng, cfg.tdim(), cfg.tdim(),
                                  WeightInit::xavier_uniform);
        conv_in = nn::Conv2dT<T>(ps, pre + ".conv_in", rng, cfg.in_ch, cfg.base, 3, 1, 1);
        int prev = cfg.base;
        for (int l = 0; l < cfg.levels(); ++l) {
            for (int j = 0; j < cfg.res_blocks; ++j) {
                std::string b = pre + ".enc." + std::to_string(l) + "." + std::to_string(j);
                EncBlock blk;
                blk.res = ResBlockT<T>(ps, b + ".res", rng, prev, cfg.ch(l), cfg.tdim());
                if (cfg.attn_at(l))
                    blk.attn = SpatialXfmrT<T>(ps, b + ".attn", rng, cfg.ch(l), cfg.head_dim,
                                               cfg.ctx_dim);
                enc.push_back(std::move(blk));
                prev = cfg.ch(l);
            }
            if (l + 1 < cfg.levels())
                downs.emplace_back(ps, pre + ".down." + std::to_string(l), rng, prev, prev, 3, 2,
                                   1);
        }
        int top = cfg.ch(cfg.levels() - 1);
        mid1 = ResBlockT<T>(ps, pre + ".mid1", rng, top, top, cfg.tdim());
        mid_attn = SpatialXfmrT<T>(ps, pre + ".midattn", rng, top, cfg.head_dim, cfg.ctx_dim);
        mid2 = ResBlockT<T>(ps, pre + ".mid2", rng, top, top, cfg.tdim());
    }

    VarT<T> time_embed(GraphT<T>& g, const std::vector<int>& ts) const {
        auto emb = GraphT<T>::leaf(nn::sinusoidal_embedding<T>(ts, cfg.base));
        return time_fc2(g, ops::silu(g, time_fc1(g, emb)));
    }

    struct Features {
        std::vector<VarT<T>> skips;  // 12 encoder feature maps, emission order
        VarT<T> mid;                 // middle-block output
    };

    Features forward(GraphT<T>& g, VarT<T> z, VarT<T> temb, VarT<T> ctx) const {
        Features f;
        auto h = conv_in(g, z);
        f.skips.push_back(h);
        size_t bi = 0, di = 0;
        for (int l = 0; l < cfg.levels(); ++l) {
            for (int j = 0; j < cfg.res_blocks; ++j, ++bi) {
                h = enc[bi].res(g, h, temb);
                if (enc[bi].attn) h = (*enc[bi].attn)(g, h, ctx);
                f.skips.push_back(h);
            }
            if (l + 1 < cfg.levels()) {
                h = downs[di++](g, h);
                f.skips.push_back(h);
            }
        }
        h = mid1(g, h, temb);
        h = mid_attn(g, h, ctx);
        f.mid = mid2(g, h, temb);
        return f;
    }
};

/// Conditional denoiser: the core plus the skip-consuming decoder. Control
/// features (already zero-convolved) are residually added, scaled by alpha,
/// to the middle-block output and to each skip as the decoder consumes it.
template <class T>
struct UNetT {
    UNetConfig cfg;
    ParamStoreT<T> params;
    UNetCoreT<T> core;
    struct DecBlock {
        ResBlockT<T> res;
        std::optional<SpatialXfmrT<T>> attn;
    };
    std::vector<DecBlock> dec;
    std::vector<nn::Conv2dT<T>> ups;
    nn::GroupNormT<T> out_gn;
    nn::Conv2dT<T> out_conv;

    UNetT(const UNetConfig& c, Rng& rng) : cfg(c) {
        core = UNetCoreT<T>(params, "core", rng, cfg);
        // mirror of the encoder skip stack
        std::vector<int> skip_ch;
        skip_ch.push_back(cfg.base);
        for (int l = 0; l < cfg.levels(); ++l) {
            for (int j = 0; j < cfg.res_blocks; ++j) skip_ch.push_back(cfg.ch(l));
            if (l + 1 < cfg.levels()) skip_ch.push_back(cfg.ch(l));
        }
        int hch = cfg.ch(cfg.levels() - 1);
        size_t si = skip_ch.size();
        for (int l = cfg.levels() - 1; l >= 0; --l) {
            for (int j = 0; j < cfg.res_blocks + 1; ++j) {
                int sch = skip_ch[--si];
                std::string b = "dec." + std::to_string(l) + "." + std::to_string(j);
                DecBlock blk;
                blk.res = ResBlockT<T>(params, b + ".res", rng, hch + sch, cfg.ch(l), cfg.tdim());
                if (cfg.attn_at(l))
                    blk.attn = SpatialXfmrT<T>(params, b + ".attn", rng, cfg.ch(l), cfg.head_dim,
                                               cfg.ctx_dim);
                dec.push_back(std::move(blk));
                hch = cfg.ch(l);
            }
            if (l > 0)
                ups.emplace_back(params, "up." + std::to_string(l), rng, hch, hch, 3, 1, 1);
        }
        out_gn = nn::GroupNormT<T>(params, "out.gn", cfg.ch(0), nn::norm_groups(cfg.ch(0)));
        out_conv = nn::Conv2dT<T>(params, "out.conv", rng, cfg.ch(0), cfg.in_ch, 3, 1, 1);
    }

    /// Number of control-injection sites (12 skips + middle).
    int num_sites() const { return static_cast<int>(cfg.injection_site_shapes().size()); }

    /// ctx [N, L_T, d_T]; control, when present, holds num_sites() maps.
    VarT<T> denoise(GraphT<T>& g, VarT<T> z_t, const std::vector<int>& ts, VarT<T> ctx,
                    const std::vector<VarT<T>>* control, double alpha) const {
        if (z_t->val.rank() != 4 || z_t->val.dim(1) != cfg.in_ch ||
            z_t->val.dim(2) != cfg.h || z_t->val.dim(3) != cfg.w)
            throw ShapeError("denoise: latent shape mismatch, got " +
                             TensorT<T>::shape_str(z_t->val.shape()));
        if (static_cast<int64_t>(ts.size()) != z_t->val.dim(0))
            throw ShapeError("denoise: timestep count mismatch");
        if (ctx->val.rank() != 3 || ctx->val.dim(2) != cfg.ctx_dim)
            throw ShapeError("denoise: context shape mismatch");
        if (control && static_cast<int>(control->size()) != num_sites())
            throw ShapeError("denoise: control must carry " + std::to_string(num_sites()) +
                             " feature maps");
        auto temb = core.time_embed(g, ts);
        auto feats = core.forward(g, z_t, temb, ctx);
        auto h = feats.mid;
        if (control) h = inject(g, h, control->back(), alpha);
        size_t di = 0, ui = 0;
        size_t si = feats.skips.size();
        for (int l = cfg.levels() - 1; l >= 0; --l) {
            for (int j = 0; j < cfg.res_blocks + 1; ++j, ++di) {
                auto skip = feats.skips[--si];
                if (control) skip = inject(g, skip, (*control)[si], alpha);
                h = dec[di].res(g, ops::concat(g, h, skip, 1), temb);
                if (dec[di].attn) h = (*dec[di].attn)(g, h, ctx);
            }
            if (l > 0) h = ups[ui++](g, ops::upsample2x(g, h));
        }
        return out_conv(g, ops::silu(g, out_gn(g, h)));
    }
};

using UNet = UNetT<float>;

}  // namespace f2i
