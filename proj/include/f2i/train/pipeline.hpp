#pragma once

#include <map>
#include <string>
#include <vector>

#include "f2i/backbone/codec.hpp"
#include "f2i/backbone/sampler.hpp"
#include "f2i/backbone/schedule.hpp"
#include "f2i/backbone/unet.hpp"
#include "f2i/encoder/encoder.hpp"
#include "f2i/hlgn/hlgn.hpp"
#include "f2i/llmn/llmn.hpp"

namespace f2i {

enum class Stage { calibrated_encoding, cross_subject_pretrain, single_subject_refine };

inline std::string stage_name(Stage s) {
    switch (s) {
        case Stage::calibrated_encoding: return "calibrated_encoding";
        case Stage::cross_subject_pretrain: return "cross_subject_pretrain";
        default: return "single_subject_refine";
    }
}

enum class EncoderMode { full, frozen, random_init, cls_only };

struct AblationFlags {
    EncoderMode encoder_mode = EncoderMode::full;
    bool use_llmn = true;
    bool use_auxiliary = true;
    bool use_semantic_loss = true;

    bool encoder_trainable() const {
        return encoder_mode == EncoderMode::full || encoder_mode == EncoderMode::random_init;
    }
};

struct LossWeights {
    double lambda_sem = 0.1;
    double cfg_dropout = 0.05;
    int64_t cfg_dropout_after = 0;  // dropout active from this iteration on

    void validate() const {
        if (!(lambda_sem >= 0)) throw UsageError("loss weights: lambda must be >= 0");
        if (!(cfg_dropout >= 0 && cfg_dropout < 1))
            throw UsageError("loss weights: cfg_dropout must be in [0,1)");
    }
};

struct DecodeOptions {
    double alpha = 1.0;
    int steps = 50;
    double guidance = 5.0;
    uint64_t seed = 0;
    bool use_llmn = true;                           // false decodes without the control branch
    const SurfaceMap* structural_source = nullptr;  // feature swap: LLMN inputs from here
};

/// The full reconstruction model: calibrated encoder, both conditioning
/// branches, and the scale-configurable latent diffusion backbone.
template <class T>
struct PipelineT {
    ScalePreset preset;
    AblationFlags flags;

  private:
    Rng init_rng_;  // one sequential stream feeds every module's weight init

  public:
    CalibratedEncoderT<T> mae;
    HlgnT<T> hlgn;
    FeatureTransformT<T> ft;
    ControlBranchT<T> control;
    CodecT<T> codec;
    UNetT<T> unet;
    NoiseSchedule sched;
    float latent_scale = 1.0f;

    PipelineT(const ScalePreset& p, const AblationFlags& fl, uint64_t init_seed)
        : preset(validated(p)),
          flags(fl),
          init_rng_(Rng::keyed(init_seed, 0x1217)),
          mae(encoder_cfg(p, fl), init_rng_),
          hlgn(HlgnConfig::from_preset(p), init_rng_),
          ft(p, init_rng_),
          control(UNetConfig::from_preset(p), init_rng_),
          codec(CodecConfig::from_preset(p), init_rng_),
          unet(UNetConfig::from_preset(p), init_rng_),
          sched(NoiseSchedule::from_preset(p)) {}

    static const ScalePreset& validated(const ScalePreset& p) {
        p.validate();
        return p;
    }
    static EncoderConfig encoder_cfg(const ScalePreset& p, const AblationFlags& fl) {
        EncoderConfig c = EncoderConfig::from_preset(p);
        if (fl.encoder_mode == EncoderMode::random_init) c.init = WeightInit::xavier_uniform;
        return c;
    }

    /// All parameters with module prefixes, in a fixed deterministic order.
    std::vector<std::pair<std::string, VarT<T>>> named_params() const {
        std::vector<std::pair<std::string, VarT<T>>> out;
        auto append = [&out](const std::string& prefix, const ParamStoreT<T>& ps) {
            for (const auto& [n, v] : ps.items) out.emplace_back(prefix + n, v);
        };
        append("mae.", mae.params);
        append("hlgn.", hlgn.params);
        append("llmn.ft.", ft.params);
        append("llmn.control.", control.params);
        append("unet.", unet.params);
        append("codec.", codec.params);
        return out;
    }

    /// Mark which parameters train in the given stage; returns them. In
    /// stages ii/iii the backbone U-Net and codec are always locked.
    std::vector<VarT<T>> configure_trainable(Stage stage) {
        std::vector<VarT<T>> train;
        for (auto& [name, v] : named_params()) {
            bool t = false;
            if (stage == Stage::calibrated_encoding) {
                t = name.rfind("mae.", 0) == 0;
            } else {
                if (name.rfind("mae.enc.", 0) == 0) t = flags.encoder_trainable();
                if (name.rfind("hlgn.main.", 0) == 0) t = true;
                if (name.rfind("hlgn.aux.", 0) == 0) t = flags.use_auxiliary;
                if (name.rfind("llmn.", 0) == 0) t = flags.use_llmn;
            }
            v->needs_grad = t;
            if (t) train.push_back(v);
        }
        return train;
    }

    void set_all_trainable(bool t) {
        for (auto& [name, v] : named_params()) v->needs_grad = t;
    }

    /// Encoder forward honouring the [CLS]-only ablation (token 0 broadcast
    /// over all positions before the conditioning branches consume it).
    VarT<T> encode_latent(GraphT<T>& g, VarT<T> surfaces) const {
        auto latent = mae.encode(g, surfaces);
        if (flags.encoder_mode == EncoderMode::cls_only) {
            auto cls = ops::slice(g, latent, 1, 0, 1);
            latent = ops::repeat_mid(g, cls, latent->val.dim(1));
        }
        return latent;
    }

    /// Semantic condition for a batch of latents (no CFG substitution).
    VarT<T> semantic_condition(GraphT<T>& g, VarT<T> latent) const {
        return hlgn.semantic_condition(g, latent, flags.use_auxiliary);
    }

    TensorT<T> image_to_latent(const TensorT<T>& images) const {
        TensorT<T> z = codec.encode_t(images);
        for (int64_t i = 0; i < z.numel(); ++i) z[i] *= latent_scale;
        return z;
    }
    TensorT<T> latent_to_image(const TensorT<T>& z) const {
        TensorT<T> zs = z;
        for (int64_t i = 0; i < zs.numel(); ++i) zs[i] /= latent_scale;
        return codec.decode_t(zs);
    }

    /// Reconstruct one image from a surface map with DDIM + classifier-free
    /// guidance. Pure function of (weights, options); safe to parallelize.
    ImageSample decode_sample(const SurfaceMap& surface, const DecodeOptions& opt) const {
        if (!(opt.alpha >= 0)) throw UsageError("decode: alpha must be >= 0");
        GraphT<T> g;  // conditioning graph (no gradients)
        auto surf = GraphT<T>::leaf(surface.pixels.template cast<T>().reshaped(
            {1, surface.pixels.dim(0), surface.pixels.dim(1)}));
        auto latent_hi = encode_latent(g, surf);
        TensorT<T> f_sem = semantic_condition(g, latent_hi)->val;  // [1, L_T, d_T]

        bool with_control = opt.use_llmn && flags.use_llmn;
        TensorT<T> seed_map;
        if (with_control) {
            VarT<T> latent_lo = latent_hi;
            if (opt.structural_source) {
                if (opt.structural_source->pixels.dim(0) != preset.surface_side)
                    throw ShapeError("decode: structural source preset mismatch");
                auto surf_b = GraphT<T>::leaf(opt.structural_source->pixels.template cast<T>()
                                                  .reshaped({1, preset.surface_side,
                                                             preset.surface_side}));
                latent_lo = encode_latent(g, surf_b);
            }
            seed_map = ft(g, latent_lo)->val;  // [1, c, h, w]
        }

        GuidanceConfig guide = GuidanceConfig::for_preset(preset, opt.guidance);
        TensorT<T> uncond({1, preset.text_tokens, preset.text_dim});
        for (int64_t i = 0; i < uncond.numel(); ++i)
            uncond[i] = static_cast<T>(guide.uncond[i]);

        auto predict = [&](const TensorT<T>& z, int t, const TensorT<T>& ctx) {
            GraphT<T> gg;
            auto zv = GraphT<T>::leaf(z);
            auto cv = GraphT<T>::leaf(ctx);
            std::vector<int> ts = {t};
            if (with_control) {
                auto sv = GraphT<T>::leaf(seed_map);
                auto maps = control.forward(gg, zv, sv, ts, cv);
                return unet.denoise(gg, zv, ts, cv, &maps, opt.alpha)->val;
            }
            return unet.denoise(gg, zv, ts, cv, nullptr, opt.alpha)->val;
        };

        EpsFn eps_fn = [&](const Tensor& z, int t) {
            TensorT<T> zt = z.template cast<T>().reshaped(
                {1, preset.latent_c, preset.latent_h, preset.latent_w});
            Tensor cond = predict(zt, t, f_sem).template cast<float>();
            if (guide.scale == 1.0)
                return cond.reshaped(z.shape());
            Tensor un = predict(zt, t, uncond).template cast<float>();
            return cfg_combine(un, cond, guide.scale).reshaped(z.shape());
        };

        Tensor z0 = ddim_sample(eps_fn, sched,
                                {static_cast<int64_t>(preset.latent_c), preset.latent_h,
                                 preset.latent_w},
                                opt.steps, opt.seed);
        TensorT<T> img = latent_to_image(
            z0.template cast<T>().reshaped({1, preset.latent_c, preset.latent_h, preset.latent_w}));
        return to_image(img.template cast<float>().reshaped(
            {3, preset.image_side, preset.image_side}));
    }
};

using Pipeline = PipelineT<float>;

/// Composite objective L = L_dif + lambda * L_sem.
template <class T>
VarT<T> total_loss(GraphT<T>& g, VarT<T> l_dif, VarT<T> l_sem, double lambda) {
    if (!(lambda >= 0)) throw UsageError("total_loss: lambda must be >= 0");
    if (!l_dif->val.all_finite() || !l_sem->val.all_finite())
        throw DivergenceError("total_loss: non-finite input");
    return ops::add(g, l_dif, ops::scale(g, l_sem, lambda));
}

}  // namespace f2i
