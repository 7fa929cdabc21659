#pragma once

#include <string>
#include <vector>

#include "f2i/core/nn.hpp"
#include "f2i/data/preset.hpp"
#include "f2i/data/types.hpp"

namespace f2i {

struct CodecConfig {
    int image_side = 64;
    std::vector<int> channels = {16, 32, 32};  // one stride-2 stage per entry
    int latent_c = 4;

    static CodecConfig from_preset(const ScalePreset& p) {
        return {p.image_side, p.codec_channels, p.latent_c};
    }
    int latent_side() const {
        int s = image_side;
        for (size_t i = 0; i < channels.size(); ++i) s /= 2;
        return s;
    }
};

/// Small strided convolutional autoencoder between pixel and latent space,
/// trained with plain MSE. decode() is unclamped; clamp at image export.
template <class T>
struct CodecT {
    CodecConfig cfg;
    ParamStoreT<T> params;

    nn::Conv2dT<T> enc_in;
    std::vector<nn::GroupNormT<T>> enc_gn;
    std::vector<nn::Conv2dT<T>> enc_down;
    nn::GroupNormT<T> enc_out_gn;
    nn::Conv2dT<T> enc_out;

    nn::Conv2dT<T> dec_in;
    std::vector<nn::GroupNormT<T>> dec_gn;
    std::vector<nn::Conv2dT<T>> dec_up;
    nn::GroupNormT<T> dec_out_gn;
    nn::Conv2dT<T> dec_out;

    CodecT(const CodecConfig& c, Rng& rng) : cfg(c) {
        const auto& ch = cfg.channels;
        int K = static_cast<int>(ch.size());
        enc_in = nn::Conv2dT<T>(params, "enc.in", rng, 3, ch[0], 3, 1, 1);
        for (int i = 0; i < K; ++i) {
            int cin = ch[static_cast<size_t>(std::max(i - 1, 0))];
            enc_gn.emplace_back(params, "enc.gn" + std::to_string(i), cin, nn::norm_groups(cin));
            enc_down.emplace_back(params, "enc.down" + std::to_string(i), rng, cin,
                                  ch[static_cast<size_t>(i)], 3, 2, 1);
        }
        enc_out_gn = nn::GroupNormT<T>(params, "enc.ogn", ch[static_cast<size_t>(K - 1)],
                                       nn::norm_groups(ch[static_cast<size_t>(K - 1)]));
        enc_out = nn::Conv2dT<T>(params, "enc.out", rng, ch[static_cast<size_t>(K - 1)],
                                 cfg.latent_c, 3, 1, 1);

        dec_in = nn::Conv2dT<T>(params, "dec.in", rng, cfg.latent_c, ch[static_cast<size_t>(K - 1)],
                                3, 1, 1);
        for (int i = K - 1; i >= 0; --i) {
            int cin = ch[static_cast<size_t>(i)];
            int cout = ch[static_cast<size_t>(std::max(i - 1, 0))];
            dec_gn.emplace_back(params, "dec.gn" + std::to_string(i), cin, nn::norm_groups(cin));
            dec_up.emplace_back(params, "dec.up" + std::to_string(i), rng, cin, cout, 3, 1, 1);
        }
        dec_out_gn = nn::GroupNormT<T>(params, "dec.ogn", ch[0], nn::norm_groups(ch[0]));
        dec_out = nn::Conv2dT<T>(params, "dec.out", rng, ch[0], 3, 3, 1, 1);
    }

    /// [N,3,S,S] -> [N,c,h,w]
    VarT<T> encode(GraphT<T>& g, VarT<T> img) const {
        if (img->val.rank() != 4 || img->val.dim(1) != 3 || img->val.dim(2) != cfg.image_side)
            throw ShapeError("codec.encode: expected [N,3," + std::to_string(cfg.image_side) +
                             ",...], got " + TensorT<T>::shape_str(img->val.shape()));
        auto h = enc_in(g, img);
        for (size_t i = 0; i < enc_down.size(); ++i)
            h = enc_down[i](g, ops::silu(g, enc_gn[i](g, h)));
        return enc_out(g, ops::silu(g, enc_out_gn(g, h)));
    }

    /// [N,c,h,w] -> [N,3,S,S] (values unclamped)
    VarT<T> decode(GraphT<T>& g, VarT<T> z) const {
        if (z->val.rank() != 4 || z->val.dim(1) != cfg.latent_c ||
            z->val.dim(2) != cfg.latent_side())
            throw ShapeError("codec.decode: latent shape mismatch, got " +
                             TensorT<T>::shape_str(z->val.shape()));
        auto h = dec_in(g, z);
        for (size_t i = 0; i < dec_up.size(); ++i)
            h = dec_up[i](g, ops::upsample2x(g, ops::silu(g, dec_gn[i](g, h))));
        return dec_out(g, ops::silu(g, dec_out_gn(g, h)));
    }

    TensorT<T> encode_t(const TensorT<T>& img) const {
        GraphT<T> g;
        return encode(g, GraphT<T>::leaf(img))->val;
    }
    TensorT<T> decode_t(const TensorT<T>& z) const {
        GraphT<T> g;
        return decode(g, GraphT<T>::leaf(z))->val;
    }
};

using Codec = CodecT<float>;

/// Clamp a decoded raster into a valid ImageSample.
inline ImageSample to_image(const Tensor& rgb) {
    ImageSample img;
    img.rgb = rgb;
    for (int64_t i = 0; i < img.rgb.numel(); ++i)
        img.rgb[i] = std::min(1.0f, std::max(0.0f, img.rgb[i]));
    return img;
}

}  // namespace f2i
