#include "f2i/data/preset.hpp"

#include "f2i/core/errors.hpp"

namespace f2i {

ScalePreset ScalePreset::desk() {
    ScalePreset p;
    p.name = "desk";
    return p;  // struct defaults are the desk values
}

ScalePreset ScalePreset::full() {
    ScalePreset p;
    p.name = "full";
    p.surface_side = 256;
    p.patch_size = 16;
    p.enc_depth = 24;
    p.enc_heads = 16;
    p.d_r = 1024;
    p.image_side = 512;
    p.latent_c = 4;
    p.latent_h = 64;
    p.latent_w = 64;
    p.codec_channels = {64, 128, 256};
    p.text_tokens = 77;
    p.text_dim = 1024;
    p.ft_tokens = 64;
    p.ft_dim = 256;
    p.unet_base = 320;
    p.unet_mult = {1, 2, 4, 4};
    p.unet_res_blocks = 2;
    p.unet_attn_levels = {1, 2, 3};
    p.unet_head_dim = 64;
    p.timesteps = 1000;
    p.beta_start = 8.5e-4;
    p.beta_end = 0.012;
    return p;
}

ScalePreset ScalePreset::by_name(const std::string& name) {
    if (name == "desk") return desk();
    if (name == "full") return full();
    throw UsageError("unknown preset: " + name);
}

void ScalePreset::validate() const {
    if (surface_side % patch_size != 0)
        throw DataError("preset: surface side not divisible by patch size");
    if (d_r % enc_heads != 0) throw DataError("preset: d_r not divisible by heads");
    if (static_cast<int64_t>(ft_tokens) * ft_dim !=
        static_cast<int64_t>(latent_c) * latent_h * latent_w)
        throw DataError("preset: feature transform target not reshapeable to latent");
    int downs = static_cast<int>(codec_channels.size());
    int side = image_side;
    for (int i = 0; i < downs; ++i) side /= 2;
    if (side != latent_h || latent_h != latent_w)
        throw DataError("preset: codec downsampling does not reach latent side");
    int s = latent_h;
    for (size_t l = 0; l + 1 < unet_mult.size(); ++l) {
        if (s % 2 != 0) throw DataError("preset: U-Net level side not divisible by 2");
        s /= 2;
    }
    for (int lvl : unet_attn_levels)
        if (lvl < 0 || lvl >= static_cast<int>(unet_mult.size()))
            throw DataError("preset: attention level out of range");
    for (int m : unet_mult)
        if ((unet_base * m) % unet_head_dim != 0)
            throw DataError("preset: U-Net channels not divisible by head dim");
    if (timesteps < 2) throw DataError("preset: timesteps too small");
    if (!(beta_start > 0 && beta_end > beta_start && beta_end < 1))
        throw DataError("preset: bad beta range");
}

}  // namespace f2i
