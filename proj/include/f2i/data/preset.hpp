#pragma once

#include <string>
#include <vector>

namespace f2i {

/// A named bundle of every dimensional hyperparameter. Two built-ins:
/// `full` (production-scale values) and `desk` (small enough that the whole
/// pipeline trains and samples on one CPU).
struct ScalePreset {
    std::string name;

    // surface maps / calibrated encoder
    int surface_side = 64;
    int patch_size = 8;
    int enc_depth = 4;
    int enc_heads = 4;
    int d_r = 128;

    // images / codec / latent space
    int image_side = 64;
    int latent_c = 4, latent_h = 8, latent_w = 8;
    std::vector<int> codec_channels = {16, 32, 32};

    // text-condition space
    int text_tokens = 8;  // L_T
    int text_dim = 32;    // d_T

    // low-level feature transform target (ft_tokens * ft_dim == c*h*w)
    int ft_tokens = 8;
    int ft_dim = 32;

    // denoiser U-Net
    int unet_base = 32;
    std::vector<int> unet_mult = {1, 2, 2, 2};
    int unet_res_blocks = 2;
    std::vector<int> unet_attn_levels = {0, 1, 2};
    int unet_head_dim = 16;

    // noise schedule
    int timesteps = 200;
    double beta_start = 1e-4;
    double beta_end = 0.05;

    int tokens() const {  // L_r
        int q = surface_side / patch_size;
        return q * q + 1;
    }

    static ScalePreset desk();
    static ScalePreset full();
    static ScalePreset by_name(const std::string& name);

    /// Throws on internally inconsistent presets (divisibility, reshape
    /// feasibility, attention head arithmetic).
    void validate() const;
};

}  // namespace f2i
