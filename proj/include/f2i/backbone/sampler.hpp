#pragma once

#include <functional>
#include <vector>

#include "f2i/backbone/schedule.hpp"
#include "f2i/core/rng.hpp"
#include "f2i/data/preset.hpp"

namespace f2i {

/// Classifier-free-guidance setup; uncond is the fixed "empty caption"
/// embedding fed in place of the semantic condition.
struct GuidanceConfig {
    double scale = 5.0;
    Tensor uncond;  // [L_T, d_T]

    static GuidanceConfig for_preset(const ScalePreset& p, double scale = 5.0) {
        GuidanceConfig g;
        g.scale = scale;
        g.uncond = Tensor::zeros({p.text_tokens, p.text_dim});
        if (!(scale >= 0.0)) throw UsageError("guidance: scale must be >= 0");
        return g;
    }
};

/// eps_uncond + s * (eps_cond - eps_uncond), elementwise. s == 1 returns the
/// conditional prediction verbatim, so guided sampling at s = 1 is bit-equal
/// to purely conditional sampling.
inline Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double s) {
    if (!eps_uncond.same_shape(eps_cond)) throw ShapeError("cfg: shape mismatch");
    if (s == 1.0) return eps_cond;
    Tensor out = eps_uncond;
    float fs = static_cast<float>(s);
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = eps_uncond[i] + fs * (eps_cond[i] - eps_uncond[i]);
    return out;
}

/// Evenly spaced sub-schedule 0 .. T-1 (ascending, strictly increasing).
inline std::vector<int> ddim_timesteps(int T, int steps) {
    if (steps < 1 || steps > T) throw UsageError("ddim: steps must be in 1..T");
    std::vector<int> ts(static_cast<size_t>(steps));
    if (steps == 1) {
        ts[0] = T - 1;
        return ts;
    }
    for (int i = 0; i < steps; ++i)
        ts[static_cast<size_t>(i)] =
            static_cast<int>((static_cast<int64_t>(i) * (T - 1)) / (steps - 1));
    return ts;
}

/// Noise predictor under fixed conditioning; the caller bakes in the
/// semantic condition, control features and guidance.
using EpsFn = std::function<Tensor(const Tensor& z_t, int t)>;

/// Deterministic DDIM (eta = 0) from seeded Gaussian noise.
inline Tensor ddim_sample(const EpsFn& eps_fn, const NoiseSchedule& sched,
                          const std::vector<int64_t>& latent_shape, int steps, uint64_t seed) {
    auto ts = ddim_timesteps(sched.T, steps);
    Tensor z(latent_shape);
    Rng rng = Rng::keyed(seed, 0x0dd1, 0);
    rng.fill_normal(z);
    for (int i = steps - 1; i >= 0; --i) {
        int t = ts[static_cast<size_t>(i)];
        double ab_t = sched.ab(t);
        double ab_prev = i > 0 ? sched.ab(ts[static_cast<size_t>(i - 1)]) : 1.0;
        Tensor eps = eps_fn(z, t);
        if (!eps.same_shape(z)) throw ShapeError("ddim: eps shape mismatch");
        double sa = std::sqrt(ab_t), sb = std::sqrt(1.0 - ab_t);
        double pa = std::sqrt(ab_prev), pb = std::sqrt(1.0 - ab_prev);
        for (int64_t j = 0; j < z.numel(); ++j) {
            double x0 = (z[j] - sb * eps[j]) / sa;
            z[j] = static_cast<float>(pa * x0 + pb * eps[j]);
        }
    }
    return z;
}

}  // namespace f2i
