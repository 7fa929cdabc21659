#pragma once

#include <vector>

#include "f2i/core/rng.hpp"
#include "f2i/core/tensor.hpp"
#include "f2i/data/preset.hpp"

namespace f2i {

/// Linear-beta forward process. alpha_bar[t] is strictly decreasing with
/// alpha_bar[0] >= 0.999 and alpha_bar[T-1] <= 0.01 for the built-in presets.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;
    std::vector<double> alpha_bar;

    static NoiseSchedule linear(int T, double beta_start, double beta_end);
    static NoiseSchedule from_preset(const ScalePreset& p) {
        return linear(p.timesteps, p.beta_start, p.beta_end);
    }

    double ab(int t) const;
    void validate() const;
};

/// z_t = sqrt(ab_t) z_0 + sqrt(1 - ab_t) eps.
Tensor add_noise(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& s);

/// Batched variant with one timestep per sample (z0 [N, ...]).
Tensor add_noise_batch(const Tensor& z0, const std::vector<int>& ts, const Tensor& eps,
                       const NoiseSchedule& s);

}  // namespace f2i
