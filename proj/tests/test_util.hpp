#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "f2i/core/autodiff.hpp"
#include "f2i/core/rng.hpp"

namespace testutil {

using f2i::GraphT;
using f2i::Rng;
using f2i::TensorD;
using f2i::VarT;

inline TensorD randn(Rng& rng, std::vector<int64_t> shape, double std = 1.0) {
    TensorD t(std::move(shape));
    rng.fill_normal(t, 0.0, std);
    return t;
}

/// Central finite difference of a scalar-valued rebuild function w.r.t. one
/// element of a leaf tensor.
inline double numeric_grad(const std::function<double()>& f, f2i::VarT<double> leaf, int64_t idx,
                           double h = 1e-5) {
    double orig = leaf->val[idx];
    leaf->val[idx] = orig + h;
    double fp = f();
    leaf->val[idx] = orig - h;
    double fm = f();
    leaf->val[idx] = orig;
    return (fp - fm) / (2.0 * h);
}

inline double rel_err(double a, double b, double floor = 1e-7) {
    double denom = std::max({std::fabs(a), std::fabs(b), floor});
    return std::fabs(a - b) / denom;
}

/// Checks autodiff gradients of `build` (a scalar-graph rebuild) against
/// central differences for `n_samples` elements of each leaf. Returns the
/// worst relative error.
inline double check_gradients(const std::function<double(bool)>& rebuild,
                              const std::vector<f2i::VarT<double>>& leaves, Rng& rng,
                              int n_samples = 8, double h = 1e-5) {
    for (auto& l : leaves) l->zero_grad();
    rebuild(true);  // with backward
    double worst = 0;
    for (auto& leaf : leaves) {
        for (int s = 0; s < n_samples; ++s) {
            int64_t idx = leaf->val.numel() == 1 ? 0 : rng.below(leaf->val.numel());
            double g_ad = leaf->has_grad() ? leaf->grad[idx] : 0.0;
            double g_fd = numeric_grad([&] { return rebuild(false); }, leaf, idx, h);
            worst = std::max(worst, rel_err(g_ad, g_fd, 1e-6));
        }
    }
    return worst;
}

}  // namespace testutil
