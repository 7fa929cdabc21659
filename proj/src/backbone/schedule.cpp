#include "f2i/backbone/schedule.hpp"

#include <cmath>

#include "f2i/core/errors.hpp"

namespace f2i {

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
    NoiseSchedule s;
    s.T = T;
    s.betas.resize(static_cast<size_t>(T));
    s.alpha_bar.resize(static_cast<size_t>(T));
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        double beta = T == 1 ? beta_start
                             : beta_start + (beta_end - beta_start) * t / static_cast<double>(T - 1);
        s.betas[static_cast<size_t>(t)] = beta;
        prod *= 1.0 - beta;
        s.alpha_bar[static_cast<size_t>(t)] = prod;
    }
    s.validate();
    return s;
}

double NoiseSchedule::ab(int t) const {
    if (t < 0 || t >= T) throw DataError("schedule: t out of range: " + std::to_string(t));
    return alpha_bar[static_cast<size_t>(t)];
}

void NoiseSchedule::validate() const {
    if (T < 1) throw DataError("schedule: empty");
    for (int t = 0; t < T; ++t) {
        double a = alpha_bar[static_cast<size_t>(t)];
        if (!(a > 0.0 && a <= 1.0)) throw DataError("schedule: alpha_bar out of (0,1]");
        if (t > 0 && !(a < alpha_bar[static_cast<size_t>(t - 1)]))
            throw DataError("schedule: alpha_bar not strictly decreasing");
    }
}

Tensor add_noise(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& s) {
    if (!z0.same_shape(eps)) throw ShapeError("add_noise: eps shape mismatch");
    double ab = s.ab(t);
    float a = static_cast<float>(std::sqrt(ab));
    float b = static_cast<float>(std::sqrt(1.0 - ab));
    Tensor out = z0;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a * z0[i] + b * eps[i];
    return out;
}

Tensor add_noise_batch(const Tensor& z0, const std::vector<int>& ts, const Tensor& eps,
                       const NoiseSchedule& s) {
    if (!z0.same_shape(eps)) throw ShapeError("add_noise: eps shape mismatch");
    int64_t N = z0.dim(0);
    if (static_cast<int64_t>(ts.size()) != N) throw ShapeError("add_noise: t count mismatch");
    int64_t per = z0.numel() / N;
    Tensor out = z0;
    for (int64_t n = 0; n < N; ++n) {
        double ab = s.ab(ts[static_cast<size_t>(n)]);
        float a = static_cast<float>(std::sqrt(ab));
        float b = static_cast<float>(std::sqrt(1.0 - ab));
        for (int64_t i = n * per; i < (n + 1) * per; ++i) out[i] = a * z0[i] + b * eps[i];
    }
    return out;
}

}  // namespace f2i
