#pragma once

#include <cmath>
#include <vector>

#include "f2i/core/autodiff.hpp"

namespace f2i {

/// AdamW with decoupled weight decay. Moments live in the scalar type of the
/// parameters, so checkpoint round-trips are bit-exact.
template <class T>
class AdamWT {
  public:
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    explicit AdamWT(std::vector<VarT<T>> params, double lr_ = 1e-4, double wd = 0.01)
        : lr(lr_), weight_decay(wd), params_(std::move(params)) {
        for (const auto& p : params_) {
            m_.push_back(TensorT<T>::zeros(p->val.shape()));
            v_.push_back(TensorT<T>::zeros(p->val.shape()));
        }
    }

    void step() {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i]->val;
            auto& m = m_[i];
            auto& v = v_[i];
            const bool has_g = params_[i]->has_grad();
            for (int64_t j = 0; j < p.numel(); ++j) {
                double gj = has_g ? static_cast<double>(params_[i]->grad[j]) : 0.0;
                double mj = beta1 * m[j] + (1.0 - beta1) * gj;
                double vj = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                m[j] = static_cast<T>(mj);
                v[j] = static_cast<T>(vj);
                double mhat = mj / bc1;
                double vhat = vj / bc2;
                p[j] = static_cast<T>(p[j] - lr * (mhat / (std::sqrt(vhat) + eps) +
                                                   weight_decay * p[j]));
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p->zero_grad();
    }

    const std::vector<VarT<T>>& params() const { return params_; }
    int64_t steps_taken() const { return t_; }
    void set_steps_taken(int64_t t) { t_ = t; }
    std::vector<TensorT<T>>& moments_m() { return m_; }
    std::vector<TensorT<T>>& moments_v() { return v_; }

  private:
    std::vector<VarT<T>> params_;
    std::vector<TensorT<T>> m_, v_;
    int64_t t_ = 0;
};

using AdamW = AdamWT<float>;

}  // namespace f2i
