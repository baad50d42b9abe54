#pragma once

#include <cmath>
#include <vector>

#include "dal/tensor.hpp"

namespace dal::ad {

// Adam with bias correction. Parameters are captured as shared-buffer tensors,
// so updates land in the same storage the model forward passes read from.
template <class T>
class Adam {
public:
    explicit Adam(std::vector<Tensor<T>> params, T lr = T(1e-3), T beta1 = T(0.9),
                  T beta2 = T(0.999), T eps = T(1e-8))
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& p : params_)
            check(p.requires_grad(), "adam: every parameter must track gradients");
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(static_cast<size_t>(params_[i].numel()), T(0));
            v_[i].assign(static_cast<size_t>(params_[i].numel()), T(0));
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    void step() {
        ++t_;
        const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1_), t_));
        const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2_), t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            Tensor<T>& p = params_[i];
            if (!p.has_grad()) continue; // not part of this step's graph
            const auto g = p.grad();
            T* w = p.ptr();
            for (size_t j = 0; j < g.size(); ++j) {
                m_[i][j] = beta1_ * m_[i][j] + (T(1) - beta1_) * g[j];
                v_[i][j] = beta2_ * v_[i][j] + (T(1) - beta2_) * g[j] * g[j];
                const T mhat = m_[i][j] / bc1;
                const T vhat = v_[i][j] / bc2;
                w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    int64_t steps() const { return t_; }

private:
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<T>> m_, v_;
    T lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

} // namespace dal::ad
