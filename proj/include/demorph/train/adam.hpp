// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file adam.hpp
 * @brief Adam with bias correction over named parameter lists.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "demorph/core/error.hpp"
#include "demorph/nn/tape.hpp"

namespace demorph::train {

class Adam {
public:
    Adam() = default;
    Adam(double lr, double beta1, double beta2, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        if (lr <= 0.0) throw ValidationError("Adam: lr must be positive");
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw ValidationError("Adam: betas must be in [0,1)");
    }

    /// One update over the given parameters from their accumulated grads.
    void step(const std::vector<nn::NamedParam>& params) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (const auto& np : params) {
            nn::Parameter& p = *np.param;
            for (std::size_t i = 0; i < p.value.numel(); ++i) {
                double g = p.grad[i];
                double m = beta1_ * p.m[i] + (1.0 - beta1_) * g;
                double v = beta2_ * p.v[i] + (1.0 - beta2_) * g * g;
                p.m[i] = static_cast<float>(m);
                p.v[i] = static_cast<float>(v);
                double update = lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_);
                p.value[i] = static_cast<float>(p.value[i] - update);
            }
        }
    }

    std::uint64_t step_count() const { return t_; }
    void set_step_count(std::uint64_t t) { t_ = t; }
    double lr() const { return lr_; }

private:
    double lr_ = 1e-4, beta1_ = 0.5, beta2_ = 0.999, eps_ = 1e-8;
    std::uint64_t t_ = 0;
};

inline void zero_grads(const std::vector<nn::NamedParam>& params) {
    for (const auto& np : params) np.param->zero_grad();
}

} // namespace demorph::train
