// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file layers.hpp
 * @brief Parameter-holding building blocks used by the generator and
 * discriminator: convolution, group/instance norm, linear projections.
 */

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "demorph/core/rng.hpp"
#include "demorph/nn/ops.hpp"
#include "demorph/nn/tape.hpp"

namespace demorph::nn {

inline void init_normal(Tensor& t, Rng& rng, double std_dev) {
    for (std::size_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<float>(rng.normal() * std_dev);
}

struct Conv2dLayer {
    Parameter w, b;
    int stride = 1, pad = 1;

    Conv2dLayer() = default;
    Conv2dLayer(int c_in, int c_out, int k, int stride_, int pad_)
        : w({c_out, c_in, k, k}), b({c_out}), stride(stride_), pad(pad_) {}

    void init(Rng& rng) {
        // Kaiming-style fan-in scaling
        int fan_in = w.value.dim(1) * w.value.dim(2) * w.value.dim(3);
        init_normal(w.value, rng, std::sqrt(2.0 / fan_in));
        b.value.zero();
    }

    Var operator()(Tape& t, Var x) {
        return conv2d(t, x, t.leaf(w), t.leaf(b), stride, pad);
    }

    void collect(std::vector<NamedParam>& out, const std::string& prefix) {
        out.push_back({prefix + ".w", &w});
        out.push_back({prefix + ".b", &b});
    }
};

struct GroupNormLayer {
    Parameter gamma, beta;
    int groups = 1;

    GroupNormLayer() = default;
    GroupNormLayer(int channels, int groups_) : gamma({channels}), beta({channels}), groups(groups_) {
        gamma.value.fill(1.0f);
        beta.value.zero();
    }

    Var operator()(Tape& t, Var x) {
        return group_norm(t, x, t.leaf(gamma), t.leaf(beta), groups);
    }

    void collect(std::vector<NamedParam>& out, const std::string& prefix) {
        out.push_back({prefix + ".gamma", &gamma});
        out.push_back({prefix + ".beta", &beta});
    }
};

/// Linear map over the last axis (context projections).
struct LinearLayer {
    Parameter w; // [in, out]

    LinearLayer() = default;
    LinearLayer(int in, int out) : w({in, out}) {}

    void init(Rng& rng) {
        init_normal(w.value, rng, std::sqrt(1.0 / w.value.dim(0)));
    }

    Var operator()(Tape& t, Var x) { return matmul_rowwise(t, x, t.leaf(w)); }

    void collect(std::vector<NamedParam>& out, const std::string& prefix) {
        out.push_back({prefix + ".w", &w});
    }
};

} // namespace demorph::nn
