// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

// Finite-difference oracles for the autodiff engine. Every op that the
// generator or discriminator touches gets its gradient checked against a
// central difference of a scalar projection of the op output.

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "demorph/nn/layers.hpp"
#include "demorph/nn/ops.hpp"

using namespace demorph;
using namespace demorph::nn;

namespace {

struct GradCheck {
    std::function<Var(Tape&, std::vector<Var>&)> fn;
    std::vector<Tensor> inputs;
    double eps = 2e-3;
    double rel_tol = 4e-2;
    double abs_tol = 2e-3;

    double loss(const std::vector<Tensor>& xs, const std::vector<float>& w) {
        Tape t;
        std::vector<Var> vars;
        for (const auto& x : xs) vars.push_back(t.constant(x));
        Var out = fn(t, vars);
        double acc = 0.0;
        for (std::size_t i = 0; i < out->val().numel(); ++i) acc += out->val()[i] * w[i];
        return acc;
    }

    void run() {
        Rng rng(99);
        Tape t;
        std::vector<Var> vars;
        for (const auto& x : inputs) vars.push_back(t.input(x));
        Var out = fn(t, vars);
        std::vector<float> w(out->val().numel());
        for (auto& v : w) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        Tensor wt({static_cast<int>(w.size())}, w);
        Var flat = reshape(t, out, {static_cast<int>(w.size())});
        Var prod = mul(t, flat, t.constant(wt));
        Var l = mean_all(t, prod);
        t.backward(l);
        const double scale = static_cast<double>(w.size()); // undo the mean

        for (std::size_t vi = 0; vi < inputs.size(); ++vi) {
            for (std::size_t i = 0; i < inputs[vi].numel(); ++i) {
                std::vector<Tensor> xs = inputs;
                xs[vi][i] += static_cast<float>(eps);
                double up = loss(xs, w);
                xs[vi][i] -= static_cast<float>(2 * eps);
                double dn = loss(xs, w);
                double fd = (up - dn) / (2 * eps);
                double an = static_cast<double>(vars[vi]->grd()[i]) * scale;
                double tol = abs_tol + rel_tol * std::max(std::abs(fd), std::abs(an));
                ASSERT_NEAR(an, fd, tol) << "input " << vi << " element " << i;
            }
        }
    }
};

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::uninit(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

} // namespace

TEST(NnOps, ConvGradientMatchesFiniteDifference) {
    Rng rng(7);
    GradCheck gc;
    gc.inputs = {random_tensor({2, 3, 6, 6}, rng), random_tensor({4, 3, 3, 3}, rng),
                 random_tensor({4}, rng)};
    gc.fn = [](Tape& t, std::vector<Var>& v) { return conv2d(t, v[0], v[1], v[2], 1, 1); };
    gc.run();
}

TEST(NnOps, StridedConvGradient) {
    Rng rng(8);
    GradCheck gc;
    gc.inputs = {random_tensor({2, 4, 6, 6}, rng), random_tensor({3, 4, 3, 3}, rng),
                 random_tensor({3}, rng)};
    gc.fn = [](Tape& t, std::vector<Var>& v) { return conv2d(t, v[0], v[1], v[2], 2, 1); };
    gc.run();
}

TEST(NnOps, OneByOneConvGradient) {
    Rng rng(9);
    GradCheck gc;
    gc.inputs = {random_tensor({2, 4, 5, 5}, rng), random_tensor({2, 4, 1, 1}, rng),
                 random_tensor({2}, rng)};
    gc.fn = [](Tape& t, std::vector<Var>& v) { return conv2d(t, v[0], v[1], v[2], 1, 0); };
    gc.run();
}

TEST(NnOps, GroupNormGradient) {
    Rng rng(10);
    GradCheck gc;
    gc.inputs = {random_tensor({2, 4, 3, 3}, rng), random_tensor({4}, rng, 0.5, 1.5),
                 random_tensor({4}, rng)};
    gc.fn = [](Tape& t, std::vector<Var>& v) { return group_norm(t, v[0], v[1], v[2], 2); };
    gc.eps = 1e-2; // normalization amplifies FD noise
    gc.rel_tol = 6e-2;
    gc.abs_tol = 6e-3;
    gc.run();
}

TEST(NnOps, FusedGroupNormSiluGradient) {
    Rng rng(11);
    GradCheck gc;
    gc.inputs = {random_tensor({2, 4, 3, 3}, rng), random_tensor({4}, rng, 0.5, 1.5),
                 random_tensor({4}, rng)};
    gc.fn = [](Tape& t, std::vector<Var>& v) {
        Rng no_drop(0);
        return group_norm_silu_dropout(t, v[0], v[1], v[2], 2, 0.0f, no_drop);
    };
    gc.eps = 1e-2;
    gc.rel_tol = 6e-2;
    gc.abs_tol = 6e-3;
    gc.run();
}

TEST(NnOps, FusedEqualsUnfusedForward) {
    Rng rng(12);
    Tensor x = random_tensor({2, 8, 4, 4}, rng);
    Tensor g = random_tensor({8}, rng, 0.5, 1.5);
    Tensor b = random_tensor({8}, rng);
    Tape t;
    Rng no_drop(0);
    Var fused = group_norm_silu_dropout(t, t.constant(x), t.constant(g), t.constant(b), 4, 0.0f,
                                        no_drop);
    Var plain = silu(t, group_norm(t, t.constant(x), t.constant(g), t.constant(b), 4));
    for (std::size_t i = 0; i < fused->val().numel(); ++i)
        EXPECT_NEAR(fused->val()[i], plain->val()[i], 1e-6f);
}

TEST(NnOps, SoftmaxGradient) {
    Rng rng(13);
    GradCheck gc;
    gc.inputs = {random_tensor({2, 3, 5}, rng)};
    gc.fn = [](Tape& t, std::vector<Var>& v) { return softmax_last(t, v[0]); };
    gc.run();
}

TEST(NnOps, BmmGradient) {
    Rng rng(14);
    GradCheck gc;
    gc.inputs = {random_tensor({2, 3, 4}, rng), random_tensor({2, 4, 5}, rng)};
    gc.fn = [](Tape& t, std::vector<Var>& v) { return bmm(t, v[0], v[1]); };
    gc.run();
}

TEST(NnOps, MatmulRowwiseGradient) {
    Rng rng(15);
    GradCheck gc;
    gc.inputs = {random_tensor({2, 3, 4}, rng), random_tensor({4, 5}, rng)};
    gc.fn = [](Tape& t, std::vector<Var>& v) { return matmul_rowwise(t, v[0], v[1]); };
    gc.run();
}

TEST(NnOps, ActivationGradients) {
    Rng rng(16);
    for (auto make : {+[](Tape& t, std::vector<Var>& v) { return sigmoid(t, v[0]); },
                      +[](Tape& t, std::vector<Var>& v) { return silu(t, v[0]); },
                      +[](Tape& t, std::vector<Var>& v) { return leaky_relu(t, v[0], 0.2f); }}) {
        GradCheck gc;
        gc.inputs = {random_tensor({2, 2, 3, 3}, rng)};
        gc.fn = make;
        gc.run();
    }
}

TEST(NnOps, UpsampleConcatSliceTransposeGradients) {
    Rng rng(17);
    {
        GradCheck gc;
        gc.inputs = {random_tensor({1, 2, 3, 3}, rng)};
        gc.fn = [](Tape& t, std::vector<Var>& v) { return upsample_nearest2x(t, v[0]); };
        gc.run();
    }
    {
        GradCheck gc;
        gc.inputs = {random_tensor({2, 2, 3, 3}, rng), random_tensor({2, 3, 3, 3}, rng)};
        gc.fn = [](Tape& t, std::vector<Var>& v) { return concat_ch(t, v[0], v[1]); };
        gc.run();
    }
    {
        GradCheck gc;
        gc.inputs = {random_tensor({2, 4, 3, 3}, rng)};
        gc.fn = [](Tape& t, std::vector<Var>& v) { return slice_ch(t, v[0], 1, 3); };
        gc.run();
    }
    {
        GradCheck gc;
        gc.inputs = {random_tensor({2, 3, 4}, rng)};
        gc.fn = [](Tape& t, std::vector<Var>& v) { return transpose12(t, v[0]); };
        gc.run();
    }
}

TEST(NnOps, ReductionGradients) {
    Rng rng(18);
    {
        GradCheck gc;
        gc.inputs = {random_tensor({2, 2, 2, 2}, rng)};
        gc.fn = [](Tape& t, std::vector<Var>& v) { return mean_per_sample(t, v[0]); };
        gc.run();
    }
    {
        // operands kept apart so the central difference stays off the L1 kink
        GradCheck gc;
        gc.inputs = {random_tensor({2, 2, 2, 2}, rng, 0.5, 1.0),
                     random_tensor({2, 2, 2, 2}, rng, -1.0, -0.5)};
        gc.fn = [](Tape& t, std::vector<Var>& v) { return l1_per_sample(t, v[0], v[1]); };
        gc.run();
    }
    {
        GradCheck gc;
        gc.inputs = {random_tensor({4}, rng, 0.0, 0.4), random_tensor({4}, rng, 0.6, 1.0)};
        gc.fn = [](Tape& t, std::vector<Var>& v) { return min_ew(t, v[0], v[1]); };
        gc.run();
    }
}

TEST(NnOps, DropoutScalesAndMasks) {
    Tensor x({1, 1, 50, 50});
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = 1.0f;
    Tape t;
    Rng stream(5);
    Var y = dropout(t, t.constant(x), 0.25f, stream);
    int dropped = 0;
    for (std::size_t i = 0; i < y->val().numel(); ++i) {
        float v = y->val()[i];
        EXPECT_TRUE(v == 0.0f || std::abs(v - 1.0f / 0.75f) < 1e-6f);
        if (v == 0.0f) ++dropped;
    }
    EXPECT_NEAR(dropped / 2500.0, 0.25, 0.05);

    Tape t2;
    Rng s1(5), s2(5);
    Var a = dropout(t2, t2.constant(x), 0.25f, s1);
    Var b = dropout(t2, t2.constant(x), 0.25f, s2);
    EXPECT_TRUE(a->val() == b->val());
}

TEST(NnOps, BackwardTwiceThrows) {
    Tape t;
    Tensor x({2});
    x[0] = 1.0f;
    x[1] = 2.0f;
    Var v = t.input(x);
    Var m = mean_all(t, v);
    t.backward(m);
    EXPECT_THROW(t.backward(m), ValidationError);
}

TEST(NnOps, ShapeValidation) {
    Tape t;
    Rng rng(1);
    Var a = t.constant(random_tensor({1, 2, 3, 3}, rng));
    Var b = t.constant(random_tensor({1, 3, 3, 3}, rng));
    EXPECT_THROW(add(t, a, b), ValidationError);
    EXPECT_THROW(slice_ch(t, a, 1, 5), ValidationError);
    Var w = t.constant(random_tensor({4, 5, 3, 3}, rng));
    Var bias = t.constant(random_tensor({4}, rng));
    EXPECT_THROW(conv2d(t, a, w, bias, 1, 1), ValidationError);
}
