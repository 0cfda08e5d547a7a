// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file tape.hpp
 * @brief Reverse-mode autodiff tape over Tensor.
 *
 * A Tape records nodes in creation order (a valid topological order of
 * the dynamically built graph) and runs their backward closures in
 * reverse. Parameters enter as leaf nodes aliasing external value/grad
 * storage so gradients accumulate in place across backward passes.
 */

#pragma once

#include <functional>
#include <memory>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "demorph/core/error.hpp"
#include "demorph/nn/tensor.hpp"

namespace demorph::nn {

/// Keeps multi-megabyte activation tensors on the main heap so freed
/// blocks are reused across steps instead of being mmapped and unmapped.
inline void tune_allocator_once() {
#if defined(__GLIBC__)
    static const bool done = [] {
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
        return true;
    }();
    (void)done;
#endif
}

struct Node {
    Tensor value;               // owned, unless ext_value set
    Tensor grad;
    Tensor* ext_value = nullptr;
    Tensor* ext_grad = nullptr;
    bool requires_grad = false;
    std::function<void()> backward; // pulls this node's grad into its inputs

    Tensor& val() { return ext_value ? *ext_value : value; }
    const Tensor& val() const { return ext_value ? *ext_value : value; }
    Tensor& grd() { return ext_grad ? *ext_grad : grad; }
};

using Var = std::shared_ptr<Node>;

/// Trainable tensor with gradient and Adam moments.
struct Parameter {
    Tensor value, grad, m, v;

    explicit Parameter(std::vector<int> shape = {})
        : value(shape.empty() ? Tensor() : Tensor(shape)) {
        if (!shape.empty()) {
            grad = Tensor(shape);
            m = Tensor(shape);
            v = Tensor(shape);
        }
    }

    std::size_t numel() const { return value.numel(); }
    void zero_grad() { grad.zero(); }
};

struct NamedParam {
    std::string name;
    Parameter* param;
};

class Tape {
public:
    Tape() { tune_allocator_once(); }

    /// Leaf aliasing a parameter; gradients accumulate into param.grad.
    Var leaf(Parameter& p) {
        auto n = std::make_shared<Node>();
        n->ext_value = &p.value;
        n->ext_grad = &p.grad;
        n->requires_grad = true;
        nodes_.push_back(n);
        return n;
    }

    /// Constant input (no gradient).
    Var constant(Tensor t) {
        auto n = std::make_shared<Node>();
        n->value = std::move(t);
        n->requires_grad = false;
        nodes_.push_back(n);
        return n;
    }

    /// Differentiable input owning its own grad (for gradient checks).
    Var input(Tensor t) {
        auto n = std::make_shared<Node>();
        n->value = std::move(t);
        n->grad = Tensor(n->value.shape());
        n->requires_grad = true;
        nodes_.push_back(n);
        return n;
    }

    /// Interior op node.
    Var make(Tensor value, bool requires_grad, std::function<void()> backward) {
        auto n = std::make_shared<Node>();
        n->value = std::move(value);
        n->requires_grad = requires_grad;
        if (requires_grad) {
            n->grad = Tensor(n->value.shape());
            n->backward = std::move(backward);
        }
        nodes_.push_back(n);
        return n;
    }

    /**
     * @brief Backpropagates from a scalar root.
     *
     * Seeds the root gradient with 1 and walks the tape in reverse.
     * One backward per tape; combine losses by summing before the call.
     */
    void backward(const Var& root) {
        if (root->val().numel() != 1)
            throw ValidationError("Tape::backward: root must be scalar");
        if (!root->requires_grad)
            throw ValidationError("Tape::backward: root does not require grad");
        if (backward_done_)
            throw ValidationError("Tape::backward: tape already backpropagated");
        backward_done_ = true;
        root->grd()[0] += 1.0f;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node& n = **it;
            if (n.requires_grad && n.backward) n.backward();
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    std::vector<Var> nodes_;
    bool backward_done_ = false;
};

} // namespace demorph::nn
