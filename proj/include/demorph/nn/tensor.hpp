// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file tensor.hpp
 * @brief Dense float tensor (row-major, NCHW convention for images).
 */

#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "demorph/core/error.hpp"

namespace demorph::nn {

namespace detail {

/**
 * @brief Tensor buffer allocator: 64-byte aligned, default-initializing.
 *
 * Alignment keeps Eigen's SIMD peel/tail split identical across
 * allocations, which makes repeated forward passes bitwise reproducible;
 * default-init lets outputs that are fully overwritten skip one memory
 * pass.
 */
template <typename T>
struct DefaultInitAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    DefaultInitAllocator() = default;
    template <typename U>
    DefaultInitAllocator(const DefaultInitAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
    }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    void construct(U* p) noexcept(noexcept(::new (static_cast<void*>(p)) U)) {
        ::new (static_cast<void*>(p)) U;
    }
    template <typename U, typename... Args>
    void construct(U* p, Args&&... args) {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }

    template <typename U>
    bool operator==(const DefaultInitAllocator<U>&) const noexcept {
        return true;
    }
};

} // namespace detail

using FloatBuf = std::vector<float, detail::DefaultInitAllocator<float>>;

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        x_.assign(count(shape_), 0.0f);
    }

    Tensor(std::vector<int> shape, const std::vector<float>& values) : shape_(std::move(shape)) {
        if (values.size() != count(shape_))
            throw ValidationError("Tensor: values do not match shape");
        x_.assign(values.begin(), values.end());
    }

    /// Uninitialized storage for outputs that are fully overwritten.
    static Tensor uninit(std::vector<int> shape) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.x_.resize(count(t.shape_));
        return t;
    }

    static std::size_t count(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) {
            if (d < 0) throw ValidationError("Tensor: negative dimension");
            n *= static_cast<std::size_t>(d);
        }
        return shape.empty() ? 0 : n;
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::size_t numel() const { return x_.size(); }
    bool defined() const { return !shape_.empty(); }

    float* data() { return x_.data(); }
    const float* data() const { return x_.data(); }
    float& operator[](std::size_t i) { return x_[i]; }
    float operator[](std::size_t i) const { return x_[i]; }

    void fill(float v) { std::fill(x_.begin(), x_.end(), v); }
    void zero() { fill(0.0f); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool operator==(const Tensor& o) const {
        return shape_ == o.shape_ && std::equal(x_.begin(), x_.end(), o.x_.begin());
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i)
            s += (i ? "," : "") + std::to_string(shape_[i]);
        return s + "]";
    }

private:
    std::vector<int> shape_;
    FloatBuf x_;
};

} // namespace demorph::nn
