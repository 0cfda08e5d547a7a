// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file image.hpp
 * @brief RGB float images and the FaceImage domain type.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "demorph/core/error.hpp"

namespace demorph {

/// Interleaved RGB image, values nominally in [0, 1].
class Image {
public:
    Image() = default;
    Image(int width, int height, float fill = 0.0f)
        : w_(width), h_(height),
          px_(static_cast<std::size_t>(width) * height * 3, fill) {
        if (width < 0 || height < 0)
            throw ValidationError("Image: negative dimensions");
    }

    int width() const { return w_; }
    int height() const { return h_; }
    bool empty() const { return w_ == 0 || h_ == 0; }
    std::size_t value_count() const { return px_.size(); }

    float& at(int x, int y, int c) { return px_[idx(x, y, c)]; }
    float at(int x, int y, int c) const { return px_[idx(x, y, c)]; }

    float* data() { return px_.data(); }
    const float* data() const { return px_.data(); }

    bool same_shape(const Image& o) const { return w_ == o.w_ && h_ == o.h_; }

    bool values_in_unit_range(float tol = 0.0f) const {
        for (float v : px_)
            if (!(v >= -tol && v <= 1.0f + tol)) return false;
        return true;
    }

    void clamp_unit() {
        for (float& v : px_) v = std::clamp(v, 0.0f, 1.0f);
    }

    /// Mean absolute pixel difference; shapes must match.
    static double l1(const Image& a, const Image& b) {
        if (!a.same_shape(b)) throw ValidationError("Image::l1: shape mismatch");
        if (a.empty()) return 0.0;
        double s = 0.0;
        for (std::size_t i = 0; i < a.px_.size(); ++i)
            s += std::abs(static_cast<double>(a.px_[i]) - b.px_[i]);
        return s / static_cast<double>(a.px_.size());
    }

    bool operator==(const Image& o) const {
        return w_ == o.w_ && h_ == o.h_ && px_ == o.px_;
    }

private:
    std::size_t idx(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * w_ + x) * 3 + c;
    }

    int w_ = 0, h_ = 0;
    std::vector<float> px_;
};

/// A preprocessed face crop tied to an identity.
struct FaceImage {
    Image pixels;
    std::string identity_id;
    std::string image_id;
};

inline void validate_face_image(const FaceImage& f) {
    if (f.pixels.empty())
        throw ValidationError("FaceImage '" + f.image_id + "': empty pixels");
    if (f.pixels.width() != f.pixels.height())
        throw ValidationError("FaceImage '" + f.image_id + "': must be square");
    if (!f.pixels.values_in_unit_range())
        throw ValidationError("FaceImage '" + f.image_id + "': values outside [0,1]");
    if (f.identity_id.empty())
        throw ValidationError("FaceImage '" + f.image_id + "': empty identity id");
}

inline FaceImage face_image(Image px, std::string identity_id, std::string image_id) {
    FaceImage f{std::move(px), std::move(identity_id), std::move(image_id)};
    validate_face_image(f);
    return f;
}

} // namespace demorph
