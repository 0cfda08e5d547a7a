// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file transforms.hpp
 * @brief Preprocessing and reference-image perturbations.
 *
 * Preprocessing normalizes to [0,1], center-crops to square and resizes
 * with bilinear interpolation; no flips or rotations are ever introduced
 * so that facial features stay spatially aligned across morphs and
 * ground truths. Reference transforms simulate a live capture that does
 * not exactly match the enrolled image: mild blur, brightness/contrast
 * jitter and a small affine warp.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "demorph/core/error.hpp"
#include "demorph/core/image.hpp"
#include "demorph/core/rng.hpp"

namespace demorph::data {

/// Bilinear resize. Identity (bit-exact) when sizes already match.
inline Image resize_bilinear(const Image& src, int out_w, int out_h) {
    if (src.empty()) throw ValidationError("resize_bilinear: empty image");
    if (out_w <= 0 || out_h <= 0) throw ValidationError("resize_bilinear: bad target size");
    Image dst(out_w, out_h);
    const double sx = static_cast<double>(src.width()) / out_w;
    const double sy = static_cast<double>(src.height()) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        float wy = static_cast<float>(fy - y0);
        int y0c = std::clamp(y0, 0, src.height() - 1);
        int y1c = std::clamp(y0 + 1, 0, src.height() - 1);
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            float wx = static_cast<float>(fx - x0);
            int x0c = std::clamp(x0, 0, src.width() - 1);
            int x1c = std::clamp(x0 + 1, 0, src.width() - 1);
            for (int c = 0; c < 3; ++c) {
                float top = src.at(x0c, y0c, c) * (1.0f - wx) + src.at(x1c, y0c, c) * wx;
                float bot = src.at(x0c, y1c, c) * (1.0f - wx) + src.at(x1c, y1c, c) * wx;
                dst.at(x, y, c) = top * (1.0f - wy) + bot * wy;
            }
        }
    }
    return dst;
}

/// Center crop to the largest square.
inline Image center_crop_square(const Image& src) {
    if (src.empty()) throw ValidationError("center_crop_square: empty image");
    int side = std::min(src.width(), src.height());
    int ox = (src.width() - side) / 2;
    int oy = (src.height() - side) / 2;
    if (ox == 0 && oy == 0 && src.width() == src.height()) return src;
    Image dst(side, side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            for (int c = 0; c < 3; ++c)
                dst.at(x, y, c) = src.at(x + ox, y + oy, c);
    return dst;
}

inline bool valid_preprocess_size(int target) {
    return target == 64 || target == 128 || target == 256;
}

/**
 * @brief Normalize to [0,1], center-crop to square, resize to target.
 *
 * Idempotent: preprocessing an already-preprocessed image is a bit-exact
 * no-op. Unreadable or zero-area inputs raise ValidationError so the
 * corpus loader can skip them with a report.
 */
inline Image preprocess(const Image& raw, int target_size) {
    if (!valid_preprocess_size(target_size))
        throw ValidationError("preprocess: target_size must be one of {64,128,256}");
    if (raw.empty())
        throw ValidationError("preprocess: zero-area image");
    Image img = center_crop_square(raw);
    img = resize_bilinear(img, target_size, target_size);
    img.clamp_unit();
    return img;
}

inline FaceImage preprocess(const FaceImage& f, int target_size) {
    FaceImage out{preprocess(f.pixels, target_size), f.identity_id, f.image_id};
    return out;
}

/// Separable Gaussian blur with clamp-to-edge sampling. sigma<=0 is identity.
inline Image gaussian_blur(const Image& src, double sigma) {
    if (src.empty()) throw ValidationError("gaussian_blur: empty image");
    if (sigma <= 0.0) return src;
    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<float> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
        kernel[i + radius] = static_cast<float>(w);
        sum += w;
    }
    for (float& w : kernel) w = static_cast<float>(w / sum);

    Image tmp(src.width(), src.height());
    for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < src.width(); ++x)
            for (int c = 0; c < 3; ++c) {
                float acc = 0.0f;
                for (int k = -radius; k <= radius; ++k) {
                    int xx = std::clamp(x + k, 0, src.width() - 1);
                    acc += kernel[k + radius] * src.at(xx, y, c);
                }
                tmp.at(x, y, c) = acc;
            }
    Image dst(src.width(), src.height());
    for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < src.width(); ++x)
            for (int c = 0; c < 3; ++c) {
                float acc = 0.0f;
                for (int k = -radius; k <= radius; ++k) {
                    int yy = std::clamp(y + k, 0, src.height() - 1);
                    acc += kernel[k + radius] * tmp.at(x, yy, c);
                }
                dst.at(x, y, c) = acc;
            }
    return dst;
}

/// out = (px - 0.5) * contrast + 0.5 + brightness, clamped.
inline Image adjust_brightness_contrast(const Image& src, double brightness, double contrast) {
    Image dst = src;
    for (std::size_t i = 0; i < dst.value_count(); ++i) {
        double v = (static_cast<double>(dst.data()[i]) - 0.5) * contrast + 0.5 + brightness;
        dst.data()[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return dst;
}

/// Small rotation + translation, inverse-mapped with bilinear sampling.
inline Image affine_warp(const Image& src, double angle_deg, double tx_frac, double ty_frac) {
    if (src.empty()) throw ValidationError("affine_warp: empty image");
    Image dst(src.width(), src.height());
    const double rad = angle_deg * std::numbers::pi / 180.0;
    const double ca = std::cos(rad), sa = std::sin(rad);
    const double cx = 0.5 * (src.width() - 1), cy = 0.5 * (src.height() - 1);
    const double tx = tx_frac * src.width(), ty = ty_frac * src.height();
    for (int y = 0; y < dst.height(); ++y)
        for (int x = 0; x < dst.width(); ++x) {
            // inverse map: undo translation, then rotate by -angle about center
            double ux = x - tx - cx;
            double uy = y - ty - cy;
            double fx = ca * ux + sa * uy + cx;
            double fy = -sa * ux + ca * uy + cy;
            int x0 = static_cast<int>(std::floor(fx));
            int y0 = static_cast<int>(std::floor(fy));
            float wx = static_cast<float>(fx - x0);
            float wy = static_cast<float>(fy - y0);
            int x0c = std::clamp(x0, 0, src.width() - 1);
            int x1c = std::clamp(x0 + 1, 0, src.width() - 1);
            int y0c = std::clamp(y0, 0, src.height() - 1);
            int y1c = std::clamp(y0 + 1, 0, src.height() - 1);
            for (int c = 0; c < 3; ++c) {
                float top = src.at(x0c, y0c, c) * (1.0f - wx) + src.at(x1c, y0c, c) * wx;
                float bot = src.at(x0c, y1c, c) * (1.0f - wx) + src.at(x1c, y1c, c) * wx;
                dst.at(x, y, c) = top * (1.0f - wy) + bot * wy;
            }
        }
    return dst;
}

/// Parameter ranges for reference perturbations (mild on purpose).
struct ReferenceTransformRanges {
    double sigma_min = 0.5, sigma_max = 2.0;
    double brightness_max = 0.2;   // +/- 20%
    double contrast_jitter = 0.2;  // factor in [0.8, 1.2]
    double max_rotation_deg = 5.0;
    double max_translation = 0.05; // fraction of side
};

/**
 * @brief Applies one or more random mild transforms to a reference image.
 *
 * Deterministic given the seed; output keeps dimensions and identity tags
 * and is clamped to [0,1].
 */
inline FaceImage apply_reference_transforms(const FaceImage& ref, std::uint64_t seed,
                                            const ReferenceTransformRanges& r = {}) {
    validate_face_image(ref);
    Rng rng(seed);
    bool do_blur = rng.uniform() < 0.5;
    bool do_jitter = rng.uniform() < 0.5;
    bool do_affine = rng.uniform() < 0.5;
    if (!do_blur && !do_jitter && !do_affine) {
        switch (rng.below(3)) {
            case 0: do_blur = true; break;
            case 1: do_jitter = true; break;
            default: do_affine = true; break;
        }
    }
    Image img = ref.pixels;
    if (do_blur) img = gaussian_blur(img, rng.uniform(r.sigma_min, r.sigma_max));
    if (do_jitter) {
        double b = rng.uniform(-r.brightness_max, r.brightness_max);
        double c = rng.uniform(1.0 - r.contrast_jitter, 1.0 + r.contrast_jitter);
        img = adjust_brightness_contrast(img, b, c);
    }
    if (do_affine) {
        double ang = rng.uniform(-r.max_rotation_deg, r.max_rotation_deg);
        double tx = rng.uniform(-r.max_translation, r.max_translation);
        double ty = rng.uniform(-r.max_translation, r.max_translation);
        img = affine_warp(img, ang, tx, ty);
    }
    img.clamp_unit();
    return FaceImage{std::move(img), ref.identity_id, ref.image_id + "#ref"};
}

} // namespace demorph::data
