// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file encoder.hpp
 * @brief Pluggable image encoders and the latent morph condition.
 *
 * The generator is conditioned on the morph twice: in pixel space and
 * through a context matrix built by row-repeating an encoder embedding.
 * A pretrained vision-language encoder is one registrable kind; the
 * deterministic toy encoder ships as the default so the repository is
 * self-contained.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "demorph/core/error.hpp"
#include "demorph/core/image.hpp"
#include "demorph/core/rng.hpp"
#include "demorph/data/transforms.hpp"

namespace demorph::model {

/// Context matrix fed into the generator's cross-attention blocks.
struct MorphEmbedding {
    int rows = 0;  // context length L
    int dim = 0;   // embedding width D (2D in differential mode)
    std::vector<float> context; // rows x dim, row-major

    const float* row(int r) const { return context.data() + static_cast<std::size_t>(r) * dim; }
};

class ImageEncoder {
public:
    virtual ~ImageEncoder() = default;
    virtual const std::string& name() const = 0;
    virtual int dim() const = 0;
    virtual std::vector<float> encode(const Image& image) const = 0;
};

/**
 * @brief Deterministic stand-in for a pretrained image encoder.
 *
 * Grayscale 16x16 downsample, fixed seeded projection, L2 normalization;
 * the same image always maps to the same vector.
 */
class ToyImageEncoder final : public ImageEncoder {
public:
    explicit ToyImageEncoder(int dim = 64, std::string name = "toy-encoder")
        : dim_(dim), name_(std::move(name)) {
        if (dim_ <= 0) throw ValidationError("ToyImageEncoder: dim must be positive");
        Rng rng(fnv1a64(name_) ^ 0xE5C0DEull);
        proj_.resize(static_cast<std::size_t>(dim_) * kPatch);
        const double s = 1.0 / std::sqrt(static_cast<double>(kPatch));
        for (double& w : proj_) w = rng.normal() * s;
    }

    const std::string& name() const override { return name_; }
    int dim() const override { return dim_; }

    std::vector<float> encode(const Image& image) const override {
        if (image.empty()) throw ValidationError("ToyImageEncoder: empty image");
        Image small = data::resize_bilinear(image, kSide, kSide);
        double gray[kPatch];
        for (int y = 0; y < kSide; ++y)
            for (int x = 0; x < kSide; ++x)
                gray[y * kSide + x] =
                    (small.at(x, y, 0) + small.at(x, y, 1) + small.at(x, y, 2)) / 3.0;
        std::vector<double> v(dim_, 0.0);
        for (int d = 0; d < dim_; ++d) {
            const double* row = proj_.data() + static_cast<std::size_t>(d) * kPatch;
            for (int i = 0; i < kPatch; ++i) v[d] += row[i] * gray[i];
        }
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        std::vector<float> out(dim_);
        for (int d = 0; d < dim_; ++d)
            out[d] = static_cast<float>(n > 0.0 ? v[d] / n : 0.0);
        return out;
    }

private:
    static constexpr int kSide = 16;
    static constexpr int kPatch = kSide * kSide;
    int dim_;
    std::string name_;
    std::vector<double> proj_;
};

/// Row-repeats the encoder vector into an L x D context matrix.
inline MorphEmbedding encode_morph(const Image& image, const ImageEncoder& encoder, int context_len) {
    if (context_len < 1) throw ValidationError("encode_morph: context length must be >= 1");
    std::vector<float> e = encoder.encode(image);
    MorphEmbedding emb;
    emb.rows = context_len;
    emb.dim = static_cast<int>(e.size());
    emb.context.resize(static_cast<std::size_t>(context_len) * e.size());
    for (int r = 0; r < context_len; ++r)
        std::copy(e.begin(), e.end(), emb.context.begin() + static_cast<std::size_t>(r) * e.size());
    return emb;
}

/// Differential condition: morph and reference vectors concatenated per row.
inline MorphEmbedding encode_morph_pair(const Image& morph, const Image& reference,
                                        const ImageEncoder& encoder, int context_len) {
    if (context_len < 1) throw ValidationError("encode_morph_pair: context length must be >= 1");
    std::vector<float> em = encoder.encode(morph);
    std::vector<float> er = encoder.encode(reference);
    MorphEmbedding emb;
    emb.rows = context_len;
    emb.dim = static_cast<int>(em.size() + er.size());
    emb.context.resize(static_cast<std::size_t>(context_len) * emb.dim);
    for (int r = 0; r < context_len; ++r) {
        float* dst = emb.context.data() + static_cast<std::size_t>(r) * emb.dim;
        std::copy(em.begin(), em.end(), dst);
        std::copy(er.begin(), er.end(), dst + em.size());
    }
    return emb;
}

} // namespace demorph::model
