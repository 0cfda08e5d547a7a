// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file discriminator.hpp
 * @brief Triplet-conditioned patch discriminator.
 *
 * The input is a triplet concatenated along the channel axis (9 channels):
 * the morph provides conditioning context, the other two slots hold either
 * bonafides (real) or generated outputs (fake). Four conv blocks with
 * InstanceNorm and LeakyReLU feed a 1-channel patch head whose scores are
 * averaged into the scalar.
 */

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "demorph/core/error.hpp"
#include "demorph/core/image.hpp"
#include "demorph/core/rng.hpp"
#include "demorph/model/generator.hpp"
#include "demorph/nn/layers.hpp"

namespace demorph::model {

enum class ScoreForm { probability, logit };

struct DiscriminatorConfig {
    int blocks = 4;
    int base_channels = 32;
    float leaky_slope = 0.2f;
    ScoreForm score_form = ScoreForm::probability;
    int in_channels = 9; // morph + two images

    static DiscriminatorConfig paper_preset() {
        DiscriminatorConfig c;
        c.base_channels = 64;
        return c;
    }

    static DiscriminatorConfig toy_preset() { return {}; }

    void validate() const {
        if (blocks < 1) throw ConfigError("DiscriminatorConfig: blocks must be >= 1");
        if (base_channels < 1) throw ConfigError("DiscriminatorConfig: base_channels must be >= 1");
        if (in_channels != 9) throw ConfigError("DiscriminatorConfig: triplet input is 9 channels");
    }
};

class Discriminator {
public:
    explicit Discriminator(DiscriminatorConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        int c_in = cfg_.in_channels;
        for (int i = 0; i < cfg_.blocks; ++i) {
            int c_out = cfg_.base_channels * std::min(1 << i, 8);
            Block b;
            b.conv = nn::Conv2dLayer(c_in, c_out, 4, 2, 1);
            b.norm = nn::GroupNormLayer(c_out, c_out); // InstanceNorm
            blocks_.push_back(std::move(b));
            c_in = c_out;
        }
        head_ = nn::Conv2dLayer(c_in, 1, 4, 1, 1);
    }

    const DiscriminatorConfig& config() const { return cfg_; }

    void init_params(std::uint64_t seed) {
        Rng rng(derive_seed(seed, 0xD15C)); // discriminator stream
        for (auto& b : blocks_) b.conv.init(rng);
        head_.init(rng);
    }

    /**
     * @brief Batched triplet score.
     * @param x NCHW tensor with 9 channels (morph | a | b)
     * @return [N] vector: mean patch probability (or mean logit per config)
     */
    nn::Var forward(nn::Tape& t, nn::Var x) {
        using namespace nn;
        const auto& sh = x->val().shape();
        if (sh.size() != 4 || sh[1] != cfg_.in_channels)
            throw ValidationError("Discriminator: expected 9-channel triplet input");
        Var h = x;
        for (auto& b : blocks_)
            h = leaky_relu(t, b.norm(t, b.conv(t, h)), cfg_.leaky_slope);
        h = head_(t, h);
        if (cfg_.score_form == ScoreForm::probability)
            return mean_per_sample(t, sigmoid(t, h));
        return mean_per_sample(t, h);
    }

    /// Single-triplet convenience; validates the contract from the caller side.
    double discriminate(const Image& morph, const Image& a, const Image& b) {
        if (!morph.same_shape(a) || !morph.same_shape(b))
            throw ValidationError("discriminate: triplet resolution mismatch");
        nn::Tape t;
        nn::Tensor x({1, 9, morph.height(), morph.width()});
        image_to_tensor(morph, x, 0, 0);
        image_to_tensor(a, x, 0, 3);
        image_to_tensor(b, x, 0, 6);
        nn::Var s = forward(t, t.constant(std::move(x)));
        return static_cast<double>(s->val()[0]);
    }

    void collect(std::vector<nn::NamedParam>& out) {
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            std::string p = "disc.block" + std::to_string(i + 1);
            blocks_[i].conv.collect(out, p + ".conv");
            blocks_[i].norm.collect(out, p + ".norm");
        }
        head_.collect(out, "disc.head");
    }

    int block_count() const { return static_cast<int>(blocks_.size()); }

private:
    struct Block {
        nn::Conv2dLayer conv;
        nn::GroupNormLayer norm;
    };

    DiscriminatorConfig cfg_;
    std::vector<Block> blocks_;
    nn::Conv2dLayer head_;
};

/// Packs a (morph, a, b) triplet batch into a 9-channel tensor.
inline nn::Tensor pack_triplet_batch(const std::vector<const Image*>& morphs,
                                     const std::vector<const Image*>& as,
                                     const std::vector<const Image*>& bs) {
    if (morphs.empty() || morphs.size() != as.size() || morphs.size() != bs.size())
        throw ValidationError("pack_triplet_batch: ragged triplet lists");
    int H = morphs[0]->height(), W = morphs[0]->width();
    nn::Tensor x({static_cast<int>(morphs.size()), 9, H, W});
    for (std::size_t n = 0; n < morphs.size(); ++n) {
        if (!morphs[n]->same_shape(*as[n]) || !morphs[n]->same_shape(*bs[n]))
            throw ValidationError("pack_triplet_batch: resolution mismatch");
        image_to_tensor(*morphs[n], x, static_cast<int>(n), 0);
        image_to_tensor(*as[n], x, static_cast<int>(n), 3);
        image_to_tensor(*bs[n], x, static_cast<int>(n), 6);
    }
    return x;
}

} // namespace demorph::model
