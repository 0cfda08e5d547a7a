// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file generator.hpp
 * @brief Dual-conditioned UNet generator.
 *
 * The net receives the morph in pixel space and a latent context matrix
 * built from the encoder embedding; the context is injected through
 * cross-attention at the attention-bearing blocks. Reference-free mode
 * emits a single 6-channel head split into two RGB images; differential
 * mode takes morph+reference (6 input channels) and emits one image.
 * There is no timestep input. Dropout noise is live in every forward
 * pass, training and inference alike, seeded by the caller.
 */

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "demorph/core/error.hpp"
#include "demorph/core/image.hpp"
#include "demorph/core/rng.hpp"
#include "demorph/model/encoder.hpp"
#include "demorph/nn/layers.hpp"

namespace demorph::model {

enum class Mode { reference_free, differential };

inline std::string to_string(Mode m) {
    return m == Mode::reference_free ? "reference_free" : "differential";
}

inline Mode mode_from_string(const std::string& s) {
    if (s == "reference_free") return Mode::reference_free;
    if (s == "differential") return Mode::differential;
    throw ConfigError("unknown mode '" + s + "'");
}

struct GeneratorConfig {
    int resolution = 64;
    Mode mode = Mode::reference_free;
    int down_blocks = 4;
    int up_blocks = 4;
    int attn_down_index = 3; // 1-based block index
    int attn_up_index = 2;
    int base_channels = 32;
    float dropout = 0.1f;
    int context_len = 8;   // L
    int context_dim = 64;  // D (per encoded image)
    int norm_groups = 8;

    /// Paper-scale preset: 256 res, 6/6 blocks, attention at down 5 / up 2,
    /// context repeated 77 times at width 512.
    static GeneratorConfig paper_preset(Mode mode = Mode::reference_free) {
        GeneratorConfig c;
        c.resolution = 256;
        c.mode = mode;
        c.down_blocks = c.up_blocks = 6;
        c.attn_down_index = 5;
        c.attn_up_index = 2;
        c.base_channels = 64;
        c.dropout = 0.1f;
        c.context_len = 77;
        c.context_dim = 512;
        c.norm_groups = 16;
        return c;
    }

    static GeneratorConfig toy_preset(Mode mode = Mode::reference_free) {
        GeneratorConfig c;
        c.mode = mode;
        return c;
    }

    int in_channels() const { return mode == Mode::differential ? 6 : 3; }
    int out_channels() const { return mode == Mode::differential ? 3 : 6; }
    /// Differential contexts concatenate morph and reference vectors.
    int effective_context_dim() const {
        return mode == Mode::differential ? 2 * context_dim : context_dim;
    }

    void validate() const {
        if (down_blocks != up_blocks)
            throw ConfigError("GeneratorConfig: down_blocks must equal up_blocks");
        if (down_blocks < 1) throw ConfigError("GeneratorConfig: need at least one block");
        if (attn_down_index < 1 || attn_down_index > down_blocks)
            throw ConfigError("GeneratorConfig: attn_down_index out of range");
        if (attn_up_index < 1 || attn_up_index > up_blocks)
            throw ConfigError("GeneratorConfig: attn_up_index out of range");
        if (!(dropout >= 0.0f && dropout < 1.0f))
            throw ConfigError("GeneratorConfig: dropout must be in [0,1)");
        if (resolution % (1 << down_blocks) != 0)
            throw ConfigError("GeneratorConfig: resolution must be divisible by 2^down_blocks");
        if (context_len < 1 || context_dim < 1)
            throw ConfigError("GeneratorConfig: bad context shape");
        if (base_channels < norm_groups || base_channels % norm_groups != 0)
            throw ConfigError("GeneratorConfig: norm_groups must divide base_channels");
    }
};

namespace detail {

using namespace demorph::nn;

/// Two 3x3 convs with group norm, SiLU and dropout. A stride of 2 on the
/// first conv makes it a ResNet downsampling block; the shortcut is a
/// (strided) 1x1 projection whenever shape changes.
struct ResBlock {
    GroupNormLayer n1, n2;
    Conv2dLayer c1, c2;
    std::optional<Conv2dLayer> skip;
    float dropout_p = 0.0f;

    ResBlock() = default;
    ResBlock(int c_in, int c_out, int groups, float dropout, int stride = 1)
        : n1(c_in, groups), n2(c_out, groups),
          c1(c_in, c_out, 3, stride, 1), c2(c_out, c_out, 3, 1, 1), dropout_p(dropout) {
        if (c_in != c_out || stride != 1) skip.emplace(c_in, c_out, 1, stride, 0);
    }

    void init(Rng& rng) {
        c1.init(rng);
        c2.init(rng);
        if (skip) skip->init(rng);
    }

    Var fwd(Tape& t, Var x, Rng& drop) {
        Var h = group_norm_silu_dropout(t, x, t.leaf(n1.gamma), t.leaf(n1.beta), n1.groups, 0.0f,
                                        drop);
        h = c1(t, h);
        h = group_norm_silu_dropout(t, h, t.leaf(n2.gamma), t.leaf(n2.beta), n2.groups, dropout_p,
                                    drop);
        h = c2(t, h);
        Var s = skip ? (*skip)(t, x) : x;
        return add(t, h, s);
    }

    void collect(std::vector<NamedParam>& out, const std::string& p) {
        n1.collect(out, p + ".n1");
        n2.collect(out, p + ".n2");
        c1.collect(out, p + ".c1");
        c2.collect(out, p + ".c2");
        if (skip) skip->collect(out, p + ".skip");
    }
};

/// Spatial self-attention plus cross-attention over the context rows.
struct AttentionBlock {
    GroupNormLayer norm_self, norm_cross;
    Conv2dLayer q1, k1, v1, proj1;           // self
    Conv2dLayer q2, proj2;                   // cross query/out
    LinearLayer ctx_k, ctx_v;                // context projections
    int channels = 0;

    AttentionBlock() = default;
    AttentionBlock(int c, int groups, int ctx_dim)
        : norm_self(c, groups), norm_cross(c, groups),
          q1(c, c, 1, 1, 0), k1(c, c, 1, 1, 0), v1(c, c, 1, 1, 0), proj1(c, c, 1, 1, 0),
          q2(c, c, 1, 1, 0), proj2(c, c, 1, 1, 0),
          ctx_k(ctx_dim, c), ctx_v(ctx_dim, c), channels(c) {}

    void init(Rng& rng) {
        q1.init(rng); k1.init(rng); v1.init(rng); proj1.init(rng);
        q2.init(rng); proj2.init(rng);
        ctx_k.init(rng); ctx_v.init(rng);
    }

    Var fwd(Tape& t, Var x, Var ctx) {
        const auto& sh = x->val().shape();
        int N = sh[0], C = sh[1], H = sh[2], W = sh[3];
        int T = H * W;
        float inv_sqrt_c = 1.0f / std::sqrt(static_cast<float>(C));

        // self-attention
        {
            Var h = norm_self(t, x);
            Var q = reshape(t, q1(t, h), {N, C, T});
            Var k = reshape(t, k1(t, h), {N, C, T});
            Var v = reshape(t, v1(t, h), {N, C, T});
            Var attn = softmax_last(t, scale(t, bmm(t, transpose12(t, q), k), inv_sqrt_c));
            Var out = bmm(t, v, transpose12(t, attn)); // [N,C,T]
            out = proj1(t, reshape(t, out, {N, C, H, W}));
            x = add(t, x, out);
        }
        // cross-attention over context rows
        {
            Var h = norm_cross(t, x);
            Var q = transpose12(t, reshape(t, q2(t, h), {N, C, T})); // [N,T,C]
            Var k = ctx_k(t, ctx);                                   // [N,L,C]
            Var v = ctx_v(t, ctx);                                   // [N,L,C]
            Var attn = softmax_last(t, scale(t, bmm(t, q, transpose12(t, k)), inv_sqrt_c)); // [N,T,L]
            Var out = transpose12(t, bmm(t, attn, v)); // [N,C,T]
            out = proj2(t, reshape(t, out, {N, C, H, W}));
            x = add(t, x, out);
        }
        return x;
    }

    void collect(std::vector<NamedParam>& out, const std::string& p) {
        norm_self.collect(out, p + ".norm_self");
        norm_cross.collect(out, p + ".norm_cross");
        q1.collect(out, p + ".q1"); k1.collect(out, p + ".k1");
        v1.collect(out, p + ".v1"); proj1.collect(out, p + ".proj1");
        q2.collect(out, p + ".q2"); proj2.collect(out, p + ".proj2");
        ctx_k.collect(out, p + ".ctx_k"); ctx_v.collect(out, p + ".ctx_v");
    }
};

} // namespace detail

/// Converts FaceImage pixels to a planar NCHW slab inside a batch tensor.
inline void image_to_tensor(const Image& img, nn::Tensor& t, int n, int c0) {
    int H = img.height(), W = img.width(), C = t.dim(1);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                t[(static_cast<std::size_t>(n) * C + c0 + c) * H * W + static_cast<std::size_t>(y) * W + x] =
                    img.at(x, y, c);
}

inline Image tensor_to_image(const nn::Tensor& t, int n, int c0) {
    int H = t.dim(2), W = t.dim(3), C = t.dim(1);
    Image img(W, H);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                img.at(x, y, c) =
                    t[(static_cast<std::size_t>(n) * C + c0 + c) * H * W + static_cast<std::size_t>(y) * W + x];
    return img;
}

class Generator {
public:
    explicit Generator(GeneratorConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        build();
    }

    const GeneratorConfig& config() const { return cfg_; }

    void init_params(std::uint64_t seed) {
        Rng rng(derive_seed(seed, 0x6E47)); // generator stream
        stem_.init(rng);
        for (auto& d : downs_) {
            d.res.init(rng);
            if (d.attn) d.attn->init(rng);
        }
        mid_.init(rng);
        for (auto& u : ups_) {
            u.res.init(rng);
            if (u.attn) u.attn->init(rng);
        }
        out_conv_.init(rng);
    }

    /**
     * @brief Batched forward pass.
     * @param x NCHW input (3 or 6 channels per mode)
     * @param ctx context [N, L, Deff]
     * @param drop dropout stream for this call
     */
    nn::Var forward(nn::Tape& t, nn::Var x, nn::Var ctx, Rng& drop) {
        using namespace nn;
        const auto& sh = x->val().shape();
        if (sh.size() != 4 || sh[1] != cfg_.in_channels())
            throw ValidationError("Generator: expected " + std::to_string(cfg_.in_channels()) +
                                  " input channels");
        if (sh[2] != cfg_.resolution || sh[3] != cfg_.resolution)
            throw ValidationError("Generator: input resolution mismatch");
        const auto& cs = ctx->val().shape();
        if (cs.size() != 3 || cs[0] != sh[0] || cs[1] != cfg_.context_len ||
            cs[2] != cfg_.effective_context_dim())
            throw ConfigError("Generator: context shape mismatch, expected [N," +
                              std::to_string(cfg_.context_len) + "," +
                              std::to_string(cfg_.effective_context_dim()) + "] got " +
                              ctx->val().shape_str());

        Var stem_out = stem_(t, x);
        Var h = stem_out;
        std::vector<Var> skips;
        for (auto& d : downs_) {
            h = d.res.fwd(t, h, drop); // stride-2 inside the block
            if (d.attn) h = d.attn->fwd(t, h, ctx);
            skips.push_back(h);
        }
        h = mid_.fwd(t, h, drop);
        for (auto& u : ups_) {
            h = concat_ch(t, h, skips.back());
            skips.pop_back();
            h = u.res.fwd(t, h, drop);
            if (u.attn) h = u.attn->fwd(t, h, ctx);
            h = upsample_nearest2x(t, h);
        }
        // full-resolution detail re-enters through the stem skip
        h = concat_ch(t, h, stem_out);
        Rng no_drop(0);
        h = group_norm_silu_dropout(t, h, t.leaf(out_norm_.gamma), t.leaf(out_norm_.beta),
                                    out_norm_.groups, 0.0f, no_drop);
        h = out_conv_(t, h);
        return sigmoid(t, h);
    }

    /// Reference-free single-image pass: two RGB outputs in [0,1].
    std::pair<Image, Image> generate(const Image& morph, const MorphEmbedding& emb,
                                     std::uint64_t dropout_seed) {
        if (cfg_.mode != Mode::reference_free)
            throw ValidationError("generate: model is differential; a reference image is required");
        nn::Tape t;
        nn::Var out = run_single(t, morph, nullptr, emb, dropout_seed);
        return {tensor_to_image(out->val(), 0, 0), tensor_to_image(out->val(), 0, 3)};
    }

    /// Differential single-image pass: one RGB output in [0,1].
    Image generate_differential(const Image& morph, const Image& reference,
                                const MorphEmbedding& emb, std::uint64_t dropout_seed) {
        if (cfg_.mode != Mode::differential)
            throw ValidationError("generate_differential: model is reference-free; "
                                  "it does not take a reference image");
        nn::Tape t;
        nn::Var out = run_single(t, morph, &reference, emb, dropout_seed);
        return tensor_to_image(out->val(), 0, 0);
    }

    void collect(std::vector<nn::NamedParam>& out) {
        stem_.collect(out, "gen.stem");
        for (std::size_t i = 0; i < downs_.size(); ++i) {
            std::string p = "gen.down" + std::to_string(i + 1);
            downs_[i].res.collect(out, p + ".res");
            if (downs_[i].attn) downs_[i].attn->collect(out, p + ".attn");
        }
        mid_.collect(out, "gen.mid");
        for (std::size_t i = 0; i < ups_.size(); ++i) {
            std::string p = "gen.up" + std::to_string(i + 1);
            ups_[i].res.collect(out, p + ".res");
            if (ups_[i].attn) ups_[i].attn->collect(out, p + ".attn");
        }
        out_norm_.collect(out, "gen.out_norm");
        out_conv_.collect(out, "gen.out_conv");
    }

    // introspection for conformance checks
    int down_stage_count() const { return static_cast<int>(downs_.size()); }
    int up_stage_count() const { return static_cast<int>(ups_.size()); }
    std::vector<int> down_attention_indices() const {
        std::vector<int> v;
        for (std::size_t i = 0; i < downs_.size(); ++i)
            if (downs_[i].attn) v.push_back(static_cast<int>(i + 1));
        return v;
    }
    std::vector<int> up_attention_indices() const {
        std::vector<int> v;
        for (std::size_t i = 0; i < ups_.size(); ++i)
            if (ups_[i].attn) v.push_back(static_cast<int>(i + 1));
        return v;
    }

private:
    struct DownStage {
        detail::ResBlock res;
        std::optional<detail::AttentionBlock> attn;
    };
    struct UpStage {
        detail::ResBlock res;
        std::optional<detail::AttentionBlock> attn;
    };

    void build() {
        const int B = cfg_.down_blocks;
        const int groups = cfg_.norm_groups;
        const int ctxd = cfg_.effective_context_dim();
        // ch[i] is the width of down block i's output (half resolution each)
        std::vector<int> ch(B + 1);
        ch[0] = cfg_.base_channels;
        for (int i = 1; i <= B; ++i) ch[i] = cfg_.base_channels * std::min(1 << i, 8);

        stem_ = nn::Conv2dLayer(cfg_.in_channels(), ch[0], 3, 1, 1);
        for (int i = 1; i <= B; ++i) {
            DownStage d;
            d.res = detail::ResBlock(ch[i - 1], ch[i], groups, cfg_.dropout, /*stride=*/2);
            if (i == cfg_.attn_down_index) d.attn.emplace(ch[i], groups, ctxd);
            downs_.push_back(std::move(d));
        }
        mid_ = detail::ResBlock(ch[B], ch[B], groups, cfg_.dropout);
        // up block i consumes the skip of down block B-i+1 and mirrors its width
        for (int i = 1; i <= B; ++i) {
            int c_in = 2 * ch[B - i + 1]; // incoming features + same-width skip
            int c_out = ch[B - i];
            UpStage u;
            u.res = detail::ResBlock(c_in, c_out, groups, cfg_.dropout);
            if (i == cfg_.attn_up_index) u.attn.emplace(c_out, groups, ctxd);
            ups_.push_back(std::move(u));
        }
        out_norm_ = nn::GroupNormLayer(2 * ch[0], groups);
        out_conv_ = nn::Conv2dLayer(2 * ch[0], cfg_.out_channels(), 3, 1, 1);
    }

    nn::Var run_single(nn::Tape& t, const Image& morph, const Image* reference,
                       const MorphEmbedding& emb, std::uint64_t dropout_seed) {
        if (morph.width() != cfg_.resolution || morph.height() != cfg_.resolution)
            throw ValidationError("Generator: morph must be preprocessed to model resolution");
        if (reference && !reference->same_shape(morph))
            throw ValidationError("Generator: reference resolution mismatch");
        if (emb.rows != cfg_.context_len || emb.dim != cfg_.effective_context_dim())
            throw ConfigError("Generator: embedding shape [" + std::to_string(emb.rows) + "," +
                              std::to_string(emb.dim) + "] does not match config");
        nn::Tensor x({1, cfg_.in_channels(), cfg_.resolution, cfg_.resolution});
        image_to_tensor(morph, x, 0, 0);
        if (reference) image_to_tensor(*reference, x, 0, 3);
        nn::Tensor c({1, emb.rows, emb.dim}, emb.context);
        Rng drop(dropout_seed);
        return forward(t, t.constant(std::move(x)), t.constant(std::move(c)), drop);
    }

    GeneratorConfig cfg_;
    nn::Conv2dLayer stem_;
    std::vector<DownStage> downs_;
    detail::ResBlock mid_;
    std::vector<UpStage> ups_;
    nn::GroupNormLayer out_norm_;
    nn::Conv2dLayer out_conv_;
};

} // namespace demorph::model
