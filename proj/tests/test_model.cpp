// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "demorph/losses/losses.hpp"
#include "demorph/model/discriminator.hpp"
#include "demorph/model/encoder.hpp"
#include "demorph/model/generator.hpp"
#include "test_support.hpp"

using namespace demorph;
using namespace demorph::model;

namespace {

GeneratorConfig small_cfg(Mode mode = Mode::reference_free) {
    GeneratorConfig c = GeneratorConfig::toy_preset(mode);
    c.resolution = 32;
    c.base_channels = 16;
    c.down_blocks = c.up_blocks = 3;
    c.attn_down_index = 2;
    c.attn_up_index = 2;
    c.context_len = 4;
    c.context_dim = 32;
    c.norm_groups = 8;
    return c;
}

} // namespace

// ============================================================================
// encoder / MorphEmbedding
// ============================================================================

TEST(EncodeMorph, RowRepeatSemantics) {
    ToyImageEncoder enc(32);
    Rng rng(1);
    Image img = testutil::random_image(rng, 32);
    MorphEmbedding emb = encode_morph(img, enc, 8);
    EXPECT_EQ(emb.rows, 8);
    EXPECT_EQ(emb.dim, 32);
    for (int r = 1; r < emb.rows; ++r)
        for (int d = 0; d < emb.dim; ++d) ASSERT_EQ(emb.row(r)[d], emb.row(0)[d]);
}

TEST(EncodeMorph, LengthOneEqualsRawVector) {
    ToyImageEncoder enc(32);
    Rng rng(2);
    Image img = testutil::random_image(rng, 32);
    MorphEmbedding emb = encode_morph(img, enc, 1);
    std::vector<float> raw = enc.encode(img);
    ASSERT_EQ(emb.context.size(), raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) ASSERT_EQ(emb.context[i], raw[i]);
}

TEST(EncodeMorph, DistinctImagesDistinctContexts) {
    ToyImageEncoder enc(32);
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Image a = testutil::random_image(rng, 32);
        Image b = testutil::random_image(rng, 32);
        MorphEmbedding ea = encode_morph(a, enc, 4);
        MorphEmbedding eb = encode_morph(b, enc, 4);
        float linf = 0.0f;
        for (int d = 0; d < ea.dim; ++d)
            linf = std::max(linf, std::abs(ea.row(0)[d] - eb.row(0)[d]));
        ASSERT_GT(linf, 0.0f);
    }
}

TEST(EncodeMorphPair, ConcatenatesBothVectors) {
    ToyImageEncoder enc(32);
    Rng rng(4);
    Image m = testutil::random_image(rng, 32);
    Image r = testutil::random_image(rng, 32);
    MorphEmbedding emb = encode_morph_pair(m, r, enc, 4);
    EXPECT_EQ(emb.dim, 64);
    std::vector<float> em = enc.encode(m), er = enc.encode(r);
    for (int d = 0; d < 32; ++d) {
        ASSERT_EQ(emb.row(0)[d], em[static_cast<std::size_t>(d)]);
        ASSERT_EQ(emb.row(0)[32 + d], er[static_cast<std::size_t>(d)]);
    }
}

// ============================================================================
// generator
// ============================================================================

TEST(Generator, ReferenceFreeShapeContract) {
    GeneratorConfig cfg = small_cfg();
    Generator gen(cfg);
    gen.init_params(1);
    ToyImageEncoder enc(cfg.context_dim);
    Rng rng(5);
    Image morph = testutil::random_image(rng, 32);
    auto [o1, o2] = gen.generate(morph, encode_morph(morph, enc, cfg.context_len), 11);
    EXPECT_EQ(o1.width(), 32);
    EXPECT_EQ(o1.height(), 32);
    EXPECT_EQ(o2.width(), 32);
    EXPECT_TRUE(o1.values_in_unit_range());
    EXPECT_TRUE(o2.values_in_unit_range());
}

TEST(Generator, DifferentialShapeContract) {
    GeneratorConfig cfg = small_cfg(Mode::differential);
    Generator gen(cfg);
    gen.init_params(2);
    ToyImageEncoder enc(cfg.context_dim);
    Rng rng(6);
    Image morph = testutil::random_image(rng, 32);
    Image ref = testutil::random_image(rng, 32);
    Image out = gen.generate_differential(morph, ref,
                                          encode_morph_pair(morph, ref, enc, cfg.context_len), 12);
    EXPECT_EQ(out.width(), 32);
    EXPECT_TRUE(out.values_in_unit_range());
}

TEST(Generator, ModeReferenceMismatchThrows) {
    GeneratorConfig rf = small_cfg();
    Generator gen(rf);
    gen.init_params(3);
    ToyImageEncoder enc(rf.context_dim);
    Rng rng(7);
    Image morph = testutil::random_image(rng, 32);
    Image ref = testutil::random_image(rng, 32);
    EXPECT_THROW(gen.generate_differential(morph, ref,
                                           encode_morph_pair(morph, ref, enc, rf.context_len), 1),
                 ValidationError);

    GeneratorConfig df = small_cfg(Mode::differential);
    Generator gend(df);
    gend.init_params(3);
    EXPECT_THROW(gend.generate(morph, encode_morph(morph, enc, df.context_len), 1),
                 ValidationError);
}

TEST(Generator, EncoderDimMismatchIsConfigError) {
    GeneratorConfig cfg = small_cfg();
    Generator gen(cfg);
    gen.init_params(4);
    ToyImageEncoder wrong(16); // config expects 32
    Rng rng(8);
    Image morph = testutil::random_image(rng, 32);
    EXPECT_THROW(gen.generate(morph, encode_morph(morph, wrong, cfg.context_len), 1), ConfigError);
}

TEST(Generator, DropoutSeedControlsOutputs) {
    GeneratorConfig cfg = small_cfg();
    cfg.dropout = 0.2f;
    Generator gen(cfg);
    gen.init_params(5);
    ToyImageEncoder enc(cfg.context_dim);
    Rng rng(9);
    Image morph = testutil::random_image(rng, 32);
    MorphEmbedding emb = encode_morph(morph, enc, cfg.context_len);
    auto [a1, a2] = gen.generate(morph, emb, 42);
    auto [b1, b2] = gen.generate(morph, emb, 42);
    EXPECT_TRUE(a1 == b1);
    EXPECT_TRUE(a2 == b2);
    auto [c1, c2] = gen.generate(morph, emb, 43);
    EXPECT_GT(Image::l1(a1, c1) + Image::l1(a2, c2), 0.0);
}

TEST(Generator, ContextInjectionIsLive) {
    GeneratorConfig cfg = small_cfg();
    Generator gen(cfg);
    gen.init_params(6);
    ToyImageEncoder enc(cfg.context_dim);
    Rng rng(10);
    Image morph = testutil::random_image(rng, 32);
    MorphEmbedding emb1 = encode_morph(morph, enc, cfg.context_len);
    MorphEmbedding emb2 = emb1;
    for (auto& v : emb2.context) v = -v;
    auto [a1, a2] = gen.generate(morph, emb1, 7);
    auto [b1, b2] = gen.generate(morph, emb2, 7);
    EXPECT_GT(Image::l1(a1, b1) + Image::l1(a2, b2), 1e-6);
}

TEST(Generator, BlockCountConformance) {
    GeneratorConfig cfg = GeneratorConfig::toy_preset();
    Generator gen(cfg);
    EXPECT_EQ(gen.down_stage_count(), cfg.down_blocks);
    EXPECT_EQ(gen.up_stage_count(), cfg.up_blocks);
    EXPECT_EQ(gen.down_attention_indices(), std::vector<int>{cfg.attn_down_index});
    EXPECT_EQ(gen.up_attention_indices(), std::vector<int>{cfg.attn_up_index});

    GeneratorConfig paper = GeneratorConfig::paper_preset();
    EXPECT_EQ(paper.down_blocks, 6);
    EXPECT_EQ(paper.attn_down_index, 5);
    EXPECT_EQ(paper.attn_up_index, 2);
    EXPECT_EQ(paper.context_len, 77);
    EXPECT_EQ(paper.context_dim, 512);
    EXPECT_EQ(paper.resolution, 256);
}

TEST(Generator, ConfigValidation) {
    GeneratorConfig cfg = small_cfg();
    cfg.up_blocks = 2;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = small_cfg();
    cfg.attn_down_index = 9;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = small_cfg();
    cfg.dropout = 1.0f;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = small_cfg();
    cfg.resolution = 100; // not divisible by 2^blocks
    EXPECT_THROW(cfg.validate(), ConfigError);
}

// ============================================================================
// discriminator
// ============================================================================

TEST(Discriminator, ScoreInOpenUnitInterval) {
    DiscriminatorConfig cfg;
    cfg.base_channels = 16;
    Discriminator disc(cfg);
    disc.init_params(7);
    Rng rng(11);
    Image m = testutil::random_image(rng, 32);
    Image a = testutil::random_image(rng, 32);
    Image b = testutil::random_image(rng, 32);
    double s = disc.discriminate(m, a, b);
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
    EXPECT_EQ(disc.discriminate(m, a, b), s); // deterministic without dropout
}

TEST(Discriminator, ResolutionMismatchThrows) {
    DiscriminatorConfig cfg;
    cfg.base_channels = 16;
    Discriminator disc(cfg);
    disc.init_params(8);
    Rng rng(12);
    Image m = testutil::random_image(rng, 32);
    Image a = testutil::random_image(rng, 16);
    EXPECT_THROW(disc.discriminate(m, a, m), ValidationError);
}

TEST(Discriminator, LogitFormIsUnbounded) {
    DiscriminatorConfig cfg;
    cfg.base_channels = 16;
    cfg.score_form = ScoreForm::logit;
    Discriminator disc(cfg);
    disc.init_params(9);
    Rng rng(13);
    Image m = testutil::random_image(rng, 32);
    double s = disc.discriminate(m, m, m);
    EXPECT_TRUE(std::isfinite(s));
}

TEST(Discriminator, BlockCountMatchesConfig) {
    DiscriminatorConfig cfg;
    cfg.blocks = 4;
    Discriminator disc(cfg);
    EXPECT_EQ(disc.block_count(), 4);
    DiscriminatorConfig bad;
    bad.blocks = 0;
    EXPECT_THROW(Discriminator{bad}, ConfigError);
}

// ============================================================================
// parameter liveness (small config; the toy-preset run lives in acceptance)
// ============================================================================

TEST(Model, EveryParameterReceivesGradient) {
    using namespace demorph::nn;
    GeneratorConfig gcfg = small_cfg();
    DiscriminatorConfig dcfg;
    dcfg.base_channels = 16;
    Generator gen(gcfg);
    Discriminator disc(dcfg);
    gen.init_params(14);
    disc.init_params(14);

    Rng rng(15);
    const int B = 2, R = gcfg.resolution;
    Tensor x({B, 3, R, R}), g1({B, 3, R, R}), g2({B, 3, R, R});
    for (std::size_t i = 0; i < x.numel(); ++i) {
        x[i] = static_cast<float>(rng.uniform());
        g1[i] = static_cast<float>(rng.uniform());
        g2[i] = static_cast<float>(rng.uniform());
    }
    Tensor ctx({B, gcfg.context_len, gcfg.context_dim});
    for (std::size_t i = 0; i < ctx.numel(); ++i) ctx[i] = static_cast<float>(rng.normal());

    Tape t;
    Rng drop(16);
    Var morph = t.constant(x);
    Var out = gen.forward(t, morph, t.constant(ctx), drop);
    Var out1 = slice_ch(t, out, 0, 3);
    Var out2 = slice_ch(t, out, 3, 6);
    Var real = disc.forward(t, concat_ch(t, morph, concat_ch(t, t.constant(g1), t.constant(g2))));
    Var fake = disc.forward(t, concat_ch(t, morph, out));
    Var adv_d = losses::adv_d_tape(t, real, fake);
    Var adv_g = losses::adv_g_tape(t, fake, losses::AdvForm::non_saturating);
    Var cr = losses::cross_road_tape(t, out1, out2, t.constant(g1), t.constant(g2));
    Var combined = add(t, adv_d, add(t, adv_g, cr));

    std::vector<NamedParam> params;
    gen.collect(params);
    disc.collect(params);
    for (auto& np : params) np.param->zero_grad();
    t.backward(combined);

    for (const auto& np : params) {
        double norm = 0.0;
        bool finite = true;
        for (std::size_t i = 0; i < np.param->grad.numel(); ++i) {
            float v = np.param->grad[i];
            if (!std::isfinite(v)) finite = false;
            norm += std::abs(static_cast<double>(v));
        }
        EXPECT_TRUE(finite) << np.name << " has non-finite gradient";
        EXPECT_GT(norm, 0.0) << np.name << " has identically zero gradient";
    }
}
