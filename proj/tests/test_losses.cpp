// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

#include <gtest/gtest.h>

#include <cmath>

#include "demorph/losses/losses.hpp"
#include "test_support.hpp"

using namespace demorph;
using namespace demorph::losses;

namespace {

// Brute-force oracle: enumerate both pairings with independent summation.
double cross_road_oracle(const Image& o1, const Image& o2, const Image& g1, const Image& g2) {
    auto l1 = [](const Image& a, const Image& b) {
        double s = 0.0;
        for (int y = 0; y < a.height(); ++y)
            for (int x = 0; x < a.width(); ++x)
                for (int c = 0; c < 3; ++c)
                    s += std::abs(static_cast<double>(a.at(x, y, c)) - b.at(x, y, c));
        return s / (static_cast<double>(a.width()) * a.height() * 3.0);
    };
    double keep = l1(g1, o1) + l1(g2, o2);
    double swap = l1(g1, o2) + l1(g2, o1);
    return keep < swap ? keep : swap;
}

Image one_pixel(float v) {
    Image img(1, 1);
    img.at(0, 0, 0) = img.at(0, 0, 1) = img.at(0, 0, 2) = v;
    return img;
}

} // namespace

// ============================================================================
// adversarial losses
// ============================================================================

TEST(AdversarialLosses, HandComputedValues) {
    auto [adv_d, adv_g] = adversarial_losses(0.5, 0.5, AdvForm::non_saturating);
    EXPECT_NEAR(adv_d, 2.0 * std::log(2.0), 1e-12); // ~1.3863
    EXPECT_NEAR(adv_g, std::log(2.0), 1e-12);       // ~0.6931

    auto [d2, g2] = adversarial_losses(0.5, 0.5, AdvForm::literal_minimax);
    EXPECT_NEAR(d2, 2.0 * std::log(2.0), 1e-12);
    EXPECT_NEAR(g2, std::log(0.5), 1e-12);
}

TEST(AdversarialLosses, PerfectDiscriminatorLimit) {
    auto [adv_d, adv_g] = adversarial_losses(1.0 - 1e-9, 1e-9, AdvForm::non_saturating);
    EXPECT_NEAR(adv_d, 0.0, 1e-5);
    (void)adv_g;
}

TEST(AdversarialLosses, ClampsDegenerateScores) {
    auto [adv_d, adv_g] = adversarial_losses(1.0, 0.0, AdvForm::non_saturating);
    EXPECT_TRUE(std::isfinite(adv_d));
    EXPECT_TRUE(std::isfinite(adv_g));
    EXPECT_NEAR(adv_g, -std::log(kScoreEps), 1e-9);
}

// ============================================================================
// cross-road loss
// ============================================================================

TEST(CrossRoad, ExactMatchesGiveZero) {
    Rng rng(1);
    Image g1 = testutil::random_image(rng, 8);
    Image g2 = testutil::random_image(rng, 8);
    EXPECT_DOUBLE_EQ(cross_road_loss(g1, g2, g1, g2), 0.0);
    EXPECT_DOUBLE_EQ(cross_road_loss(g2, g1, g1, g2), 0.0); // swapped order handled by min
}

TEST(CrossRoad, OnePixelHandExample) {
    // gt1=0.0, gt2=1.0, out1=0.8, out2=0.1 -> min(0.8+0.9, 0.1+0.2) = 0.3
    double v = cross_road_loss(one_pixel(0.8f), one_pixel(0.1f), one_pixel(0.0f), one_pixel(1.0f));
    EXPECT_NEAR(v, 0.3, 1e-7);
}

TEST(CrossRoad, SymmetricInOutputOrder) {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        Image o1 = testutil::random_image(rng, 6), o2 = testutil::random_image(rng, 6);
        Image g1 = testutil::random_image(rng, 6), g2 = testutil::random_image(rng, 6);
        ASSERT_EQ(cross_road_loss(o1, o2, g1, g2), cross_road_loss(o2, o1, g1, g2));
    }
}

TEST(CrossRoad, MatchesBruteForceOracle) {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        Image o1 = testutil::random_image(rng, 8), o2 = testutil::random_image(rng, 8);
        Image g1 = testutil::random_image(rng, 8), g2 = testutil::random_image(rng, 8);
        double got = cross_road_loss(o1, o2, g1, g2);
        double want = cross_road_oracle(o1, o2, g1, g2);
        ASSERT_NEAR(got, want, 1e-9);
        ASSERT_GE(got, 0.0);
    }
}

TEST(CrossRoad, ShapeMismatchThrows) {
    Rng rng(4);
    Image a = testutil::random_image(rng, 8), b = testutil::random_image(rng, 4);
    EXPECT_THROW(cross_road_loss(a, a, a, b), ValidationError);
}

TEST(CrossRoadDifferential, Values) {
    Rng rng(5);
    Image g = testutil::random_image(rng, 8);
    EXPECT_DOUBLE_EQ(cross_road_loss_differential(g, g), 0.0);

    Image shifted = g;
    for (std::size_t i = 0; i < shifted.value_count(); ++i) shifted.data()[i] += 0.1f;
    EXPECT_NEAR(cross_road_loss_differential(shifted, g), 0.1, 1e-6);

    // independent summation oracle on a random pair
    Image o = testutil::random_image(rng, 8);
    double want = 0.0;
    for (std::size_t i = 0; i < o.value_count(); ++i)
        want += std::abs(static_cast<double>(o.data()[i]) - g.data()[i]);
    want /= static_cast<double>(o.value_count());
    EXPECT_NEAR(cross_road_loss_differential(o, g), want, 1e-9);
}

// ============================================================================
// total loss and breakdown
// ============================================================================

TEST(TotalLoss, Composition) {
    EXPECT_DOUBLE_EQ(total_generator_loss(0.8, 0.3, 0.0), 0.8);
    EXPECT_DOUBLE_EQ(total_generator_loss(0.7, 0.3, 1.0), 1.0);
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        double adv_g = rng.uniform(0.0, 3.0);
        double cr = rng.uniform(0.0, 1.0);
        double alpha = rng.uniform(0.0, 2.0);
        LossBreakdown b = LossBreakdown::make(0.5, adv_g, cr, alpha);
        ASSERT_NEAR(b.total_g, adv_g + alpha * cr, 1e-9);
    }
}

TEST(TotalLoss, NonFiniteLossRejected) {
    EXPECT_THROW(LossBreakdown::make(std::nan(""), 0.1, 0.1, 1.0), DivergenceError);
}

// ============================================================================
// gradient sanity through the tape
// ============================================================================

TEST(CrossRoadGradient, FiniteDifferenceSignAwayFromKinks) {
    // Single pixel perturbation: away from the pairing switch and the L1
    // kink the derivative is sign(out-gt)/numel under the selected pairing.
    Rng rng(7);
    Image o1 = testutil::random_image(rng, 4), o2 = testutil::random_image(rng, 4);
    Image g1 = testutil::random_image(rng, 4), g2 = testutil::random_image(rng, 4);
    double keep = Image::l1(g1, o1) + Image::l1(g2, o2);
    double swap = Image::l1(g1, o2) + Image::l1(g2, o1);
    ASSERT_GT(std::abs(keep - swap), 1e-4); // not at the pairing boundary
    bool kept = keep < swap;
    const Image& sel_gt = kept ? g1 : g2;

    const double eps = 1e-4;
    const double numel = 4 * 4 * 3;
    for (int x = 0; x < 4; ++x) {
        float v = o1.at(x, 0, 0);
        float gt = sel_gt.at(x, 0, 0);
        if (std::abs(v - gt) < 10 * eps) continue; // skip the L1 kink
        Image up = o1, dn = o1;
        up.at(x, 0, 0) = static_cast<float>(v + eps);
        dn.at(x, 0, 0) = static_cast<float>(v - eps);
        double fd = (cross_road_loss(up, o2, g1, g2) - cross_road_loss(dn, o2, g1, g2)) / (2 * eps);
        double analytic = (v > gt ? 1.0 : -1.0) / numel;
        EXPECT_NEAR(fd, analytic, 1e-3) << "pixel " << x;
    }
}

TEST(CrossRoadGradient, TapeMatchesPureFunction) {
    using namespace demorph::nn;
    Rng rng(8);
    // two-sample batch of 4x4 images, NCHW
    auto fill = [&](Tensor& t) {
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform());
    };
    Tensor o1({2, 3, 4, 4}), o2({2, 3, 4, 4}), g1({2, 3, 4, 4}), g2({2, 3, 4, 4});
    fill(o1);
    fill(o2);
    fill(g1);
    fill(g2);
    Tape t;
    Var v = cross_road_tape(t, t.constant(o1), t.constant(o2), t.constant(g1), t.constant(g2));

    // pure-function recomputation per sample
    auto img_of = [](const Tensor& t, int n) {
        Image img(4, 4);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 4; ++x)
                    img.at(x, y, c) = t[(static_cast<std::size_t>(n) * 3 + c) * 16 +
                                        static_cast<std::size_t>(y) * 4 + x];
        return img;
    };
    double want = 0.0;
    for (int n = 0; n < 2; ++n)
        want += cross_road_loss(img_of(o1, n), img_of(o2, n), img_of(g1, n), img_of(g2, n));
    want /= 2.0;
    EXPECT_NEAR(v->val()[0], want, 1e-6);
}
