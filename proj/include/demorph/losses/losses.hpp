// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file losses.hpp
 * @brief Adversarial objective, cross-road reconstruction loss and their
 * alpha-weighted combination.
 *
 * The cross-road loss aligns the generator's unordered outputs with the
 * ordered ground truths: it evaluates the L1 cost of both possible
 * assignments and takes the minimum, so the correct match is selected
 * regardless of output order. L1 is reduced by mean over pixels, which
 * keeps alpha=1 scale-stable across resolutions.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "demorph/core/error.hpp"
#include "demorph/core/image.hpp"
#include "demorph/nn/ops.hpp"

namespace demorph::losses {

enum class AdvForm { literal_minimax, non_saturating };

inline std::string to_string(AdvForm f) {
    return f == AdvForm::literal_minimax ? "literal_minimax" : "non_saturating";
}

inline AdvForm adv_form_from_string(const std::string& s) {
    if (s == "literal_minimax") return AdvForm::literal_minimax;
    if (s == "non_saturating") return AdvForm::non_saturating;
    throw ConfigError("unknown adversarial form '" + s + "'");
}

inline constexpr double kScoreEps = 1e-7;

namespace detail {
inline double clamp_score(double s, const char* which) {
    if (s <= 0.0 || s >= 1.0) {
        std::cerr << "warning: " << which << " score " << s << " clamped to ("
                  << kScoreEps << ", " << 1.0 - kScoreEps << ")\n";
        return std::clamp(s, kScoreEps, 1.0 - kScoreEps);
    }
    return s;
}
} // namespace detail

/**
 * @brief Discriminator and generator adversarial losses from scalar scores.
 *
 * Scores are post-sigmoid probabilities. adv_d = -[log r + log(1-f)].
 * The generator term is -log f (non-saturating, default) or log(1-f)
 * (the literal minimax form).
 */
inline std::pair<double, double> adversarial_losses(double real_score, double fake_score,
                                                    AdvForm form = AdvForm::non_saturating) {
    double r = detail::clamp_score(real_score, "real");
    double f = detail::clamp_score(fake_score, "fake");
    double adv_d = -(std::log(r) + std::log(1.0 - f));
    double adv_g = form == AdvForm::non_saturating ? -std::log(f) : std::log(1.0 - f);
    return {adv_d, adv_g};
}

/// Reference-free branch: min over the two output/ground-truth pairings.
inline double cross_road_loss(const Image& out1, const Image& out2, const Image& gt1,
                              const Image& gt2) {
    if (!out1.same_shape(out2) || !out1.same_shape(gt1) || !out1.same_shape(gt2))
        throw ValidationError("cross_road_loss: shape mismatch");
    double keep = Image::l1(gt1, out1) + Image::l1(gt2, out2);
    double swap = Image::l1(gt1, out2) + Image::l1(gt2, out1);
    return std::min(keep, swap);
}

/// Differential branch: plain mean absolute error.
inline double cross_road_loss_differential(const Image& out, const Image& gt) {
    return Image::l1(out, gt);
}

inline double total_generator_loss(double adv_g, double cross_road, double alpha) {
    return adv_g + alpha * cross_road;
}

/// Per-step loss record; total_g always equals adv_g + alpha*cross_road.
struct LossBreakdown {
    double adv_d = 0.0;
    double adv_g = 0.0;
    double cross_road = 0.0;
    double total_g = 0.0;
    double alpha = 1.0;

    static LossBreakdown make(double adv_d, double adv_g, double cross_road, double alpha) {
        LossBreakdown b{adv_d, adv_g, cross_road, total_generator_loss(adv_g, cross_road, alpha), alpha};
        b.check();
        return b;
    }

    void check() const {
        if (!std::isfinite(adv_d) || !std::isfinite(adv_g) || !std::isfinite(cross_road) ||
            !std::isfinite(total_g))
            throw DivergenceError("non-finite loss: adv_d=" + std::to_string(adv_d) +
                                  " adv_g=" + std::to_string(adv_g) +
                                  " cross_road=" + std::to_string(cross_road));
        if (std::abs(total_g - (adv_g + alpha * cross_road)) > 1e-9)
            throw ValidationError("LossBreakdown: total_g != adv_g + alpha*cross_road");
    }
};

// ============================================================================
// Tape-side counterparts used by the training loop
// ============================================================================

/// adv_d over batches of probability scores: mean of -[log r + log(1-f)].
inline nn::Var adv_d_tape(nn::Tape& t, nn::Var real_scores, nn::Var fake_scores) {
    using namespace nn;
    const float eps = static_cast<float>(kScoreEps);
    Var r = clamp(t, real_scores, eps, 1.0f - eps);
    Var f = clamp(t, fake_scores, eps, 1.0f - eps);
    Var term = add(t, log_op(t, r), log_op(t, one_minus(t, f)));
    return scale(t, mean_all(t, term), -1.0f);
}

/// Generator adversarial term over a batch of fake probability scores.
inline nn::Var adv_g_tape(nn::Tape& t, nn::Var fake_scores, AdvForm form) {
    using namespace nn;
    const float eps = static_cast<float>(kScoreEps);
    Var f = clamp(t, fake_scores, eps, 1.0f - eps);
    if (form == AdvForm::non_saturating)
        return scale(t, mean_all(t, log_op(t, f)), -1.0f);
    return mean_all(t, log_op(t, one_minus(t, f)));
}

/// Batched cross-road loss from per-sample pairing costs.
inline nn::Var cross_road_tape(nn::Tape& t, nn::Var out1, nn::Var out2, nn::Var gt1, nn::Var gt2) {
    using namespace nn;
    Var keep = add(t, l1_per_sample(t, out1, gt1), l1_per_sample(t, out2, gt2));
    Var swap = add(t, l1_per_sample(t, out2, gt1), l1_per_sample(t, out1, gt2));
    return mean_all(t, min_ew(t, keep, swap));
}

inline nn::Var cross_road_differential_tape(nn::Tape& t, nn::Var out, nn::Var gt) {
    return nn::mean_all(t, nn::l1_per_sample(t, out, gt));
}

// ============================================================================
// Training log CSV: epoch,step,adv_d,adv_g,cross_road,total_g
// ============================================================================

class LossLogger {
public:
    LossLogger() = default;

    /// Opens the CSV; append skips the header for resumed runs.
    explicit LossLogger(const std::string& path, bool append = false) {
        if (path.empty()) return;
        out_.open(path, append ? std::ios::app : std::ios::out);
        if (!out_) throw IoError("LossLogger: cannot open " + path);
        if (!append) out_ << "epoch,step,adv_d,adv_g,cross_road,total_g\n";
    }

    void log(int epoch, int step, const LossBreakdown& b) {
        rows_.push_back({epoch, step, b});
        if (out_.is_open()) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%d,%d,%.9g,%.9g,%.9g,%.9g\n", epoch, step, b.adv_d,
                          b.adv_g, b.cross_road, b.total_g);
            out_ << buf;
            out_.flush();
        }
    }

    struct Row {
        int epoch, step;
        LossBreakdown loss;
    };
    const std::vector<Row>& rows() const { return rows_; }

private:
    std::ofstream out_;
    std::vector<Row> rows_;
};

} // namespace demorph::losses
