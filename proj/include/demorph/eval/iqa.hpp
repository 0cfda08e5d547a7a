// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file iqa.hpp
 * @brief Native image quality metrics: SSIM and PSNR on [0,1] images.
 *
 * FID and LPIPS are learned metrics and stay behind the external provider
 * file contract (see report.hpp); they are never reimplemented here.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "demorph/core/error.hpp"
#include "demorph/core/image.hpp"

namespace demorph::eval {

/**
 * @brief Mean SSIM with the standard 11x11 Gaussian window (sigma 1.5),
 * data range 1.0, over the valid region, averaged across channels.
 *
 * Identical images score exactly 1.0: every window statistic is computed
 * through one code path, so numerator and denominator match bitwise.
 */
inline double ssim(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ValidationError("ssim: shape mismatch");
    constexpr int kWin = 11;
    constexpr double kC1 = 0.01 * 0.01; // (K1*L)^2 with L=1
    constexpr double kC2 = 0.03 * 0.03;
    if (a.width() < kWin || a.height() < kWin)
        throw ValidationError("ssim: image smaller than the 11x11 window");

    double kernel[kWin];
    const double sigma = 1.5;
    double ksum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        double d = i - kWin / 2;
        kernel[i] = std::exp(-0.5 * d * d / (sigma * sigma));
        ksum += kernel[i];
    }
    for (double& k : kernel) k /= ksum;

    double total = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y + kWin <= a.height(); ++y)
            for (int x = 0; x + kWin <= a.width(); ++x) {
                double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
                for (int wy = 0; wy < kWin; ++wy)
                    for (int wx = 0; wx < kWin; ++wx) {
                        double w = kernel[wy] * kernel[wx];
                        double va = a.at(x + wx, y + wy, c);
                        double vb = b.at(x + wx, y + wy, c);
                        sx += w * va;
                        sy += w * vb;
                        sxx += w * va * va;
                        syy += w * vb * vb;
                        sxy += w * va * vb;
                    }
                double cov_xx = sxx - sx * sx;
                double cov_yy = syy - sy * sy;
                double cov_xy = sxy - sx * sy;
                double num = (2.0 * sx * sy + kC1) * (2.0 * cov_xy + kC2);
                double den = (sx * sx + sy * sy + kC1) * (cov_xx + cov_yy + kC2);
                total += num / den;
                ++count;
            }
    return total / static_cast<double>(count);
}

/// PSNR in dB (data range 1.0), capped at 100 for serializable reports.
inline double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ValidationError("psnr: shape mismatch");
    if (a.empty()) throw ValidationError("psnr: empty image");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.value_count(); ++i) {
        double d = static_cast<double>(a.data()[i]) - b.data()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.value_count());
    if (mse <= 0.0) return 100.0;
    return std::min(100.0, -10.0 * std::log10(mse));
}

} // namespace demorph::eval
