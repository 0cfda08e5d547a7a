// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file metrics.hpp
 * @brief Verification metrics: TMR@FMR and the d' separation index.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "demorph/core/error.hpp"

namespace demorph::eval {

/// Labeled similarity scores for one comparator/dataset/mode combination.
struct ScoreSet {
    std::vector<double> genuine;
    std::vector<double> imposter;
    std::string comparator;
    std::string dataset;
    std::string mode;
};

/**
 * @brief TMR at the requested FMR levels.
 *
 * Exact thresholding rule (>=-comparisons over the empirical
 * distributions, so two implementations agree bit-for-bit on ties):
 * candidate thresholds are all observed scores plus +infinity; the
 * threshold for level f is the smallest candidate t with
 * frac(imposter >= t) <= f, and TMR = frac(genuine >= t).
 */
inline std::map<double, double> tmr_at_fmr(const ScoreSet& s, const std::vector<double>& fmr_levels) {
    if (s.genuine.empty() || s.imposter.empty())
        throw ProtocolError("tmr_at_fmr: empty genuine or imposter list");
    for (double v : s.genuine)
        if (!std::isfinite(v)) throw ProtocolError("tmr_at_fmr: non-finite genuine score");
    for (double v : s.imposter)
        if (!std::isfinite(v)) throw ProtocolError("tmr_at_fmr: non-finite imposter score");

    std::vector<double> cand;
    cand.reserve(s.genuine.size() + s.imposter.size() + 1);
    cand.insert(cand.end(), s.genuine.begin(), s.genuine.end());
    cand.insert(cand.end(), s.imposter.begin(), s.imposter.end());
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    cand.push_back(std::numeric_limits<double>::infinity());

    std::vector<double> imp_sorted = s.imposter;
    std::sort(imp_sorted.begin(), imp_sorted.end());
    std::vector<double> gen_sorted = s.genuine;
    std::sort(gen_sorted.begin(), gen_sorted.end());

    const double m = static_cast<double>(imp_sorted.size());
    const double n = static_cast<double>(gen_sorted.size());
    auto fmr_at = [&](double t) {
        auto it = std::lower_bound(imp_sorted.begin(), imp_sorted.end(), t);
        return static_cast<double>(imp_sorted.end() - it) / m;
    };
    auto tmr_at = [&](double t) {
        auto it = std::lower_bound(gen_sorted.begin(), gen_sorted.end(), t);
        return static_cast<double>(gen_sorted.end() - it) / n;
    };

    std::map<double, double> out;
    for (double f : fmr_levels) {
        if (!(f >= 0.0 && f <= 1.0)) throw ProtocolError("tmr_at_fmr: FMR level outside [0,1]");
        // fmr_at is non-increasing in t, so the first admissible candidate wins
        auto it = std::partition_point(cand.begin(), cand.end(),
                                       [&](double t) { return fmr_at(t) > f; });
        out[f] = tmr_at(*it); // cand always ends with +inf, giving TMR 0
    }
    return out;
}

/**
 * @brief d' separation between two samples.
 *
 * |mean_a - mean_b| / sqrt((var_a + var_b) / 2) with unbiased sample
 * variances. Equal means give 0; distinct means over zero variance give
 * the +infinity sentinel (callers flag it instead of crashing).
 */
inline double d_prime(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw ValidationError("d_prime: need at least 2 points per sample");
    auto moments = [](const std::vector<double>& x) {
        double mu = 0.0;
        for (double v : x) mu += v;
        mu /= static_cast<double>(x.size());
        double var = 0.0;
        for (double v : x) var += (v - mu) * (v - mu);
        var /= static_cast<double>(x.size() - 1);
        return std::pair<double, double>(mu, var);
    };
    auto [mu_a, var_a] = moments(a);
    auto [mu_b, var_b] = moments(b);
    double denom = std::sqrt((var_a + var_b) / 2.0);
    if (denom == 0.0)
        return mu_a == mu_b ? 0.0 : std::numeric_limits<double>::infinity();
    return std::abs(mu_a - mu_b) / denom;
}

} // namespace demorph::eval
