// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file synthetic.hpp
 * @brief Procedural face-like corpus so every test runs with zero external data.
 *
 * Each identity is a structured pattern (background gradient, a face
 * ellipse, two eye blobs, a mouth bar, a sinusoidal texture) drawn from an
 * identity-seeded generator; per-image noise distinguishes captures of the
 * same identity. Coordinates are normalized so the same identity renders
 * consistently at any resolution.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "demorph/core/image.hpp"
#include "demorph/core/rng.hpp"
#include "demorph/data/corpus.hpp"

namespace demorph::data {

namespace detail {

struct Blob {
    double cx, cy, rx, ry;
    float color[3];
    double softness;
};

struct IdentityPattern {
    float base[3], grad[3];
    double grad_angle;
    Blob face, eye_l, eye_r, mouth;
    double tex_fx, tex_fy, tex_phase, tex_amp;
};

inline IdentityPattern make_identity_pattern(std::uint64_t corpus_seed, int identity_idx) {
    Rng rng(derive_seed(corpus_seed, 1000 + static_cast<std::uint64_t>(identity_idx)));
    IdentityPattern p;
    for (int c = 0; c < 3; ++c) p.base[c] = static_cast<float>(rng.uniform(0.25, 0.75));
    for (int c = 0; c < 3; ++c) p.grad[c] = static_cast<float>(rng.uniform(-0.2, 0.2));
    p.grad_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);

    auto blob = [&](double cx, double cy, double rx, double ry, double jitter) {
        Blob b;
        b.cx = cx + rng.uniform(-jitter, jitter);
        b.cy = cy + rng.uniform(-jitter, jitter);
        b.rx = rx * rng.uniform(0.7, 1.3);
        b.ry = ry * rng.uniform(0.7, 1.3);
        for (int c = 0; c < 3; ++c) b.color[c] = static_cast<float>(rng.uniform(0.05, 0.95));
        b.softness = rng.uniform(0.02, 0.08);
        return b;
    };
    p.face = blob(0.5, 0.52, 0.36, 0.42, 0.03);
    p.eye_l = blob(0.35, 0.40, 0.07, 0.05, 0.03);
    p.eye_r = blob(0.65, 0.40, 0.07, 0.05, 0.03);
    p.mouth = blob(0.5, 0.72, 0.14, 0.05, 0.03);

    p.tex_fx = rng.uniform(1.0, 4.0);
    p.tex_fy = rng.uniform(1.0, 4.0);
    p.tex_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    p.tex_amp = rng.uniform(0.02, 0.06);
    return p;
}

inline double blob_coverage(const Blob& b, double x, double y) {
    double dx = (x - b.cx) / b.rx;
    double dy = (y - b.cy) / b.ry;
    double d = std::sqrt(dx * dx + dy * dy);
    // smoothstep edge from 1-soft to 1+soft
    double t = (1.0 + b.softness - d) / (2.0 * b.softness);
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

} // namespace detail

/// Renders one capture of a procedural identity at the given resolution.
inline FaceImage synth_identity_image(std::uint64_t corpus_seed, int identity_idx,
                                      int image_idx, int resolution) {
    detail::IdentityPattern p = detail::make_identity_pattern(corpus_seed, identity_idx);
    Rng noise(derive_seed(corpus_seed,
                          500000 + static_cast<std::uint64_t>(identity_idx) * 97
                              + static_cast<std::uint64_t>(image_idx)));
    Image img(resolution, resolution);
    const double ga_x = std::cos(p.grad_angle), ga_y = std::sin(p.grad_angle);
    for (int yi = 0; yi < resolution; ++yi) {
        double y = (yi + 0.5) / resolution;
        for (int xi = 0; xi < resolution; ++xi) {
            double x = (xi + 0.5) / resolution;
            double g = (x - 0.5) * ga_x + (y - 0.5) * ga_y;
            double tex = p.tex_amp * std::sin(2.0 * std::numbers::pi * (p.tex_fx * x + p.tex_fy * y) + p.tex_phase);
            double face_w = detail::blob_coverage(p.face, x, y);
            double parts[3] = {detail::blob_coverage(p.eye_l, x, y),
                               detail::blob_coverage(p.eye_r, x, y),
                               detail::blob_coverage(p.mouth, x, y)};
            const detail::Blob* blobs[3] = {&p.eye_l, &p.eye_r, &p.mouth};
            for (int c = 0; c < 3; ++c) {
                double v = p.base[c] + p.grad[c] * g * 2.0 + tex;
                v = v * (1.0 - 0.55 * face_w) + 0.55 * face_w * p.face.color[c];
                for (int k = 0; k < 3; ++k)
                    v = v * (1.0 - parts[k]) + parts[k] * blobs[k]->color[c];
                v += noise.normal() * 0.015;
                img.at(xi, yi, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    char ident[32], imgid[48];
    std::snprintf(ident, sizeof ident, "id%03d", identity_idx);
    std::snprintf(imgid, sizeof imgid, "id%03d_bf%d", identity_idx, image_idx);
    return face_image(std::move(img), ident, imgid);
}

struct SyntheticCorpusParams {
    int n_identities = 12;
    int n_morphs = 24;
    int resolution = 64;
    double alpha = 0.65;       // blend weight of the base constituent (bf1)
    double alpha_jitter = 0.0; // uniform jitter applied per morph
    std::uint64_t seed = 1;
};

/**
 * @brief Builds a self-contained synthetic corpus (one bonafide per identity).
 *
 * Morphs pair randomly chosen distinct identities; bf1 is the base image,
 * so corpora built with alpha >= 0.5 carry the intrinsic base-image bias.
 */
inline Corpus build_synthetic_corpus(const SyntheticCorpusParams& prm) {
    if (prm.n_identities < 2)
        throw ValidationError("build_synthetic_corpus: need at least 2 identities");
    if (prm.n_morphs < 1)
        throw ValidationError("build_synthetic_corpus: need at least 1 morph");
    if (!(prm.alpha >= 0.0 && prm.alpha <= 1.0))
        throw ValidationError("build_synthetic_corpus: alpha must be in [0,1]");

    Corpus corpus;
    corpus.name = "synthetic";
    std::vector<std::string> image_ids;
    for (int i = 0; i < prm.n_identities; ++i) {
        FaceImage f = synth_identity_image(prm.seed, i, 0, prm.resolution);
        image_ids.push_back(f.image_id);
        corpus.bonafides.emplace(f.image_id, std::move(f));
    }

    Rng rng(derive_seed(prm.seed, 42));
    for (int m = 0; m < prm.n_morphs; ++m) {
        int a = static_cast<int>(rng.below(prm.n_identities));
        int b;
        do { b = static_cast<int>(rng.below(prm.n_identities)); } while (b == a);
        double alpha = prm.alpha;
        if (prm.alpha_jitter > 0.0)
            alpha = std::clamp(alpha + rng.uniform(-prm.alpha_jitter, prm.alpha_jitter), 0.0, 1.0);
        char mid[48];
        std::snprintf(mid, sizeof mid, "m%04d", m);
        MorphRecord rec = synthesize_morph(corpus.bonafides.at(image_ids[a]),
                                           corpus.bonafides.at(image_ids[b]), alpha, mid);
        corpus.records.push_back(std::move(rec));
    }
    corpus.validate();
    return corpus;
}

} // namespace demorph::data
