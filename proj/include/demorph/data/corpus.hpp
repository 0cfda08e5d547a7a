// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file corpus.hpp
 * @brief Morph records, in-memory corpora and synthetic morph blending.
 */

#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "demorph/core/error.hpp"
#include "demorph/core/image.hpp"

namespace demorph::data {

enum class MorphTag { landmark, deep, synthetic_blend };

inline std::string to_string(MorphTag t) {
    switch (t) {
        case MorphTag::landmark: return "landmark";
        case MorphTag::deep: return "deep";
        default: return "synthetic-blend";
    }
}

inline MorphTag morph_tag_from_string(const std::string& s) {
    if (s == "landmark") return MorphTag::landmark;
    if (s == "deep") return MorphTag::deep;
    if (s == "synthetic-blend") return MorphTag::synthetic_blend;
    throw ValidationError("unknown morph tag: " + s);
}

/// One morph with its two constituent identities; the unit of all datasets.
struct MorphRecord {
    std::string morph_id;
    Image morph;
    std::string id1, id2;       // id1 is the base-image identity for blends
    std::string bf1_ref, bf2_ref;
    MorphTag tag = MorphTag::synthetic_blend;
    double alpha = 0.5;         // blend weight of bf1 (synthetic corpora only)
};

inline void validate_morph_record(const MorphRecord& r) {
    if (r.morph_id.empty()) throw ValidationError("MorphRecord: empty morph_id");
    if (r.id1.empty() || r.id2.empty()) throw ValidationError("MorphRecord: empty identity id");
    if (r.id1 == r.id2) throw ValidationError("MorphRecord '" + r.morph_id + "': id1 == id2");
    if (r.morph.empty() || r.morph.width() != r.morph.height())
        throw ValidationError("MorphRecord '" + r.morph_id + "': morph pixels must be square");
}

/// Bonafide store plus morph records; everything keyed by image/morph id.
struct Corpus {
    std::string name = "synthetic";
    std::map<std::string, FaceImage> bonafides; // by image_id
    std::vector<MorphRecord> records;

    std::set<std::string> identities() const {
        std::set<std::string> ids;
        for (const auto& [img_id, f] : bonafides) ids.insert(f.identity_id);
        for (const auto& r : records) {
            ids.insert(r.id1);
            ids.insert(r.id2);
        }
        return ids;
    }

    const FaceImage& bonafide(const std::string& image_id) const {
        auto it = bonafides.find(image_id);
        if (it == bonafides.end())
            throw ValidationError("corpus: unresolved bonafide ref '" + image_id + "'");
        return it->second;
    }

    const MorphRecord& record(const std::string& morph_id) const {
        for (const auto& r : records)
            if (r.morph_id == morph_id) return r;
        throw ValidationError("corpus: unknown morph '" + morph_id + "'");
    }

    /// Both bonafide refs of every record must resolve.
    void validate() const {
        for (const auto& r : records) {
            validate_morph_record(r);
            const FaceImage& b1 = bonafide(r.bf1_ref);
            const FaceImage& b2 = bonafide(r.bf2_ref);
            if (b1.identity_id != r.id1 || b2.identity_id != r.id2)
                throw ValidationError("corpus: record '" + r.morph_id +
                                      "' bonafide refs disagree with identity ids");
        }
    }
};

/**
 * @brief Linear pixel blend: morph = alpha*bf1 + (1-alpha)*bf2.
 *
 * Desk-scale stand-in for a morphing operator; bf1 plays the base image
 * whenever alpha >= 0.5.
 */
inline MorphRecord synthesize_morph(const FaceImage& bf1, const FaceImage& bf2, double alpha,
                                    std::string morph_id = "") {
    if (!bf1.pixels.same_shape(bf2.pixels))
        throw ValidationError("synthesize_morph: dimension mismatch");
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw ValidationError("synthesize_morph: alpha must be in [0,1]");
    if (bf1.identity_id == bf2.identity_id)
        throw ValidationError("synthesize_morph: constituents share an identity");

    MorphRecord rec;
    rec.morph_id = morph_id.empty() ? ("morph_" + bf1.image_id + "_" + bf2.image_id)
                                    : std::move(morph_id);
    rec.morph = Image(bf1.pixels.width(), bf1.pixels.height());
    const float a = static_cast<float>(alpha);
    for (std::size_t i = 0; i < rec.morph.value_count(); ++i)
        rec.morph.data()[i] = a * bf1.pixels.data()[i] + (1.0f - a) * bf2.pixels.data()[i];
    rec.id1 = bf1.identity_id;
    rec.id2 = bf2.identity_id;
    rec.bf1_ref = bf1.image_id;
    rec.bf2_ref = bf2.image_id;
    rec.tag = MorphTag::synthetic_blend;
    rec.alpha = alpha;
    return rec;
}

} // namespace demorph::data
