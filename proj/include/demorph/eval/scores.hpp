// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file scores.hpp
 * @brief Output assignment and genuine/imposter score construction.
 *
 * Reference-free outputs are unordered, so each comparator first decides
 * the output/ground-truth pairing by comparing the two possible
 * similarity sums; an exact tie is the morph-replication signature and is
 * flagged (identical outputs force equal sums, dropping match rates
 * toward zero). Genuine scores pair each output with its assigned ground
 * truth; imposters follow the protocol rules: closest bonafide excluding
 * the ground truth (reference-free) or the third-highest similarity
 * excluding ground truth and reference (differential).
 */

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "demorph/bio/comparator.hpp"
#include "demorph/core/error.hpp"
#include "demorph/eval/metrics.hpp"

namespace demorph::eval {

struct AssignResult {
    bool swapped = false;   // true: out2 matches bf1, out1 matches bf2
    bool tie = false;       // equal sums; identity pairing kept and flagged
    double keep_sum = 0.0;  // S(bf1,out1) + S(bf2,out2)
    double swap_sum = 0.0;  // S(bf1,out2) + S(bf2,out1)
};

/// Pairing rule: swap only when the swapped sum is strictly larger.
inline AssignResult assign_outputs(const bio::Embedding& out1, const bio::Embedding& out2,
                                   const bio::Embedding& bf1, const bio::Embedding& bf2) {
    AssignResult r;
    r.keep_sum = bio::similarity(bf1, out1) + bio::similarity(bf2, out2);
    r.swap_sum = bio::similarity(bf1, out2) + bio::similarity(bf2, out1);
    r.swapped = r.swap_sum > r.keep_sum;
    r.tie = r.swap_sum == r.keep_sum;
    return r;
}

/// Image-level convenience mirroring the evaluation protocol surface.
inline AssignResult assign_outputs(const FaceImage& out1, const FaceImage& out2,
                                   const FaceImage& bf1, const FaceImage& bf2,
                                   const bio::Comparator& comparator) {
    return assign_outputs(comparator.embed(out1), comparator.embed(out2), comparator.embed(bf1),
                          comparator.embed(bf2));
}

/// Bonafide database entry for imposter search.
struct DbEntry {
    std::string image_id;
    bio::Embedding emb;
};

/// Highest similarity over the database excluding the ground-truth image.
inline double imposter_closest_excluding(const bio::Embedding& out, const std::vector<DbEntry>& db,
                                         const std::string& exclude_gt) {
    bool found = false;
    double best = 0.0;
    for (const auto& e : db) {
        if (e.image_id == exclude_gt) continue;
        double s = bio::similarity(out, e.emb);
        if (!found || s > best) {
            best = s;
            found = true;
        }
    }
    if (!found)
        throw ProtocolError("imposter_closest_excluding: bonafide database needs at least "
                            "2 identities");
    return best;
}

/// Third-highest similarity excluding ground truth and reference.
inline double imposter_third_highest(const bio::Embedding& out, const std::vector<DbEntry>& db,
                                     const std::string& exclude_gt, const std::string& exclude_ref) {
    std::vector<double> sims;
    for (const auto& e : db) {
        if (e.image_id == exclude_gt || e.image_id == exclude_ref) continue;
        sims.push_back(bio::similarity(out, e.emb));
    }
    if (sims.size() < 3)
        throw ProtocolError("imposter_third_highest: need at least 3 eligible bonafides after "
                            "excluding ground truth and reference");
    std::nth_element(sims.begin(), sims.begin() + 2, sims.end(), std::greater<double>());
    return sims[2];
}

/// One demorphed record ready for scoring (reference-free).
struct RefFreeResult {
    std::string morph_id;
    bio::Embedding out1, out2; // generated outputs
    bio::Embedding bf1, bf2;   // ground truths
    std::string bf1_id, bf2_id;
};

/// One demorphed record ready for scoring (differential).
struct DifferentialResult {
    std::string morph_id;
    bio::Embedding out;
    bio::Embedding gt;
    std::string gt_id;
    std::string ref_id; // source image of the transformed reference
};

struct ScoredRecord {
    std::string morph_id;
    bool swapped = false;
    bool tie = false;
};

/// Scores plus per-record assignment flags.
struct ScoreBuildResult {
    ScoreSet scores;
    std::vector<ScoredRecord> records;
};

/**
 * @brief Genuine/imposter construction for reference-free demorphing.
 *
 * Each output contributes one genuine score (to its assigned ground
 * truth) and one imposter score (closest database face excluding that
 * output's own ground truth).
 */
inline ScoreBuildResult build_scores_reference_free(const std::vector<RefFreeResult>& results,
                                                    const std::vector<DbEntry>& db,
                                                    const std::string& comparator_name) {
    if (db.size() < 2)
        throw ProtocolError("build_scores_reference_free: bonafide database needs >= 2 identities");
    ScoreBuildResult out;
    out.scores.comparator = comparator_name;
    out.scores.mode = "reference_free";
    for (const auto& r : results) {
        AssignResult a = assign_outputs(r.out1, r.out2, r.bf1, r.bf2);
        const bio::Embedding& o_for_bf1 = a.swapped ? r.out2 : r.out1;
        const bio::Embedding& o_for_bf2 = a.swapped ? r.out1 : r.out2;
        out.scores.genuine.push_back(bio::similarity(r.bf1, o_for_bf1));
        out.scores.genuine.push_back(bio::similarity(r.bf2, o_for_bf2));
        out.scores.imposter.push_back(imposter_closest_excluding(o_for_bf1, db, r.bf1_id));
        out.scores.imposter.push_back(imposter_closest_excluding(o_for_bf2, db, r.bf2_id));
        out.records.push_back({r.morph_id, a.swapped, a.tie});
    }
    return out;
}

/**
 * @brief Genuine/imposter construction for differential demorphing:
 * genuine = S(out, gt); imposter = third-highest excluding GT and REF.
 */
inline ScoreBuildResult build_scores_differential(const std::vector<DifferentialResult>& results,
                                                  const std::vector<DbEntry>& db,
                                                  const std::string& comparator_name) {
    ScoreBuildResult out;
    out.scores.comparator = comparator_name;
    out.scores.mode = "differential";
    for (const auto& r : results) {
        out.scores.genuine.push_back(bio::similarity(r.out, r.gt));
        out.scores.imposter.push_back(imposter_third_highest(r.out, db, r.gt_id, r.ref_id));
        out.records.push_back({r.morph_id, false, false});
    }
    return out;
}

/// Morph-replication / fidelity flags for one record (theta, epsilon in
/// cosine distance). Fidelity uses the assigned pairing.
struct ReplicationFlags {
    bool replication = false; // distance(out1,out2) < theta
    bool fidelity = false;    // some assigned pair drifted beyond epsilon
    bool tie = false;
};

inline ReplicationFlags replication_and_fidelity_check(const bio::Embedding& out1,
                                                       const bio::Embedding& out2,
                                                       const bio::Embedding& gt1,
                                                       const bio::Embedding& gt2, double theta,
                                                       double epsilon) {
    ReplicationFlags f;
    f.replication = bio::distance(out1, out2) < theta;
    AssignResult a = assign_outputs(out1, out2, gt1, gt2);
    f.tie = a.tie;
    const bio::Embedding& o1 = a.swapped ? out2 : out1;
    const bio::Embedding& o2 = a.swapped ? out1 : out2;
    f.fidelity = bio::distance(o1, gt1) > epsilon || bio::distance(o2, gt2) > epsilon;
    return f;
}

inline ReplicationFlags replication_and_fidelity_check(const FaceImage& out1, const FaceImage& out2,
                                                       const FaceImage& gt1, const FaceImage& gt2,
                                                       const bio::Comparator& comparator,
                                                       double theta, double epsilon) {
    return replication_and_fidelity_check(comparator.embed(out1), comparator.embed(out2),
                                          comparator.embed(gt1), comparator.embed(gt2), theta,
                                          epsilon);
}

} // namespace demorph::eval
