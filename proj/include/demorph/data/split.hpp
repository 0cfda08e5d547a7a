// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file split.hpp
 * @brief Identity-disjoint train/test partitioning of morph corpora.
 *
 * A morph belongs to the train (or test) side only when both of its
 * constituent identities fall on that side; morphs straddling the
 * partition are discarded and kept with a reason so dataset statistics
 * can be regenerated. Identities that end up contributing to zero
 * retained morphs are dropped from the manifest.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "demorph/core/error.hpp"
#include "demorph/core/rng.hpp"
#include "demorph/data/corpus.hpp"

namespace demorph::data {

struct DiscardedMorph {
    std::string morph_id;
    std::string reason;
};

/// Identity-disjoint partition of a corpus.
struct SplitManifest {
    std::set<std::string> train_ids, test_ids;
    std::vector<std::string> train_morphs, test_morphs; // morph_id refs
    std::vector<DiscardedMorph> discarded;
    std::uint64_t seed = 0;
    double ratio = 0.0;

    std::size_t retained() const { return train_morphs.size() + test_morphs.size(); }
};

/**
 * @brief Assigns morphs against a fixed train-identity set.
 *
 * Exposed separately so tests can force a partition; identities with no
 * retained morph on their side are pruned.
 */
inline SplitManifest partition_by_train_ids(const std::vector<MorphRecord>& corpus,
                                            const std::set<std::string>& train_ids) {
    SplitManifest m;
    for (const auto& r : corpus) {
        bool in1 = train_ids.count(r.id1) > 0;
        bool in2 = train_ids.count(r.id2) > 0;
        if (in1 && in2) {
            m.train_morphs.push_back(r.morph_id);
            m.train_ids.insert(r.id1);
            m.train_ids.insert(r.id2);
        } else if (!in1 && !in2) {
            m.test_morphs.push_back(r.morph_id);
            m.test_ids.insert(r.id1);
            m.test_ids.insert(r.id2);
        } else {
            m.discarded.push_back({r.morph_id, "identities straddle the train/test partition"});
        }
    }
    return m;
}

/**
 * @brief Seeded identity-disjoint split.
 *
 * The identity list is sorted, shuffled with the seeded generator and the
 * first ceil(ratio*N) identities become the train pool, so the partition
 * is a deterministic function of (identities, ratio, seed).
 */
inline SplitManifest split_identity_disjoint(const std::vector<MorphRecord>& corpus,
                                             const std::set<std::string>& identities,
                                             double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw ValidationError("split_identity_disjoint: ratio must be in (0,1)");
    if (corpus.empty())
        throw ValidationError("split_identity_disjoint: empty corpus, refusing to emit an empty manifest");
    for (const auto& r : corpus)
        if (!identities.count(r.id1) || !identities.count(r.id2))
            throw ValidationError("split_identity_disjoint: morph '" + r.morph_id +
                                  "' references an identity outside the given pool");

    std::vector<std::string> ids(identities.begin(), identities.end());
    std::sort(ids.begin(), ids.end());
    Rng rng(seed);
    rng.shuffle(ids);

    std::size_t n_train = static_cast<std::size_t>(
        std::ceil(ratio * static_cast<double>(ids.size())));
    n_train = std::min(n_train, ids.size());
    std::set<std::string> train_pool(ids.begin(), ids.begin() + n_train);

    SplitManifest m = partition_by_train_ids(corpus, train_pool);
    m.seed = seed;
    m.ratio = ratio;
    return m;
}

/// Throws unless every SplitManifest invariant holds for the given corpus.
inline void check_split_invariants(const std::vector<MorphRecord>& corpus,
                                   const SplitManifest& m) {
    for (const auto& id : m.train_ids)
        if (m.test_ids.count(id))
            throw ValidationError("split invariant: identity '" + id + "' on both sides");

    std::map<std::string, const MorphRecord*> by_id;
    for (const auto& r : corpus) by_id[r.morph_id] = &r;

    auto contains_both = [&](const std::string& morph_id, const std::set<std::string>& side) {
        auto it = by_id.find(morph_id);
        if (it == by_id.end())
            throw ValidationError("split invariant: unknown morph '" + morph_id + "'");
        return side.count(it->second->id1) && side.count(it->second->id2);
    };
    for (const auto& mid : m.train_morphs)
        if (!contains_both(mid, m.train_ids))
            throw ValidationError("split invariant: train morph '" + mid + "' not contained in train_ids");
    for (const auto& mid : m.test_morphs)
        if (!contains_both(mid, m.test_ids))
            throw ValidationError("split invariant: test morph '" + mid + "' not contained in test_ids");

    std::set<std::string> seen;
    auto account = [&](const std::string& mid) {
        if (!seen.insert(mid).second)
            throw ValidationError("split invariant: morph '" + mid + "' listed twice");
    };
    for (const auto& mid : m.train_morphs) account(mid);
    for (const auto& mid : m.test_morphs) account(mid);
    for (const auto& d : m.discarded) account(d.morph_id);
    if (seen.size() != corpus.size())
        throw ValidationError("split invariant: retained + discarded != corpus size");

    // every listed identity participates in at least one retained morph
    std::set<std::string> used_train, used_test;
    for (const auto& mid : m.train_morphs) {
        used_train.insert(by_id[mid]->id1);
        used_train.insert(by_id[mid]->id2);
    }
    for (const auto& mid : m.test_morphs) {
        used_test.insert(by_id[mid]->id1);
        used_test.insert(by_id[mid]->id2);
    }
    if (used_train != m.train_ids)
        throw ValidationError("split invariant: train_ids carries identities with no retained morph");
    if (used_test != m.test_ids)
        throw ValidationError("split invariant: test_ids carries identities with no retained morph");
}

} // namespace demorph::data
