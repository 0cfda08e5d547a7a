// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

#include <gtest/gtest.h>

#include "demorph/bio/comparator.hpp"
#include "demorph/data/corpus.hpp"
#include "test_support.hpp"

using namespace demorph;
using namespace demorph::bio;

namespace {
Embedding vec(std::initializer_list<double> xs, const std::string& name = "toy") {
    Embedding e;
    e.v = xs;
    e.comparator = name;
    return e;
}
} // namespace

TEST(Similarity, HandComputedValues) {
    EXPECT_DOUBLE_EQ(similarity(vec({1, 0}), vec({1, 0})), 1.0);
    EXPECT_DOUBLE_EQ(similarity(vec({1, 0}), vec({-1, 0})), -1.0);
    EXPECT_NEAR(similarity(vec({1, 0}), vec({0.6, 0.8})), 0.6, 1e-12);
    EXPECT_NEAR(distance(vec({1, 0}), vec({0.6, 0.8})), 0.4, 1e-12);
    EXPECT_DOUBLE_EQ(distance(vec({1, 0}), vec({1, 0})), 0.0);
    EXPECT_DOUBLE_EQ(distance(vec({1, 0}), vec({-1, 0})), 2.0);
}

TEST(Similarity, ZeroVectorScoresZero) {
    EXPECT_DOUBLE_EQ(similarity(vec({0, 0}), vec({1, 0})), 0.0);
}

TEST(Similarity, Validation) {
    EXPECT_THROW(similarity(vec({1, 0}, "a"), vec({1, 0}, "b")), ValidationError);
    EXPECT_THROW(similarity(vec({1, 0}), vec({1, 0, 0})), ValidationError);
}

TEST(Similarity, SymmetryAndRangeProperties) {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        Embedding a, b;
        a.comparator = b.comparator = "toy";
        for (int d = 0; d < 16; ++d) {
            a.v.push_back(rng.normal());
            b.v.push_back(rng.normal());
        }
        double sab = similarity(a, b), sba = similarity(b, a);
        ASSERT_EQ(sab, sba); // exact symmetry
        ASSERT_GE(sab, -1.0 - 1e-9);
        ASSERT_LE(sab, 1.0 + 1e-9);
        ASSERT_NEAR(distance(a, b) + sab, 1.0, 1e-12);
    }
}

TEST(ToyComparator, DeterministicUnitNorm) {
    ToyComparator cmp("toy", 64);
    Rng rng(4);
    FaceImage f = testutil::random_face(rng, 32, "A", "a0");
    Embedding e1 = cmp.embed(f);
    Embedding e2 = cmp.embed(f);
    EXPECT_EQ(e1.v, e2.v);
    double n = 0.0;
    for (double x : e1.v) n += x * x;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
    EXPECT_EQ(static_cast<int>(e1.v.size()), 64);
}

TEST(ToyComparator, MorphSitsCloserThanOtherIdentity) {
    // linear-ish embedder places the 0.5-blend nearer to its constituents
    // than the constituents are to each other
    ToyComparator cmp("toy", 64);
    Rng rng(5);
    int hold = 0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
        FaceImage a = testutil::random_face(rng, 32, "A", "a");
        FaceImage b = testutil::random_face(rng, 32, "B", "b");
        data::MorphRecord m = data::synthesize_morph(a, b, 0.5);
        FaceImage mf{m.morph, "A", "m"};
        double s_morph_a = similarity(cmp.embed(mf), cmp.embed(a));
        double s_a_b = similarity(cmp.embed(a), cmp.embed(b));
        if (s_morph_a >= s_a_b) ++hold;
    }
    EXPECT_EQ(hold, trials);
}

TEST(Registry, LookupAndErrors) {
    ComparatorRegistry reg({{"toy", 64, ComparatorKind::toy, ""}});
    EXPECT_EQ(reg.get("toy").dim(), 64);
    EXPECT_THROW(reg.get("missing"), RegistryError);
    EXPECT_THROW(ComparatorRegistry({{"bad", 0, ComparatorKind::toy, ""}}), ValidationError);
}

TEST(EmbeddingCsv, RoundTripAndExternalComparator) {
    auto dir = testutil::temp_dir("embeddings");
    ToyComparator cmp("frs-a", 32);
    Rng rng(6);
    std::map<std::string, Embedding> table;
    std::vector<FaceImage> faces;
    for (int i = 0; i < 4; ++i) {
        faces.push_back(testutil::random_face(rng, 32, "id" + std::to_string(i),
                                              "img" + std::to_string(i)));
        table[faces.back().image_id] = cmp.embed(faces.back());
    }
    std::string path = (dir / "emb.csv").string();
    write_embeddings_csv(path, table);

    ExternalComparator ext("frs-a", path);
    EXPECT_EQ(ext.dim(), 32);
    for (const auto& f : faces) {
        Embedding got = ext.embed(f);
        Embedding want = table[f.image_id];
        ASSERT_EQ(got.v.size(), want.v.size());
        for (std::size_t d = 0; d < got.v.size(); ++d) ASSERT_NEAR(got.v[d], want.v[d], 1e-15);
    }
    FaceImage unknown = testutil::random_face(rng, 32, "x", "nope");
    EXPECT_THROW(ext.embed(unknown), RegistryError);
}
