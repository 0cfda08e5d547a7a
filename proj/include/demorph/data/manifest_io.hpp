// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file manifest_io.hpp
 * @brief JSON-Lines corpus/split manifests and PNG-backed corpus storage.
 *
 * Manifest format, one record per line:
 *   {"morph": path, "id1": str, "id2": str, "bf1": path, "bf2": path,
 *    "tag": str, "split": "train"|"test"|"discarded"}
 * Paths are relative to the manifest file. Records written before a split
 * omit the "split" key; discarded records carry an extra "reason".
 */

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "demorph/core/error.hpp"
#include "demorph/core/png_io.hpp"
#include "demorph/data/corpus.hpp"
#include "demorph/data/split.hpp"

namespace demorph::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace detail {

inline std::string image_rel_path(const std::string& image_id) {
    return "images/" + image_id + ".png";
}

inline std::string split_of(const SplitManifest* m, const std::string& morph_id) {
    if (!m) return "";
    for (const auto& x : m->train_morphs)
        if (x == morph_id) return "train";
    for (const auto& x : m->test_morphs)
        if (x == morph_id) return "test";
    for (const auto& x : m->discarded)
        if (x.morph_id == morph_id) return "discarded";
    return "";
}

} // namespace detail

/// Writes bonafide and morph PNGs plus the JSONL manifest under dir.
inline void save_corpus(const Corpus& corpus, const fs::path& dir,
                        const SplitManifest* split = nullptr,
                        const std::string& manifest_name = "corpus.jsonl") {
    fs::create_directories(dir / "images");
    for (const auto& [image_id, f] : corpus.bonafides)
        write_png((dir / detail::image_rel_path(image_id)).string(), f.pixels);
    for (const auto& r : corpus.records)
        write_png((dir / detail::image_rel_path(r.morph_id)).string(), r.morph);

    std::ofstream out(dir / manifest_name);
    if (!out) throw IoError("save_corpus: cannot write manifest in " + dir.string());
    for (const auto& r : corpus.records) {
        json line = {
            {"morph", detail::image_rel_path(r.morph_id)},
            {"id1", r.id1},
            {"id2", r.id2},
            {"bf1", detail::image_rel_path(r.bf1_ref)},
            {"bf2", detail::image_rel_path(r.bf2_ref)},
            {"tag", to_string(r.tag)},
        };
        line["alpha"] = r.alpha;
        std::string s = detail::split_of(split, r.morph_id);
        if (!s.empty()) line["split"] = s;
        if (s == "discarded") {
            for (const auto& d : split->discarded)
                if (d.morph_id == r.morph_id) line["reason"] = d.reason;
        }
        out << line.dump() << "\n";
    }
}

inline std::string stem_of(const std::string& rel_path) {
    return fs::path(rel_path).stem().string();
}

/**
 * @brief Loads a manifest plus its referenced PNGs into memory.
 *
 * Unreadable images are skipped with a report entry instead of aborting,
 * mirroring the preprocessing policy for undetectable faces. When the
 * manifest carries split tags they are returned as a SplitManifest.
 */
struct LoadedCorpus {
    Corpus corpus;
    std::optional<SplitManifest> split;
    std::vector<std::string> skipped; // morph_id + reason
};

inline LoadedCorpus load_corpus(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("load_corpus: cannot open " + manifest_path.string());
    fs::path base = manifest_path.parent_path();

    LoadedCorpus out;
    SplitManifest split;
    bool any_split_tag = false;

    auto load_bonafide = [&](const std::string& rel, const std::string& identity) {
        std::string image_id = stem_of(rel);
        if (!out.corpus.bonafides.count(image_id)) {
            Image px = read_png((base / rel).string());
            out.corpus.bonafides.emplace(image_id, face_image(std::move(px), identity, image_id));
        }
        return image_id;
    };

    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError("load_corpus: bad JSON at line " + std::to_string(lineno) + ": " + e.what());
        }
        MorphRecord rec;
        try {
            rec.morph_id = stem_of(j.at("morph").get<std::string>());
            rec.id1 = j.at("id1").get<std::string>();
            rec.id2 = j.at("id2").get<std::string>();
            rec.tag = morph_tag_from_string(j.at("tag").get<std::string>());
            if (j.contains("alpha")) rec.alpha = j["alpha"].get<double>();
            rec.morph = read_png((base / j.at("morph").get<std::string>()).string());
            rec.bf1_ref = load_bonafide(j.at("bf1").get<std::string>(), rec.id1);
            rec.bf2_ref = load_bonafide(j.at("bf2").get<std::string>(), rec.id2);
        } catch (const Error& e) {
            out.skipped.push_back(rec.morph_id + ": " + e.what());
            continue;
        } catch (const json::exception& e) {
            throw IoError("load_corpus: line " + std::to_string(lineno) + ": " + e.what());
        }
        out.corpus.records.push_back(std::move(rec));
        if (j.contains("split")) {
            any_split_tag = true;
            const auto& r = out.corpus.records.back();
            std::string s = j["split"].get<std::string>();
            if (s == "train") {
                split.train_morphs.push_back(r.morph_id);
                split.train_ids.insert(r.id1);
                split.train_ids.insert(r.id2);
            } else if (s == "test") {
                split.test_morphs.push_back(r.morph_id);
                split.test_ids.insert(r.id1);
                split.test_ids.insert(r.id2);
            } else if (s == "discarded") {
                split.discarded.push_back({r.morph_id, j.value("reason", "")});
            } else {
                throw IoError("load_corpus: line " + std::to_string(lineno) + ": bad split tag '" + s + "'");
            }
        }
    }
    out.corpus.validate();
    if (any_split_tag) out.split = std::move(split);
    return out;
}

/// Rewrites a corpus manifest with split assignments plus a sidecar meta file.
inline void save_split(const Corpus& corpus, const SplitManifest& split, const fs::path& dir,
                       const std::string& manifest_name = "split.jsonl") {
    save_corpus(corpus, dir, &split, manifest_name);
    json meta = {
        {"dataset", corpus.name},
        {"seed", split.seed},
        {"ratio", split.ratio},
        {"train_ids", split.train_ids},
        {"test_ids", split.test_ids},
        {"n_train_morphs", split.train_morphs.size()},
        {"n_test_morphs", split.test_morphs.size()},
        {"n_discarded", split.discarded.size()},
    };
    std::ofstream out(dir / "split_meta.json");
    if (!out) throw IoError("save_split: cannot write split_meta.json");
    out << meta.dump(2) << "\n";
}

} // namespace demorph::data
