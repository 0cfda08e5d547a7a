// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file report.hpp
 * @brief Full evaluation runs: demorph the test split, score it per
 * comparator, and assemble the metrics bundle (TMR grid, d', distance
 * distributions, replication flags, IQA, intrinsic bias).
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "demorph/bio/comparator.hpp"
#include "demorph/data/manifest_io.hpp"
#include "demorph/data/transforms.hpp"
#include "demorph/eval/iqa.hpp"
#include "demorph/eval/metrics.hpp"
#include "demorph/eval/scores.hpp"
#include "demorph/model/encoder.hpp"
#include "demorph/train/checkpoint.hpp"

namespace demorph::eval {

using nlohmann::json;

struct EvalOptions {
    std::vector<double> fmr_levels = {0.001, 0.01, 0.05, 0.10};
    double theta = 0.35;   // replication threshold (cosine distance); artifact default
    double epsilon = 0.35; // fidelity threshold (cosine distance); artifact default
    std::uint64_t seed = 0;
    std::string external_metrics_file; // optional FID/LPIPS provider response
};

struct DistanceSummary {
    std::vector<double> out1_out2, bf1_out1, bf2_out2;
    double mean_out1_out2 = 0.0, mean_bf1_out1 = 0.0, mean_bf2_out2 = 0.0;
};

struct ReplicationCounts {
    int records = 0;
    int ties = 0;
    int replication_flags = 0;
    int fidelity_flags = 0;
};

struct ComparatorReport {
    std::map<double, double> tmr_at_fmr;
    double d_prime = 0.0; // genuine vs imposter separation
    DistanceSummary distances;
    ReplicationCounts replication;
    ScoreSet scores;
    std::vector<ScoredRecord> records;
};

struct IqaReport {
    double ssim = 0.0;
    double psnr = 0.0;
    std::optional<double> fid;   // provider-plugged; null when absent
    std::optional<double> lpips;
};

struct EvalReport {
    std::string dataset;
    std::string train_dataset;
    std::string mode;
    std::uint64_t config_hash = 0;
    int n_records = 0;
    std::map<std::string, ComparatorReport> per_comparator;
    IqaReport iqa;
};

// ============================================================================
// Demorphing the test split
// ============================================================================

/// Generated outputs for one test record, kept as images for IQA.
struct DemorphedRecord {
    const data::MorphRecord* rec = nullptr;
    FaceImage out1, out2; // out2 unused in differential mode
    FaceImage reference;  // differential only (transformed bonafide)
};

inline std::vector<DemorphedRecord> demorph_test_split(const data::Corpus& corpus,
                                                       const std::vector<std::string>& morph_ids,
                                                       train::TrainState& st,
                                                       const model::ImageEncoder& encoder,
                                                       const EvalOptions& opts) {
    std::vector<DemorphedRecord> out;
    out.reserve(morph_ids.size());
    const auto& gcfg = st.gcfg;
    std::size_t idx = 0;
    for (const auto& mid : morph_ids) {
        const data::MorphRecord& rec = corpus.record(mid);
        DemorphedRecord d;
        d.rec = &rec;
        std::uint64_t drop_seed = derive_seed(opts.seed, 7000 + idx);
        if (gcfg.mode == model::Mode::reference_free) {
            model::MorphEmbedding emb = model::encode_morph(rec.morph, encoder, gcfg.context_len);
            auto [o1, o2] = st.gen->generate(rec.morph, emb, drop_seed);
            d.out1 = FaceImage{std::move(o1), rec.id1, rec.morph_id + "#out1"};
            d.out2 = FaceImage{std::move(o2), rec.id2, rec.morph_id + "#out2"};
        } else {
            // the live reference never exactly matches enrollment: perturb it
            const FaceImage& bf1 = corpus.bonafide(rec.bf1_ref);
            d.reference = data::apply_reference_transforms(bf1, derive_seed(opts.seed, 90000 + idx));
            model::MorphEmbedding emb =
                model::encode_morph_pair(rec.morph, d.reference.pixels, encoder, gcfg.context_len);
            Image o = st.gen->generate_differential(rec.morph, d.reference.pixels, emb, drop_seed);
            d.out1 = FaceImage{std::move(o), rec.id2, rec.morph_id + "#out"};
        }
        out.push_back(std::move(d));
        ++idx;
    }
    return out;
}

// ============================================================================
// Distance distributions and intrinsic bias
// ============================================================================

/// Cosine distances for OUT1-OUT2, BF1-OUT1, BF2-OUT2 under the assigned pairing.
inline DistanceSummary distance_distributions(const std::vector<RefFreeResult>& results) {
    DistanceSummary s;
    for (const auto& r : results) {
        AssignResult a = assign_outputs(r.out1, r.out2, r.bf1, r.bf2);
        const bio::Embedding& o1 = a.swapped ? r.out2 : r.out1;
        const bio::Embedding& o2 = a.swapped ? r.out1 : r.out2;
        s.out1_out2.push_back(bio::distance(o1, o2));
        s.bf1_out1.push_back(bio::distance(r.bf1, o1));
        s.bf2_out2.push_back(bio::distance(r.bf2, o2));
    }
    auto mean = [](const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        double acc = 0.0;
        for (double x : v) acc += x;
        return acc / static_cast<double>(v.size());
    };
    s.mean_out1_out2 = mean(s.out1_out2);
    s.mean_bf1_out1 = mean(s.bf1_out1);
    s.mean_bf2_out2 = mean(s.bf2_out2);
    return s;
}

struct IntrinsicBiasReport {
    double d_prime = 0.0;
    double mean_bf1 = 0.0; // mean S(morph, bf1): bf1 is the base image
    double mean_bf2 = 0.0;
    int n = 0;
    std::vector<double> sims_bf1, sims_bf2;
};

/**
 * @brief Base-image bias: d' between S(MORPH,BF1) and S(MORPH,BF2)
 * distributions. bf1 is the base (higher-weight) constituent.
 */
inline IntrinsicBiasReport intrinsic_bias(const data::Corpus& corpus,
                                          const std::vector<const data::MorphRecord*>& records,
                                          const bio::Comparator& comparator) {
    if (records.size() < 2)
        throw ValidationError("intrinsic_bias: need at least 2 morphs (variance undefined)");
    IntrinsicBiasReport r;
    for (const auto* rec : records) {
        FaceImage morph{rec->morph, rec->id1, rec->morph_id};
        bio::Embedding em = comparator.embed(morph);
        bio::Embedding e1 = comparator.embed(corpus.bonafide(rec->bf1_ref));
        bio::Embedding e2 = comparator.embed(corpus.bonafide(rec->bf2_ref));
        r.sims_bf1.push_back(bio::similarity(em, e1));
        r.sims_bf2.push_back(bio::similarity(em, e2));
    }
    r.n = static_cast<int>(records.size());
    r.d_prime = d_prime(r.sims_bf1, r.sims_bf2);
    auto mean = [](const std::vector<double>& v) {
        double acc = 0.0;
        for (double x : v) acc += x;
        return acc / static_cast<double>(v.size());
    };
    r.mean_bf1 = mean(r.sims_bf1);
    r.mean_bf2 = mean(r.sims_bf2);
    return r;
}

// ============================================================================
// Full evaluation
// ============================================================================

namespace detail {

inline std::vector<DbEntry> build_db(const data::Corpus& corpus,
                                     const std::set<std::string>& side_ids,
                                     const bio::Comparator& comparator) {
    std::vector<DbEntry> db;
    for (const auto& [image_id, f] : corpus.bonafides)
        if (side_ids.count(f.identity_id))
            db.push_back({image_id, comparator.embed(f)});
    return db;
}

} // namespace detail

/**
 * @brief Runs the full protocol on the manifest's test split.
 *
 * Generation happens once; every registered comparator then assigns,
 * scores and aggregates independently. IQA pairs outputs with ground
 * truths under the first comparator's assignment.
 */
inline EvalReport evaluate(const data::Corpus& corpus, const data::SplitManifest& manifest,
                           train::TrainState& st, const model::ImageEncoder& encoder,
                           const bio::ComparatorRegistry& registry, const EvalOptions& opts,
                           std::vector<DemorphedRecord>* demorphed_out = nullptr) {
    if (manifest.test_morphs.empty())
        throw ProtocolError("evaluate: manifest test split is empty");
    if (registry.empty()) throw ProtocolError("evaluate: no comparators configured");

    EvalReport report;
    report.dataset = corpus.name;
    report.train_dataset = st.dataset_name;
    report.mode = model::to_string(st.gcfg.mode);
    report.config_hash = st.model_hash();
    report.n_records = static_cast<int>(manifest.test_morphs.size());

    std::vector<DemorphedRecord> dem =
        demorph_test_split(corpus, manifest.test_morphs, st, encoder, opts);

    const bool diff = st.gcfg.mode == model::Mode::differential;
    bool first_comparator = true;
    for (const auto& cname : registry.names()) {
        const bio::Comparator& cmp = registry.get(cname);
        std::vector<DbEntry> db = detail::build_db(corpus, manifest.test_ids, cmp);
        ComparatorReport cr;

        if (!diff) {
            std::vector<RefFreeResult> results;
            for (const auto& d : dem) {
                RefFreeResult r;
                r.morph_id = d.rec->morph_id;
                r.out1 = cmp.embed(d.out1);
                r.out2 = cmp.embed(d.out2);
                r.bf1 = cmp.embed(corpus.bonafide(d.rec->bf1_ref));
                r.bf2 = cmp.embed(corpus.bonafide(d.rec->bf2_ref));
                r.bf1_id = d.rec->bf1_ref;
                r.bf2_id = d.rec->bf2_ref;
                results.push_back(std::move(r));
            }
            ScoreBuildResult sb = build_scores_reference_free(results, db, cname);
            sb.scores.dataset = corpus.name;
            cr.scores = sb.scores;
            cr.records = sb.records;
            cr.tmr_at_fmr = tmr_at_fmr(sb.scores, opts.fmr_levels);
            cr.d_prime = d_prime(sb.scores.genuine, sb.scores.imposter);
            cr.distances = distance_distributions(results);
            cr.replication.records = static_cast<int>(results.size());
            for (std::size_t i = 0; i < results.size(); ++i) {
                ReplicationFlags f = replication_and_fidelity_check(
                    results[i].out1, results[i].out2, results[i].bf1, results[i].bf2, opts.theta,
                    opts.epsilon);
                cr.replication.ties += sb.records[i].tie ? 1 : 0;
                cr.replication.replication_flags += f.replication ? 1 : 0;
                cr.replication.fidelity_flags += f.fidelity ? 1 : 0;
            }
            if (first_comparator) {
                // IQA under this comparator's assignment
                double ssim_acc = 0.0, psnr_acc = 0.0;
                for (std::size_t i = 0; i < dem.size(); ++i) {
                    AssignResult a =
                        assign_outputs(results[i].out1, results[i].out2, results[i].bf1, results[i].bf2);
                    const Image& o1 = a.swapped ? dem[i].out2.pixels : dem[i].out1.pixels;
                    const Image& o2 = a.swapped ? dem[i].out1.pixels : dem[i].out2.pixels;
                    const Image& g1 = corpus.bonafide(dem[i].rec->bf1_ref).pixels;
                    const Image& g2 = corpus.bonafide(dem[i].rec->bf2_ref).pixels;
                    ssim_acc += 0.5 * (ssim(o1, g1) + ssim(o2, g2));
                    psnr_acc += 0.5 * (psnr(o1, g1) + psnr(o2, g2));
                }
                report.iqa.ssim = ssim_acc / static_cast<double>(dem.size());
                report.iqa.psnr = psnr_acc / static_cast<double>(dem.size());
            }
        } else {
            std::vector<DifferentialResult> results;
            for (const auto& d : dem) {
                DifferentialResult r;
                r.morph_id = d.rec->morph_id;
                r.out = cmp.embed(d.out1);
                r.gt = cmp.embed(corpus.bonafide(d.rec->bf2_ref));
                r.gt_id = d.rec->bf2_ref;
                r.ref_id = d.rec->bf1_ref; // exclusion key of the transformed reference
                results.push_back(std::move(r));
            }
            ScoreBuildResult sb = build_scores_differential(results, db, cname);
            sb.scores.dataset = corpus.name;
            cr.scores = sb.scores;
            cr.records = sb.records;
            cr.tmr_at_fmr = tmr_at_fmr(sb.scores, opts.fmr_levels);
            cr.d_prime = d_prime(sb.scores.genuine, sb.scores.imposter);
            cr.replication.records = static_cast<int>(results.size());
            if (first_comparator) {
                double ssim_acc = 0.0, psnr_acc = 0.0;
                for (const auto& d : dem) {
                    const Image& gt = corpus.bonafide(d.rec->bf2_ref).pixels;
                    ssim_acc += ssim(d.out1.pixels, gt);
                    psnr_acc += psnr(d.out1.pixels, gt);
                }
                report.iqa.ssim = ssim_acc / static_cast<double>(dem.size());
                report.iqa.psnr = psnr_acc / static_cast<double>(dem.size());
            }
        }
        report.per_comparator[cname] = std::move(cr);
        first_comparator = false;
    }

    // learned metrics come from the external provider file, never computed here
    if (!opts.external_metrics_file.empty()) {
        std::ifstream in(opts.external_metrics_file);
        if (!in) throw IoError("evaluate: cannot open external metrics file " +
                               opts.external_metrics_file);
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded())
            throw IoError("evaluate: malformed external metrics file");
        if (j.contains("fid") && !j["fid"].is_null()) report.iqa.fid = j["fid"].get<double>();
        if (j.contains("lpips") && !j["lpips"].is_null())
            report.iqa.lpips = j["lpips"].get<double>();
    }

    if (demorphed_out) *demorphed_out = std::move(dem);
    return report;
}

/**
 * @brief Cross-dataset generalization: a model trained elsewhere runs the
 * full protocol on a foreign manifest; the report is tagged with both
 * dataset names.
 */
inline EvalReport cross_dataset_eval(const data::Corpus& foreign_corpus,
                                     const data::SplitManifest& foreign_manifest,
                                     train::TrainState& st, const model::ImageEncoder& encoder,
                                     const bio::ComparatorRegistry& registry,
                                     const EvalOptions& opts) {
    return evaluate(foreign_corpus, foreign_manifest, st, encoder, registry, opts);
}

// ============================================================================
// Serialization
// ============================================================================

inline json to_json(const EvalReport& r) {
    json j;
    j["dataset"] = r.dataset;
    j["train_dataset"] = r.train_dataset;
    j["mode"] = r.mode;
    j["config_hash"] = r.config_hash;
    j["n_records"] = r.n_records;
    json comps = json::object();
    for (const auto& [name, cr] : r.per_comparator) {
        json c;
        json tmr = json::object();
        for (const auto& [f, tmr_v] : cr.tmr_at_fmr) {
            char key[32];
            std::snprintf(key, sizeof key, "%g", f);
            tmr[key] = tmr_v;
        }
        c["tmr_at_fmr"] = tmr;
        c["d_prime"] = std::isinf(cr.d_prime) ? json("inf") : json(cr.d_prime);
        if (r.mode == "reference_free")
            c["distance_means"] = {{"out1_out2", cr.distances.mean_out1_out2},
                                   {"bf1_out1", cr.distances.mean_bf1_out1},
                                   {"bf2_out2", cr.distances.mean_bf2_out2}};
        c["replication"] = {{"records", cr.replication.records},
                            {"ties", cr.replication.ties},
                            {"replication_flags", cr.replication.replication_flags},
                            {"fidelity_flags", cr.replication.fidelity_flags}};
        comps[name] = std::move(c);
    }
    j["comparators"] = std::move(comps);
    j["iqa"] = {{"ssim", r.iqa.ssim},
                {"psnr", r.iqa.psnr},
                {"fid", r.iqa.fid ? json(*r.iqa.fid) : json(nullptr)},
                {"lpips", r.iqa.lpips ? json(*r.iqa.lpips) : json(nullptr)}};
    return j;
}

/// Score CSV: kind,image_id,score,comparator (one row per score).
inline void write_scores_csv(const std::string& path, const ScoreSet& s,
                             const std::vector<ScoredRecord>& records) {
    std::ofstream out(path);
    if (!out) throw IoError("write_scores_csv: cannot open " + path);
    out << "kind,image_id,score,comparator\n";
    out.precision(17);
    std::size_t per_record = records.empty() ? 1 : s.genuine.size() / records.size();
    for (std::size_t i = 0; i < s.genuine.size(); ++i) {
        std::string id = records.empty() ? "" : records[i / per_record].morph_id;
        out << "genuine," << id << "," << s.genuine[i] << "," << s.comparator << "\n";
    }
    for (std::size_t i = 0; i < s.imposter.size(); ++i) {
        std::string id = records.empty() ? "" : records[i / per_record].morph_id;
        out << "imposter," << id << "," << s.imposter[i] << "," << s.comparator << "\n";
    }
}

/// Histogram CSV (bin_left,bin_right,count) over a fixed range.
inline void write_histogram_csv(const std::string& path, const std::vector<double>& values,
                                double lo, double hi, int bins = 40) {
    std::ofstream out(path);
    if (!out) throw IoError("write_histogram_csv: cannot open " + path);
    out << "bin_left,bin_right,count\n";
    out.precision(17);
    std::vector<int> counts(static_cast<std::size_t>(bins), 0);
    const double w = (hi - lo) / bins;
    for (double v : values) {
        int b = static_cast<int>((v - lo) / w);
        b = std::clamp(b, 0, bins - 1);
        ++counts[static_cast<std::size_t>(b)];
    }
    for (int b = 0; b < bins; ++b)
        out << lo + b * w << "," << lo + (b + 1) * w << "," << counts[static_cast<std::size_t>(b)]
            << "\n";
}

/// Writes the report JSON plus score and histogram CSVs into out_dir.
inline void write_eval_artifacts(const EvalReport& report, const std::filesystem::path& out_dir,
                                 const std::string& prefix = "eval") {
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream out(out_dir / (prefix + "_report.json"));
        if (!out) throw IoError("write_eval_artifacts: cannot write report");
        out << to_json(report).dump(2) << "\n";
    }
    for (const auto& [cname, cr] : report.per_comparator) {
        write_scores_csv((out_dir / (prefix + "_scores_" + cname + ".csv")).string(), cr.scores,
                         cr.records);
        write_histogram_csv((out_dir / (prefix + "_hist_genuine_" + cname + ".csv")).string(),
                            cr.scores.genuine, -1.0, 1.0);
        write_histogram_csv((out_dir / (prefix + "_hist_imposter_" + cname + ".csv")).string(),
                            cr.scores.imposter, -1.0, 1.0);
        if (report.mode == "reference_free")
            write_histogram_csv((out_dir / (prefix + "_hist_out1out2_" + cname + ".csv")).string(),
                                cr.distances.out1_out2, 0.0, 2.0);
    }
}

} // namespace demorph::eval
