// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file run_config.hpp
 * @brief The JSON run configuration: single source of truth for every
 * subcommand. Flags may override scalar fields only.
 *
 * Shape (see docs/run_config.schema.json for the published schema):
 * {
 *   "paths": {"corpus_dir": str, "run_dir": str},
 *   "data":  {"resolution": int, "split_ratio": num, "seed": int,
 *             "dataset_name": str},
 *   "synth": {"n_identities": int, "n_morphs": int, "alpha": num,
 *             "alpha_jitter": num},
 *   "model": {"preset": "toy"|"paper", "mode": "reference_free"|"differential",
 *             "encoder": str, optional generator/discriminator overrides},
 *   "train": {...}, "eval": {...}
 * }
 */

#pragma once

#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "demorph/bio/comparator.hpp"
#include "demorph/core/error.hpp"
#include "demorph/data/synthetic.hpp"
#include "demorph/eval/report.hpp"
#include "demorph/train/config.hpp"

namespace demorph::cli {

using nlohmann::json;

struct RunConfig {
    // paths
    std::string corpus_dir = "runs/corpus";
    std::string run_dir = "runs/exp";
    // data block
    int resolution = 64;
    double split_ratio = 0.6;
    std::uint64_t data_seed = 7;
    std::string dataset_name = "synthetic";
    // synth block
    data::SyntheticCorpusParams synth;
    // model
    model::GeneratorConfig gcfg;
    model::DiscriminatorConfig dcfg;
    std::string encoder_name = "toy";
    // train
    train::TrainConfig tcfg;
    // eval
    std::vector<bio::ComparatorDescriptor> comparators;
    eval::EvalOptions eval_opts;

    json raw; // parsed document, kept for artifact stamping
};

namespace detail {

[[noreturn]] inline void bad(const std::string& where, const std::string& what) {
    throw ConfigError("run config: " + where + ": " + what);
}

inline const json& need(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) bad(where, std::string("missing key '") + key + "'");
    return j.at(key);
}

template <typename T>
T get_as(const json& j, const char* key, const std::string& where) {
    try {
        return need(j, key, where).get<T>();
    } catch (const json::exception&) {
        bad(where, std::string("key '") + key + "' has the wrong type");
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("run config: key '") + key + "' has the wrong type");
    }
}

} // namespace detail

/**
 * @brief Parses and validates a run configuration document.
 *
 * Every block is structurally validated before any subcommand runs;
 * violations raise ConfigError with the offending location.
 */
inline RunConfig parse_run_config(const json& doc) {
    if (!doc.is_object()) detail::bad("top level", "document must be a JSON object");
    RunConfig rc;
    rc.raw = doc;

    const json& paths = detail::need(doc, "paths", "top level");
    rc.corpus_dir = detail::get_as<std::string>(paths, "corpus_dir", "paths");
    rc.run_dir = detail::get_as<std::string>(paths, "run_dir", "paths");

    const json& d = detail::need(doc, "data", "top level");
    rc.resolution = detail::get_as<int>(d, "resolution", "data");
    if (!data::valid_preprocess_size(rc.resolution))
        detail::bad("data.resolution", "must be one of {64,128,256}");
    rc.split_ratio = detail::get_as<double>(d, "split_ratio", "data");
    if (!(rc.split_ratio > 0.0 && rc.split_ratio < 1.0))
        detail::bad("data.split_ratio", "must be in (0,1)");
    rc.data_seed = detail::get_as<std::uint64_t>(d, "seed", "data");
    rc.dataset_name = detail::get_or<std::string>(d, "dataset_name", "synthetic");

    if (doc.contains("synth")) {
        const json& s = doc.at("synth");
        rc.synth.n_identities = detail::get_as<int>(s, "n_identities", "synth");
        rc.synth.n_morphs = detail::get_as<int>(s, "n_morphs", "synth");
        rc.synth.alpha = detail::get_as<double>(s, "alpha", "synth");
        rc.synth.alpha_jitter = detail::get_or<double>(s, "alpha_jitter", 0.0);
        if (rc.synth.n_identities < 2) detail::bad("synth.n_identities", "must be >= 2");
        if (rc.synth.n_morphs < 1) detail::bad("synth.n_morphs", "must be >= 1");
        if (!(rc.synth.alpha >= 0.0 && rc.synth.alpha <= 1.0))
            detail::bad("synth.alpha", "must be in [0,1]");
    }
    rc.synth.resolution = rc.resolution;
    rc.synth.seed = rc.data_seed;

    const json& m = detail::need(doc, "model", "top level");
    std::string preset = detail::get_as<std::string>(m, "preset", "model");
    model::Mode mode = model::mode_from_string(detail::get_as<std::string>(m, "mode", "model"));
    if (preset == "paper") {
        rc.gcfg = model::GeneratorConfig::paper_preset(mode);
        rc.dcfg = model::DiscriminatorConfig::paper_preset();
    } else if (preset == "toy") {
        rc.gcfg = model::GeneratorConfig::toy_preset(mode);
        rc.dcfg = model::DiscriminatorConfig::toy_preset();
    } else {
        detail::bad("model.preset", "must be 'toy' or 'paper'");
    }
    rc.gcfg.resolution = detail::get_or<int>(m, "resolution", rc.resolution);
    rc.gcfg.down_blocks = detail::get_or<int>(m, "down_blocks", rc.gcfg.down_blocks);
    rc.gcfg.up_blocks = detail::get_or<int>(m, "up_blocks", rc.gcfg.up_blocks);
    rc.gcfg.attn_down_index = detail::get_or<int>(m, "attn_down_index", rc.gcfg.attn_down_index);
    rc.gcfg.attn_up_index = detail::get_or<int>(m, "attn_up_index", rc.gcfg.attn_up_index);
    rc.gcfg.base_channels = detail::get_or<int>(m, "base_channels", rc.gcfg.base_channels);
    rc.gcfg.dropout = detail::get_or<float>(m, "dropout", rc.gcfg.dropout);
    rc.gcfg.context_len = detail::get_or<int>(m, "context_len", rc.gcfg.context_len);
    rc.gcfg.context_dim = detail::get_or<int>(m, "context_dim", rc.gcfg.context_dim);
    rc.gcfg.norm_groups = detail::get_or<int>(m, "norm_groups", rc.gcfg.norm_groups);
    rc.encoder_name = detail::get_or<std::string>(m, "encoder", "toy");
    if (rc.encoder_name != "toy")
        detail::bad("model.encoder", "only the 'toy' encoder kind ships with this build");
    rc.dcfg.blocks = detail::get_or<int>(m, "disc_blocks", rc.dcfg.blocks);
    rc.dcfg.base_channels = detail::get_or<int>(m, "disc_base_channels", rc.dcfg.base_channels);
    try {
        rc.gcfg.validate();
        rc.dcfg.validate();
    } catch (const ConfigError& e) {
        detail::bad("model", e.what());
    }

    const json& t = detail::need(doc, "train", "top level");
    std::string tpreset = detail::get_or<std::string>(t, "preset", preset);
    rc.tcfg = tpreset == "paper" ? train::TrainConfig::paper_preset(mode)
                                 : train::TrainConfig::toy_preset(mode);
    rc.tcfg.epochs = detail::get_or<int>(t, "epochs", rc.tcfg.epochs);
    rc.tcfg.lr = detail::get_or<double>(t, "lr", rc.tcfg.lr);
    rc.tcfg.beta1 = detail::get_or<double>(t, "beta1", rc.tcfg.beta1);
    rc.tcfg.beta2 = detail::get_or<double>(t, "beta2", rc.tcfg.beta2);
    rc.tcfg.batch_size = detail::get_or<int>(t, "batch_size", rc.tcfg.batch_size);
    rc.tcfg.dropout = detail::get_or<double>(t, "dropout", rc.gcfg.dropout);
    rc.tcfg.alpha = detail::get_or<double>(t, "alpha", rc.tcfg.alpha);
    rc.tcfg.seed = detail::get_or<std::uint64_t>(t, "seed", 11);
    rc.tcfg.checkpoint_interval =
        detail::get_or<int>(t, "checkpoint_interval", rc.tcfg.checkpoint_interval);
    rc.tcfg.adv_form = losses::adv_form_from_string(
        detail::get_or<std::string>(t, "adv_form", "non_saturating"));
    rc.gcfg.dropout = static_cast<float>(rc.tcfg.dropout);
    try {
        rc.tcfg.validate();
    } catch (const ConfigError& e) {
        detail::bad("train", e.what());
    }

    const json& e = detail::need(doc, "eval", "top level");
    const json& comps = detail::need(e, "comparators", "eval");
    if (!comps.is_array() || comps.empty())
        detail::bad("eval.comparators", "must be a non-empty array");
    for (const auto& c : comps) {
        bio::ComparatorDescriptor cd;
        cd.name = detail::get_as<std::string>(c, "name", "eval.comparators[]");
        std::string kind = detail::get_or<std::string>(c, "kind", "toy");
        if (kind == "toy")
            cd.kind = bio::ComparatorKind::toy;
        else if (kind == "external")
            cd.kind = bio::ComparatorKind::external;
        else
            detail::bad("eval.comparators[].kind", "must be 'toy' or 'external'");
        cd.dim = detail::get_or<int>(c, "dim", 64);
        cd.file = detail::get_or<std::string>(c, "file", "");
        if (cd.kind == bio::ComparatorKind::external && cd.file.empty())
            detail::bad("eval.comparators[]", "external kind requires 'file'");
        rc.comparators.push_back(std::move(cd));
    }
    rc.eval_opts.fmr_levels =
        detail::get_or<std::vector<double>>(e, "fmr_levels", {0.001, 0.01, 0.05, 0.10});
    for (double f : rc.eval_opts.fmr_levels)
        if (!(f >= 0.0 && f <= 1.0)) detail::bad("eval.fmr_levels", "levels must be in [0,1]");
    rc.eval_opts.theta = detail::get_or<double>(e, "theta", 0.35);
    rc.eval_opts.epsilon = detail::get_or<double>(e, "epsilon", 0.35);
    rc.eval_opts.seed = detail::get_or<std::uint64_t>(e, "seed", 3);
    rc.eval_opts.external_metrics_file =
        detail::get_or<std::string>(e, "external_metrics_file", "");

    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("run config: malformed JSON in " + path);
    return parse_run_config(doc);
}

/// True when DEMORPHLAB_DETERMINISTIC=1 (single-threaded reproducible mode).
inline bool deterministic_mode() {
    const char* v = std::getenv("DEMORPHLAB_DETERMINISTIC");
    return v && std::string(v) == "1";
}

} // namespace demorph::cli
