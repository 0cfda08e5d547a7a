// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file demorphlab.cpp
 * @brief Command-line entry point wiring the pipeline end to end.
 *
 * demorphlab <subcommand> --config <path> [--seed N] [--out <dir>]
 *
 * Subcommands: synth, split, train, demorph, eval, bias, xeval.
 * The JSON config is the source of truth; flags override scalar fields.
 * Failures print a machine-readable error JSON and exit nonzero.
 * DEMORPHLAB_DETERMINISTIC=1 pins the single-threaded reproducible mode
 * (the library is sequential by construction; the flag is honored and
 * recorded for forward compatibility).
 */

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "demorph/demorph.hpp"

namespace fs = std::filesystem;
using namespace demorph;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string manifest;
    std::string checkpoint;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool needs_manifest = false,
                bool needs_checkpoint = false) {
    cmd->add_option("--config", a.config_path, "run config JSON")->required();
    cmd->add_option("--seed", a.seed, "override the subcommand's seed");
    cmd->add_option("--out", a.out_dir, "override the output directory");
    if (needs_manifest) cmd->add_option("--manifest", a.manifest, "manifest JSONL path");
    if (needs_checkpoint)
        cmd->add_option("--checkpoint", a.checkpoint, "checkpoint archive path")->required();
}

cli::RunConfig load_config(const CommonArgs& a) {
    cli::RunConfig rc = cli::load_run_config(a.config_path);
    if (!a.out_dir.empty()) rc.run_dir = a.out_dir;
    return rc;
}

std::string default_manifest(const cli::RunConfig& rc, const char* name) {
    return (fs::path(rc.run_dir) / name).string();
}

data::LoadedCorpus load_manifest(const std::string& path, int resolution) {
    data::LoadedCorpus lc = data::load_corpus(path);
    for (auto& [id, f] : lc.corpus.bonafides) f = data::preprocess(f, resolution);
    for (auto& r : lc.corpus.records) r.morph = data::preprocess(r.morph, resolution);
    for (const auto& s : lc.skipped) std::cerr << "skipped: " << s << "\n";
    return lc;
}

train::TrainState load_state_checked(const std::string& path, const cli::RunConfig& rc) {
    train::TrainState st = train::load_checkpoint(path);
    std::uint64_t want = train::model_config_hash(rc.gcfg, rc.dcfg, rc.encoder_name);
    if (st.model_hash() != want)
        throw ConfigError("checkpoint/config hash mismatch: checkpoint is " +
                          model::to_string(st.gcfg.mode) + " at resolution " +
                          std::to_string(st.gcfg.resolution) + ", config wants " +
                          model::to_string(rc.gcfg.mode) + " at resolution " +
                          std::to_string(rc.gcfg.resolution));
    return st;
}

struct SynthOverrides {
    std::optional<int> n_identities, n_morphs;
    std::optional<double> alpha;
};

int cmd_synth(const CommonArgs& args, const SynthOverrides& ov) {
    cli::RunConfig rc = load_config(args);
    data::SyntheticCorpusParams prm = rc.synth;
    if (args.seed) prm.seed = *args.seed;
    if (ov.n_identities) prm.n_identities = *ov.n_identities;
    if (ov.n_morphs) prm.n_morphs = *ov.n_morphs;
    if (ov.alpha) prm.alpha = *ov.alpha;
    data::Corpus corpus = data::build_synthetic_corpus(prm);
    corpus.name = rc.dataset_name;
    data::save_corpus(corpus, rc.corpus_dir);
    json out = {{"corpus_dir", rc.corpus_dir},
                {"manifest", (fs::path(rc.corpus_dir) / "corpus.jsonl").string()},
                {"identities", corpus.identities().size()},
                {"morphs", corpus.records.size()}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_split(const CommonArgs& args) {
    cli::RunConfig rc = load_config(args);
    std::uint64_t seed = args.seed.value_or(rc.data_seed);
    std::string manifest = args.manifest.empty()
                               ? (fs::path(rc.corpus_dir) / "corpus.jsonl").string()
                               : args.manifest;
    data::LoadedCorpus lc = load_manifest(manifest, rc.resolution);
    data::SplitManifest split = data::split_identity_disjoint(
        lc.corpus.records, lc.corpus.identities(), rc.split_ratio, seed);
    data::check_split_invariants(lc.corpus.records, split);
    lc.corpus.name = rc.dataset_name;
    data::save_split(lc.corpus, split, rc.run_dir);
    json out = {{"manifest", (fs::path(rc.run_dir) / "split.jsonl").string()},
                {"train_morphs", split.train_morphs.size()},
                {"test_morphs", split.test_morphs.size()},
                {"discarded", split.discarded.size()},
                {"train_ids", split.train_ids.size()},
                {"test_ids", split.test_ids.size()}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_train(const CommonArgs& args) {
    cli::RunConfig rc = load_config(args);
    train::TrainConfig tcfg = rc.tcfg;
    if (args.seed) tcfg.seed = *args.seed;
    std::string manifest =
        args.manifest.empty() ? default_manifest(rc, "split.jsonl") : args.manifest;
    data::LoadedCorpus lc = load_manifest(manifest, rc.gcfg.resolution);
    if (!lc.split) throw ConfigError("train: manifest carries no split tags; run split first");
    lc.corpus.name = rc.dataset_name;
    model::ToyImageEncoder encoder(rc.gcfg.context_dim, rc.encoder_name);
    losses::LossLogger logger((fs::path(rc.run_dir) / "loss_log.csv").string());
    fs::create_directories(rc.run_dir);
    train::TrainState st = train::train(lc.corpus, *lc.split, rc.gcfg, rc.dcfg, tcfg, encoder,
                                        logger, rc.run_dir);
    json out = {{"epochs", st.epoch},
                {"checkpoint",
                 (fs::path(rc.run_dir) / ("ckpt_epoch_" + std::to_string(st.epoch))).string()},
                {"loss_log", (fs::path(rc.run_dir) / "loss_log.csv").string()},
                {"config_hash", st.model_hash()}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_demorph(const CommonArgs& args, const std::string& morph_path,
                const std::string& reference_path) {
    cli::RunConfig rc = load_config(args);
    train::TrainState st = load_state_checked(args.checkpoint, rc);
    Image raw = read_png(morph_path);
    Image morph = data::preprocess(raw, st.gcfg.resolution);
    model::ToyImageEncoder encoder(st.gcfg.context_dim, st.encoder_name);
    fs::path out_dir = rc.run_dir;
    fs::create_directories(out_dir);
    std::uint64_t seed = args.seed.value_or(rc.eval_opts.seed);
    json out;
    if (st.gcfg.mode == model::Mode::reference_free) {
        if (!reference_path.empty())
            throw ValidationError("demorph: reference given but checkpoint is reference-free");
        model::MorphEmbedding emb = model::encode_morph(morph, encoder, st.gcfg.context_len);
        auto [o1, o2] = st.gen->generate(morph, emb, seed);
        write_png((out_dir / "out1.png").string(), o1);
        write_png((out_dir / "out2.png").string(), o2);
        out = {{"out1", (out_dir / "out1.png").string()}, {"out2", (out_dir / "out2.png").string()}};
    } else {
        if (reference_path.empty())
            throw ValidationError("demorph: differential checkpoint requires --reference");
        Image ref = data::preprocess(read_png(reference_path), st.gcfg.resolution);
        model::MorphEmbedding emb =
            model::encode_morph_pair(morph, ref, encoder, st.gcfg.context_len);
        Image o = st.gen->generate_differential(morph, ref, emb, seed);
        write_png((out_dir / "out.png").string(), o);
        out = {{"out", (out_dir / "out.png").string()}};
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

int run_eval(const CommonArgs& args, const char* prefix) {
    cli::RunConfig rc = load_config(args);
    eval::EvalOptions opts = rc.eval_opts;
    if (args.seed) opts.seed = *args.seed;
    train::TrainState st = load_state_checked(args.checkpoint, rc);
    std::string manifest =
        args.manifest.empty() ? default_manifest(rc, "split.jsonl") : args.manifest;
    data::LoadedCorpus lc = load_manifest(manifest, st.gcfg.resolution);
    if (!lc.split) throw ConfigError("eval: manifest carries no split tags; run split first");
    lc.corpus.name = rc.dataset_name;
    model::ToyImageEncoder encoder(st.gcfg.context_dim, st.encoder_name);
    bio::ComparatorRegistry registry(rc.comparators);
    eval::EvalReport report = eval::evaluate(lc.corpus, *lc.split, st, encoder, registry, opts);
    eval::write_eval_artifacts(report, rc.run_dir, prefix);
    std::cout << eval::to_json(report).dump(2) << "\n";
    return 0;
}

int cmd_bias(const CommonArgs& args) {
    cli::RunConfig rc = load_config(args);
    std::string manifest = args.manifest.empty()
                               ? (fs::path(rc.corpus_dir) / "corpus.jsonl").string()
                               : args.manifest;
    data::LoadedCorpus lc = load_manifest(manifest, rc.resolution);
    lc.corpus.name = rc.dataset_name;
    bio::ComparatorRegistry registry(rc.comparators);
    std::vector<const data::MorphRecord*> recs;
    for (const auto& r : lc.corpus.records) recs.push_back(&r);
    json comps = json::object();
    for (const auto& cname : registry.names()) {
        eval::IntrinsicBiasReport b = eval::intrinsic_bias(lc.corpus, recs, registry.get(cname));
        comps[cname] = {{"d_prime", std::isinf(b.d_prime) ? json("inf") : json(b.d_prime)},
                        {"mean_morph_bf1", b.mean_bf1},
                        {"mean_morph_bf2", b.mean_bf2},
                        {"n_morphs", b.n}};
    }
    json out = {{"dataset", rc.dataset_name}, {"comparators", comps}};
    fs::create_directories(rc.run_dir);
    std::ofstream f(fs::path(rc.run_dir) / "bias_report.json");
    f << out.dump(2) << "\n";
    std::cout << out.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"demorphlab: face demorphing pipeline (synthesis, split, training, evaluation)"};
    app.require_subcommand(1);

    CommonArgs synth_a, split_a, train_a, demorph_a, eval_a, bias_a, xeval_a;
    std::string morph_path, reference_path;
    std::optional<int> n_identities, n_morphs;
    std::optional<double> alpha;

    CLI::App* synth = app.add_subcommand("synth", "generate the synthetic corpus");
    add_common(synth, synth_a);
    synth->add_option("--n-identities", n_identities, "override synth.n_identities");
    synth->add_option("--n-morphs", n_morphs, "override synth.n_morphs");
    synth->add_option("--alpha", alpha, "override synth.alpha");

    CLI::App* split = app.add_subcommand("split", "identity-disjoint train/test split");
    add_common(split, split_a, true);

    CLI::App* train_c = app.add_subcommand("train", "adversarial training");
    add_common(train_c, train_a, true);

    CLI::App* demorph_c = app.add_subcommand("demorph", "demorph a single image");
    add_common(demorph_c, demorph_a, false, true);
    demorph_c->add_option("--morph", morph_path, "morph PNG")->required();
    demorph_c->add_option("--reference", reference_path, "reference PNG (differential mode)");

    CLI::App* eval_c = app.add_subcommand("eval", "full evaluation protocol");
    add_common(eval_c, eval_a, true, true);

    CLI::App* bias_c = app.add_subcommand("bias", "intrinsic base-image bias report");
    add_common(bias_c, bias_a, true);

    CLI::App* xeval = app.add_subcommand("xeval", "cross-dataset evaluation");
    add_common(xeval, xeval_a, true, true);

    CLI11_PARSE(app, argc, argv);

    if (cli::deterministic_mode())
        std::cerr << "deterministic mode: single-threaded, seeded run\n";

    try {
        if (synth->parsed()) return cmd_synth(synth_a, {n_identities, n_morphs, alpha});
        if (split->parsed()) return cmd_split(split_a);
        if (train_c->parsed()) return cmd_train(train_a);
        if (demorph_c->parsed()) return cmd_demorph(demorph_a, morph_path, reference_path);
        if (eval_c->parsed()) return run_eval(eval_a, "eval");
        if (bias_c->parsed()) return cmd_bias(bias_a);
        if (xeval->parsed()) return run_eval(xeval_a, "xeval");
    } catch (const Error& e) {
        json err = {{"error", {{"type", e.type()}, {"message", e.what()}}}};
        std::cout << err.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        json err = {{"error", {{"type", "InternalError"}, {"message", e.what()}}}};
        std::cout << err.dump() << "\n";
        return 1;
    }
    return 0;
}
