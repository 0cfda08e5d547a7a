// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file trainer.hpp
 * @brief Adversarial training loop.
 *
 * Per batch: one discriminator update on the real triplet (MORPH,BF1,BF2)
 * versus the fake triplet (MORPH,OUT1,OUT2) with detached outputs, then
 * one generator update on adv_g + alpha * cross_road through the updated
 * discriminator. Single-threaded and fully seeded: fixed seed and data
 * order reproduce the loss log float-for-float, and checkpoints carry
 * optimizer moments plus PRNG states so split runs resume exactly.
 */

#pragma once

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "demorph/data/corpus.hpp"
#include "demorph/data/split.hpp"
#include "demorph/losses/losses.hpp"
#include "demorph/model/encoder.hpp"
#include "demorph/train/checkpoint.hpp"

namespace demorph::train {

/// One training example: morph plus its resolved constituents.
struct TrainExample {
    const data::MorphRecord* rec;
    const FaceImage* bf1;
    const FaceImage* bf2;
    model::MorphEmbedding emb; // precomputed latent condition
};

/// Resolves a manifest side against the corpus and precomputes embeddings.
inline std::vector<TrainExample> materialize_examples(const data::Corpus& corpus,
                                                      const std::vector<std::string>& morph_ids,
                                                      const model::ImageEncoder& encoder,
                                                      const model::GeneratorConfig& gcfg) {
    std::vector<TrainExample> out;
    out.reserve(morph_ids.size());
    for (const auto& mid : morph_ids) {
        const data::MorphRecord& rec = corpus.record(mid);
        TrainExample ex;
        ex.rec = &rec;
        ex.bf1 = &corpus.bonafide(rec.bf1_ref);
        ex.bf2 = &corpus.bonafide(rec.bf2_ref);
        if (rec.morph.width() != gcfg.resolution)
            throw ValidationError("materialize_examples: morph '" + mid +
                                  "' is not at model resolution; preprocess the corpus first");
        if (gcfg.mode == model::Mode::differential)
            // training references are the raw bonafides; perturbations are eval-only
            ex.emb = model::encode_morph_pair(rec.morph, ex.bf1->pixels, encoder, gcfg.context_len);
        else
            ex.emb = model::encode_morph(rec.morph, encoder, gcfg.context_len);
        out.push_back(std::move(ex));
    }
    return out;
}

inline TrainState init_train_state(const model::GeneratorConfig& gcfg,
                                   const model::DiscriminatorConfig& dcfg,
                                   const TrainConfig& tcfg, const std::string& encoder_name,
                                   const std::string& dataset_name) {
    gcfg.validate();
    dcfg.validate();
    tcfg.validate();
    if (gcfg.mode != tcfg.mode)
        throw ConfigError("init_train_state: generator/train mode mismatch");
    TrainState st;
    st.gcfg = gcfg;
    st.dcfg = dcfg;
    st.tcfg = tcfg;
    st.encoder_name = encoder_name;
    st.dataset_name = dataset_name;
    st.gen = std::make_unique<model::Generator>(gcfg);
    st.disc = std::make_unique<model::Discriminator>(dcfg);
    st.gen->init_params(tcfg.seed);
    st.disc->init_params(tcfg.seed);
    st.adam_g = Adam(tcfg.lr, tcfg.beta1, tcfg.beta2);
    st.adam_d = Adam(tcfg.lr, tcfg.beta1, tcfg.beta2);
    st.order_rng = Rng(derive_seed(tcfg.seed, 0x07DE)); // data-order stream
    st.dropout_rng = Rng(derive_seed(tcfg.seed, 0xD709)); // dropout stream
    st.epoch = 0;
    return st;
}

namespace detail {

/// Builds the batched tensors for one step. Context width follows the mode.
struct Batch {
    nn::Tensor gen_in;   // [B, 3 or 6, H, W]
    nn::Tensor ctx;      // [B, L, Deff]
    nn::Tensor gt1, gt2; // reference-free targets [B,3,H,W]
    nn::Tensor gt;       // differential target [B,3,H,W]
    nn::Tensor real_trip; // [B,9,H,W]
    nn::Tensor morph3;    // [B,3,H,W] conditioning slot for fake triplets
    nn::Tensor ref3;      // differential: [B,3,H,W] reference slot
};

inline Batch make_batch(const std::vector<TrainExample>& data, const std::vector<std::size_t>& idx,
                        const model::GeneratorConfig& g) {
    const int B = static_cast<int>(idx.size());
    const int R = g.resolution;
    const bool diff = g.mode == model::Mode::differential;
    Batch b;
    b.gen_in = nn::Tensor({B, g.in_channels(), R, R});
    b.ctx = nn::Tensor({B, g.context_len, g.effective_context_dim()});
    b.morph3 = nn::Tensor({B, 3, R, R});
    b.real_trip = nn::Tensor({B, 9, R, R});
    if (diff) {
        b.gt = nn::Tensor({B, 3, R, R});
        b.ref3 = nn::Tensor({B, 3, R, R});
    } else {
        b.gt1 = nn::Tensor({B, 3, R, R});
        b.gt2 = nn::Tensor({B, 3, R, R});
    }
    for (int n = 0; n < B; ++n) {
        const TrainExample& ex = data[idx[static_cast<std::size_t>(n)]];
        model::image_to_tensor(ex.rec->morph, b.gen_in, n, 0);
        model::image_to_tensor(ex.rec->morph, b.morph3, n, 0);
        model::image_to_tensor(ex.rec->morph, b.real_trip, n, 0);
        if (diff) {
            model::image_to_tensor(ex.bf1->pixels, b.gen_in, n, 3);
            model::image_to_tensor(ex.bf1->pixels, b.ref3, n, 0);
            model::image_to_tensor(ex.bf2->pixels, b.gt, n, 0);
            // real triplet: (morph, reference, bonafide target)
            model::image_to_tensor(ex.bf1->pixels, b.real_trip, n, 3);
            model::image_to_tensor(ex.bf2->pixels, b.real_trip, n, 6);
        } else {
            model::image_to_tensor(ex.bf1->pixels, b.gt1, n, 0);
            model::image_to_tensor(ex.bf2->pixels, b.gt2, n, 0);
            model::image_to_tensor(ex.bf1->pixels, b.real_trip, n, 3);
            model::image_to_tensor(ex.bf2->pixels, b.real_trip, n, 6);
        }
        std::copy(ex.emb.context.begin(), ex.emb.context.end(),
                  b.ctx.data() + static_cast<std::size_t>(n) * ex.emb.context.size());
    }
    return b;
}

/// Copies generated values into a detached 9-channel fake triplet.
inline nn::Tensor fake_triplet(const nn::Tensor& morph3, const nn::Tensor& middle,
                               const nn::Tensor& out, int out_ch_offset, int out_channels) {
    int B = morph3.dim(0), H = morph3.dim(2), W = morph3.dim(3);
    std::size_t plane = static_cast<std::size_t>(H) * W;
    nn::Tensor trip({B, 9, H, W});
    int out_total = out.dim(1);
    int mid_total = middle.defined() ? middle.dim(1) : 0;
    for (int n = 0; n < B; ++n) {
        std::memcpy(trip.data() + static_cast<std::size_t>(n) * 9 * plane,
                    morph3.data() + static_cast<std::size_t>(n) * 3 * plane,
                    3 * plane * sizeof(float));
        if (mid_total) {
            std::memcpy(trip.data() + (static_cast<std::size_t>(n) * 9 + 3) * plane,
                        middle.data() + static_cast<std::size_t>(n) * mid_total * plane,
                        3 * plane * sizeof(float));
            std::memcpy(trip.data() + (static_cast<std::size_t>(n) * 9 + 6) * plane,
                        out.data() + (static_cast<std::size_t>(n) * out_total + out_ch_offset) * plane,
                        3 * plane * sizeof(float));
        } else {
            std::memcpy(trip.data() + (static_cast<std::size_t>(n) * 9 + 3) * plane,
                        out.data() + (static_cast<std::size_t>(n) * out_total + out_ch_offset) * plane,
                        3 * plane * sizeof(float));
            std::memcpy(trip.data() + (static_cast<std::size_t>(n) * 9 + 6) * plane,
                        out.data() + (static_cast<std::size_t>(n) * out_total + out_ch_offset + 3) * plane,
                        3 * plane * sizeof(float));
        }
    }
    return trip;
}

} // namespace detail

/**
 * @brief Runs one optimization step on a batch; returns the loss record.
 */
inline losses::LossBreakdown train_step(TrainState& st, const detail::Batch& batch) {
    using namespace nn;
    const bool diff = st.gcfg.mode == model::Mode::differential;
    auto g_params = st.gen_params();
    auto d_params = st.disc_params();

    // --- generator forward (one pass, reused for both phases)
    Tape tg;
    Var gin = tg.constant(batch.gen_in);
    Var ctx = tg.constant(batch.ctx);
    Var out = st.gen->forward(tg, gin, ctx, st.dropout_rng);

    // --- discriminator step on detached outputs
    Tape td;
    Var real_s = st.disc->forward(td, td.constant(batch.real_trip));
    nn::Tensor fake_trip = diff
        ? detail::fake_triplet(batch.morph3, batch.ref3, out->val(), 0, 3)
        : detail::fake_triplet(batch.morph3, nn::Tensor(), out->val(), 0, 6);
    Var fake_s = st.disc->forward(td, td.constant(std::move(fake_trip)));
    Var ld = losses::adv_d_tape(td, real_s, fake_s);
    double adv_d = ld->val()[0];
    zero_grads(d_params);
    td.backward(ld);
    st.adam_d.step(d_params);

    // --- generator step through the updated discriminator
    Var trip_g;
    Var cr;
    if (diff) {
        trip_g = concat_ch(tg, tg.constant(batch.morph3), concat_ch(tg, tg.constant(batch.ref3), out));
        cr = losses::cross_road_differential_tape(tg, out, tg.constant(batch.gt));
    } else {
        trip_g = concat_ch(tg, tg.constant(batch.morph3), out);
        Var out1 = slice_ch(tg, out, 0, 3);
        Var out2 = slice_ch(tg, out, 3, 6);
        cr = losses::cross_road_tape(tg, out1, out2, tg.constant(batch.gt1), tg.constant(batch.gt2));
    }
    Var fake_s2 = st.disc->forward(tg, trip_g);
    Var lg_adv = losses::adv_g_tape(tg, fake_s2, st.tcfg.adv_form);
    Var ltot = add(tg, lg_adv, scale(tg, cr, static_cast<float>(st.tcfg.alpha)));

    double adv_g = lg_adv->val()[0];
    double cross_road = cr->val()[0];

    zero_grads(g_params);
    zero_grads(d_params); // scratch grads from this tape are discarded
    tg.backward(ltot);
    st.adam_g.step(g_params);
    zero_grads(d_params);

    return losses::LossBreakdown::make(adv_d, adv_g, cross_road, st.tcfg.alpha);
}

/**
 * @brief Trains (or continues) until tcfg.epochs, checkpointing along the way.
 *
 * @param run_dir output directory for checkpoints; empty disables files
 * @param logger receives one row per step
 */
inline void train_epochs(TrainState& st, const std::vector<TrainExample>& data,
                         losses::LossLogger& logger, const std::string& run_dir = "") {
    if (data.empty()) throw ValidationError("train: empty training split");
    namespace fs = std::filesystem;
    if (!run_dir.empty()) fs::create_directories(run_dir);

    auto checkpoint_path = [&](int epoch) {
        return (fs::path(run_dir) / ("ckpt_epoch_" + std::to_string(epoch))).string();
    };

    std::vector<std::size_t> order(data.size());

    for (int epoch = st.epoch + 1; epoch <= st.tcfg.epochs; ++epoch) {
        // order is re-derived from the stream each epoch so resumed runs
        // shuffle identically
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        st.order_rng.shuffle(order);
        int step = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += st.tcfg.batch_size) {
            std::vector<std::size_t> idx(order.begin() + pos,
                                         order.begin() + std::min(order.size(),
                                                                  pos + st.tcfg.batch_size));
            detail::Batch batch = detail::make_batch(data, idx, st.gcfg);
            losses::LossBreakdown b;
            try {
                b = train_step(st, batch);
            } catch (const DivergenceError& e) {
                throw DivergenceError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                                      ", step " + std::to_string(step) + ")");
            }
            logger.log(epoch, step, b);
            ++step;
        }
        st.epoch = epoch;
        if (!run_dir.empty() &&
            (epoch % st.tcfg.checkpoint_interval == 0 || epoch == st.tcfg.epochs))
            save_checkpoint(checkpoint_path(epoch), st);
    }
    if (!run_dir.empty() && st.tcfg.epochs == 0)
        save_checkpoint(checkpoint_path(0), st);
}

/// Fresh run: init, materialize, train.
inline TrainState train(const data::Corpus& corpus, const data::SplitManifest& manifest,
                        const model::GeneratorConfig& gcfg, const model::DiscriminatorConfig& dcfg,
                        const TrainConfig& tcfg, const model::ImageEncoder& encoder,
                        losses::LossLogger& logger, const std::string& run_dir = "") {
    if (manifest.train_morphs.empty())
        throw ValidationError("train: manifest train split is empty");
    TrainState st = init_train_state(gcfg, dcfg, tcfg, encoder.name(), corpus.name);
    auto data = materialize_examples(corpus, manifest.train_morphs, encoder, gcfg);
    train_epochs(st, data, logger, run_dir);
    return st;
}

/**
 * @brief Continues a checkpointed run; model configs must match the archive.
 */
inline void resume(TrainState& st, const data::Corpus& corpus,
                   const data::SplitManifest& manifest, const TrainConfig& tcfg,
                   const model::ImageEncoder& encoder, losses::LossLogger& logger,
                   const std::string& run_dir = "") {
    if (tcfg.mode != st.tcfg.mode)
        throw ConfigError("resume: train mode disagrees with checkpoint");
    if (encoder.name() != st.encoder_name)
        throw ConfigError("resume: encoder disagrees with checkpoint");
    TrainConfig merged = tcfg;
    merged.validate();
    st.tcfg = merged;
    auto data = materialize_examples(corpus, manifest.train_morphs, encoder, st.gcfg);
    train_epochs(st, data, logger, run_dir);
}

} // namespace demorph::train
