// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file config.hpp
 * @brief Training configuration, presets and JSON (de)serialization of
 * all model/train config blocks plus the model config hash.
 */

#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "demorph/core/error.hpp"
#include "demorph/core/rng.hpp"
#include "demorph/losses/losses.hpp"
#include "demorph/model/discriminator.hpp"
#include "demorph/model/generator.hpp"

namespace demorph::train {

using nlohmann::json;

enum class Preset { toy, paper };

inline std::string to_string(Preset p) { return p == Preset::toy ? "toy" : "paper"; }

inline Preset preset_from_string(const std::string& s) {
    if (s == "toy") return Preset::toy;
    if (s == "paper") return Preset::paper;
    throw ConfigError("unknown preset '" + s + "'");
}

struct TrainConfig {
    int epochs = 30;
    double lr = 1e-3;
    double beta1 = 0.5;
    double beta2 = 0.999;
    int batch_size = 8;
    double dropout = 0.1;
    double alpha = 1.0;
    std::uint64_t seed = 0;
    model::Mode mode = model::Mode::reference_free;
    Preset preset = Preset::toy;
    losses::AdvForm adv_form = losses::AdvForm::non_saturating;
    int checkpoint_interval = 10;

    static TrainConfig toy_preset(model::Mode mode = model::Mode::reference_free) {
        TrainConfig c;
        c.mode = mode;
        return c;
    }

    /// Paper settings: 300 epochs, Adam(1e-4, 0.5, 0.999), dropout 0.1, alpha 1.
    static TrainConfig paper_preset(model::Mode mode = model::Mode::reference_free) {
        TrainConfig c;
        c.preset = Preset::paper;
        c.mode = mode;
        c.epochs = 300;
        c.lr = 1e-4;
        c.beta1 = 0.5;
        c.beta2 = 0.999;
        c.dropout = 0.1;
        c.alpha = 1.0;
        c.batch_size = 16;
        return c;
    }

    void validate() const {
        if (lr <= 0.0) throw ConfigError("TrainConfig: lr must be positive");
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw ConfigError("TrainConfig: betas must be in [0,1)");
        if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
        if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
        if (!(dropout >= 0.0 && dropout < 1.0))
            throw ConfigError("TrainConfig: dropout must be in [0,1)");
        if (checkpoint_interval < 1)
            throw ConfigError("TrainConfig: checkpoint_interval must be >= 1");
        if (preset == Preset::paper) {
            // pinned settings; refuse silent drift from the published recipe
            if (epochs != 300 || lr != 1e-4 || beta1 != 0.5 || beta2 != 0.999 ||
                dropout != 0.1 || alpha != 1.0)
                throw ConfigError("TrainConfig: paper preset pins epochs=300, lr=1e-4, "
                                  "beta1=0.5, beta2=0.999, dropout=0.1, alpha=1");
        }
    }
};

// ============================================================================
// JSON serialization of config blocks
// ============================================================================

inline json to_json(const model::GeneratorConfig& c) {
    return json{{"resolution", c.resolution},
                {"mode", model::to_string(c.mode)},
                {"down_blocks", c.down_blocks},
                {"up_blocks", c.up_blocks},
                {"attn_down_index", c.attn_down_index},
                {"attn_up_index", c.attn_up_index},
                {"base_channels", c.base_channels},
                {"dropout", c.dropout},
                {"context_len", c.context_len},
                {"context_dim", c.context_dim},
                {"norm_groups", c.norm_groups}};
}

inline model::GeneratorConfig generator_config_from_json(const json& j) {
    model::GeneratorConfig c;
    c.resolution = j.at("resolution").get<int>();
    c.mode = model::mode_from_string(j.at("mode").get<std::string>());
    c.down_blocks = j.at("down_blocks").get<int>();
    c.up_blocks = j.at("up_blocks").get<int>();
    c.attn_down_index = j.at("attn_down_index").get<int>();
    c.attn_up_index = j.at("attn_up_index").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.dropout = j.at("dropout").get<float>();
    c.context_len = j.at("context_len").get<int>();
    c.context_dim = j.at("context_dim").get<int>();
    c.norm_groups = j.at("norm_groups").get<int>();
    c.validate();
    return c;
}

inline json to_json(const model::DiscriminatorConfig& c) {
    return json{{"blocks", c.blocks},
                {"base_channels", c.base_channels},
                {"leaky_slope", c.leaky_slope},
                {"score_form", c.score_form == model::ScoreForm::probability ? "probability" : "logit"},
                {"in_channels", c.in_channels}};
}

inline model::DiscriminatorConfig discriminator_config_from_json(const json& j) {
    model::DiscriminatorConfig c;
    c.blocks = j.at("blocks").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.leaky_slope = j.at("leaky_slope").get<float>();
    std::string sf = j.at("score_form").get<std::string>();
    if (sf != "probability" && sf != "logit")
        throw ConfigError("DiscriminatorConfig: bad score_form '" + sf + "'");
    c.score_form = sf == "probability" ? model::ScoreForm::probability : model::ScoreForm::logit;
    c.in_channels = j.at("in_channels").get<int>();
    c.validate();
    return c;
}

inline json to_json(const TrainConfig& c) {
    return json{{"epochs", c.epochs},
                {"lr", c.lr},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"batch_size", c.batch_size},
                {"dropout", c.dropout},
                {"alpha", c.alpha},
                {"seed", c.seed},
                {"mode", model::to_string(c.mode)},
                {"preset", to_string(c.preset)},
                {"adv_form", losses::to_string(c.adv_form)},
                {"checkpoint_interval", c.checkpoint_interval}};
}

inline TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.epochs = j.at("epochs").get<int>();
    c.lr = j.at("lr").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.alpha = j.at("alpha").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.mode = model::mode_from_string(j.at("mode").get<std::string>());
    c.preset = preset_from_string(j.at("preset").get<std::string>());
    c.adv_form = losses::adv_form_from_string(j.at("adv_form").get<std::string>());
    c.checkpoint_interval = j.at("checkpoint_interval").get<int>();
    c.validate();
    return c;
}

/// Canonical JSON of the model-defining blocks; its hash gates eval.
inline json model_config_json(const model::GeneratorConfig& g, const model::DiscriminatorConfig& d,
                              const std::string& encoder_name) {
    return json{{"generator", to_json(g)}, {"discriminator", to_json(d)}, {"encoder", encoder_name}};
}

inline std::uint64_t model_config_hash(const model::GeneratorConfig& g,
                                       const model::DiscriminatorConfig& d,
                                       const std::string& encoder_name) {
    return fnv1a64(model_config_json(g, d, encoder_name).dump());
}

} // namespace demorph::train
