// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file checkpoint.hpp
 * @brief Single-archive checkpoints: weights, optimizer moments, configs,
 * epoch counter and PRNG states. save -> load -> save is byte-identical.
 */

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "demorph/core/error.hpp"
#include "demorph/core/rng.hpp"
#include "demorph/model/discriminator.hpp"
#include "demorph/model/generator.hpp"
#include "demorph/train/adam.hpp"
#include "demorph/train/config.hpp"

namespace demorph::train {

/// Everything needed to continue (or evaluate) a training run.
struct TrainState {
    model::GeneratorConfig gcfg;
    model::DiscriminatorConfig dcfg;
    TrainConfig tcfg;
    std::string encoder_name = "toy";
    std::string dataset_name = "synthetic";
    std::unique_ptr<model::Generator> gen;
    std::unique_ptr<model::Discriminator> disc;
    Adam adam_g, adam_d;
    Rng order_rng, dropout_rng;
    int epoch = 0;

    std::uint64_t model_hash() const {
        return model_config_hash(gcfg, dcfg, encoder_name);
    }

    std::vector<nn::NamedParam> gen_params() {
        std::vector<nn::NamedParam> v;
        gen->collect(v);
        return v;
    }
    std::vector<nn::NamedParam> disc_params() {
        std::vector<nn::NamedParam> v;
        disc->collect(v);
        return v;
    }
};

namespace detail {

constexpr char kMagic[8] = {'D', 'M', 'L', 'C', 'K', 'P', 'T', '1'};

inline void put_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_str(std::ostream& os, const std::string& s) {
    put_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline void put_floats(std::ostream& os, const nn::Tensor& t) {
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

inline std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw CheckpointError("checkpoint truncated");
    return v;
}
inline std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw CheckpointError("checkpoint truncated");
    return v;
}
inline std::string get_str(std::istream& is) {
    std::uint64_t n = get_u64(is);
    if (n > (1ull << 32)) throw CheckpointError("checkpoint corrupt: oversize string");
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw CheckpointError("checkpoint truncated");
    return s;
}
inline void get_floats(std::istream& is, nn::Tensor& t) {
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!is) throw CheckpointError("checkpoint truncated");
}

inline void put_params(std::ostream& os, const std::vector<nn::NamedParam>& params) {
    put_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& np : params) {
        put_str(os, np.name);
        const auto& shape = np.param->value.shape();
        put_u32(os, static_cast<std::uint32_t>(shape.size()));
        for (int d : shape) put_u32(os, static_cast<std::uint32_t>(d));
        put_floats(os, np.param->value);
        put_floats(os, np.param->m);
        put_floats(os, np.param->v);
    }
}

inline void get_params(std::istream& is, const std::vector<nn::NamedParam>& params) {
    std::uint32_t count = get_u32(is);
    if (count != params.size())
        throw CheckpointError("checkpoint corrupt: parameter count mismatch");
    for (const auto& np : params) {
        std::string name = get_str(is);
        if (name != np.name)
            throw CheckpointError("checkpoint corrupt: parameter '" + name + "' where '" +
                                  np.name + "' expected");
        std::uint32_t rank = get_u32(is);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(get_u32(is));
        if (shape != np.param->value.shape())
            throw CheckpointError("checkpoint corrupt: shape mismatch for '" + name + "'");
        get_floats(is, np.param->value);
        get_floats(is, np.param->m);
        get_floats(is, np.param->v);
    }
}

} // namespace detail

inline void save_checkpoint(const std::string& path, TrainState& st) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("save_checkpoint: cannot open " + path);
    os.write(detail::kMagic, sizeof detail::kMagic);
    detail::put_u32(os, 1); // version

    json meta = {{"generator", to_json(st.gcfg)},
                 {"discriminator", to_json(st.dcfg)},
                 {"train", to_json(st.tcfg)},
                 {"encoder", st.encoder_name},
                 {"dataset", st.dataset_name},
                 {"epoch", st.epoch}};
    detail::put_u64(os, st.model_hash());
    detail::put_str(os, meta.dump());

    detail::put_params(os, st.gen_params());
    detail::put_params(os, st.disc_params());
    detail::put_u64(os, st.adam_g.step_count());
    detail::put_u64(os, st.adam_d.step_count());
    detail::put_str(os, st.order_rng.state());
    detail::put_str(os, st.dropout_rng.state());
    if (!os) throw IoError("save_checkpoint: write failed for " + path);
}

inline TrainState load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, detail::kMagic, sizeof magic) != 0)
        throw CheckpointError("load_checkpoint: bad magic in " + path);
    std::uint32_t version = detail::get_u32(is);
    if (version != 1) throw CheckpointError("load_checkpoint: unsupported version");

    std::uint64_t stored_hash = detail::get_u64(is);
    json meta;
    try {
        meta = json::parse(detail::get_str(is));
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("load_checkpoint: corrupt metadata: ") + e.what());
    }

    TrainState st;
    try {
        st.gcfg = generator_config_from_json(meta.at("generator"));
        st.dcfg = discriminator_config_from_json(meta.at("discriminator"));
        st.tcfg = train_config_from_json(meta.at("train"));
        st.encoder_name = meta.at("encoder").get<std::string>();
        st.dataset_name = meta.at("dataset").get<std::string>();
        st.epoch = meta.at("epoch").get<int>();
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("load_checkpoint: corrupt metadata: ") + e.what());
    }
    if (st.model_hash() != stored_hash)
        throw CheckpointError("load_checkpoint: stored hash disagrees with configs");

    st.gen = std::make_unique<model::Generator>(st.gcfg);
    st.disc = std::make_unique<model::Discriminator>(st.dcfg);
    detail::get_params(is, st.gen_params());
    detail::get_params(is, st.disc_params());

    st.adam_g = Adam(st.tcfg.lr, st.tcfg.beta1, st.tcfg.beta2);
    st.adam_d = Adam(st.tcfg.lr, st.tcfg.beta1, st.tcfg.beta2);
    st.adam_g.set_step_count(detail::get_u64(is));
    st.adam_d.set_step_count(detail::get_u64(is));
    st.order_rng.set_state(detail::get_str(is));
    st.dropout_rng.set_state(detail::get_str(is));
    return st;
}

} // namespace demorph::train
