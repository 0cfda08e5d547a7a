// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file comparator.hpp
 * @brief Pluggable face comparators: embeddings and cosine match scores.
 *
 * Real face-recognition systems are out of scope; they plug in either as
 * precomputed embedding files (kind "external") or through the built-in
 * deterministic toy embedder that makes the whole evaluation protocol
 * runnable at desk scale.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "demorph/core/error.hpp"
#include "demorph/core/image.hpp"
#include "demorph/core/rng.hpp"
#include "demorph/data/transforms.hpp"

namespace demorph::bio {

struct Embedding {
    std::vector<double> v;
    std::string comparator;
};

enum class ComparatorKind { toy, external };

struct ComparatorDescriptor {
    std::string name;
    int dim = 64;
    ComparatorKind kind = ComparatorKind::toy;
    std::string file; // embedding CSV, external kind only
};

/// Cosine similarity in [-1,1]; a zero vector scores 0 with a warning.
inline double similarity(const Embedding& a, const Embedding& b) {
    if (a.comparator != b.comparator)
        throw ValidationError("similarity: embeddings from different comparators");
    if (a.v.size() != b.v.size())
        throw ValidationError("similarity: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        dot += a.v[i] * b.v[i];
        na += a.v[i] * a.v[i];
        nb += b.v[i] * b.v[i];
    }
    if (na <= 0.0 || nb <= 0.0) {
        std::cerr << "warning: similarity of a zero embedding, scoring 0\n";
        return 0.0;
    }
    double s = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(s, -1.0, 1.0);
}

/// Cosine distance = 1 - similarity, in [0,2].
inline double distance(const Embedding& a, const Embedding& b) {
    return 1.0 - similarity(a, b);
}

class Comparator {
public:
    virtual ~Comparator() = default;
    virtual const std::string& name() const = 0;
    virtual int dim() const = 0;
    virtual Embedding embed(const FaceImage& image) const = 0;
};

/**
 * @brief Deterministic stand-in embedder.
 *
 * Grayscale-downsamples to 16x16, flattens and projects with a fixed
 * random matrix seeded from the comparator name, then L2-normalizes.
 * Reproducible across machines by construction.
 */
class ToyComparator final : public Comparator {
public:
    explicit ToyComparator(std::string name = "toy", int dim = 64)
        : name_(std::move(name)), dim_(dim) {
        if (dim_ <= 0) throw ValidationError("ToyComparator: dim must be positive");
        Rng rng(fnv1a64(name_));
        proj_.resize(static_cast<std::size_t>(dim_) * kPatch);
        const double scale = 1.0 / std::sqrt(static_cast<double>(kPatch));
        for (double& w : proj_) w = rng.normal() * scale;
    }

    const std::string& name() const override { return name_; }
    int dim() const override { return dim_; }

    Embedding embed(const FaceImage& image) const override {
        validate_face_image(image);
        Image small = data::resize_bilinear(image.pixels, kSide, kSide);
        double gray[kPatch];
        for (int y = 0; y < kSide; ++y)
            for (int x = 0; x < kSide; ++x)
                gray[y * kSide + x] = (small.at(x, y, 0) + small.at(x, y, 1) + small.at(x, y, 2)) / 3.0;

        Embedding e;
        e.comparator = name_;
        e.v.assign(dim_, 0.0);
        for (int d = 0; d < dim_; ++d) {
            const double* row = proj_.data() + static_cast<std::size_t>(d) * kPatch;
            double acc = 0.0;
            for (int i = 0; i < kPatch; ++i) acc += row[i] * gray[i];
            e.v[d] = acc;
        }
        double n = 0.0;
        for (double x : e.v) n += x * x;
        n = std::sqrt(n);
        if (n > 0.0)
            for (double& x : e.v) x /= n;
        return e;
    }

private:
    static constexpr int kSide = 16;
    static constexpr int kPatch = kSide * kSide;
    std::string name_;
    int dim_;
    std::vector<double> proj_;
};

// ============================================================================
// Embedding CSV: header image_id,comparator,d0..dN
// ============================================================================

inline void write_embeddings_csv(const std::string& path,
                                 const std::map<std::string, Embedding>& by_image) {
    std::ofstream out(path);
    if (!out) throw IoError("write_embeddings_csv: cannot open " + path);
    int dim = by_image.empty() ? 0 : static_cast<int>(by_image.begin()->second.v.size());
    out << "image_id,comparator";
    for (int d = 0; d < dim; ++d) out << ",d" << d;
    out << "\n";
    out.precision(17);
    for (const auto& [image_id, e] : by_image) {
        out << image_id << "," << e.comparator;
        for (double x : e.v) out << "," << x;
        out << "\n";
    }
}

inline std::map<std::string, Embedding> load_embeddings_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_embeddings_csv: cannot open " + path);
    std::string header;
    if (!std::getline(in, header) || header.rfind("image_id,comparator", 0) != 0)
        throw IoError("load_embeddings_csv: bad header in " + path);
    std::map<std::string, Embedding> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        Embedding e;
        std::string image_id;
        if (!std::getline(ss, image_id, ',') || !std::getline(ss, e.comparator, ','))
            throw IoError("load_embeddings_csv: malformed row in " + path);
        while (std::getline(ss, cell, ',')) e.v.push_back(std::stod(cell));
        if (e.v.empty()) throw IoError("load_embeddings_csv: row without values in " + path);
        out[image_id] = std::move(e);
    }
    return out;
}

/// Serves embeddings precomputed by an external face-recognition system.
class ExternalComparator final : public Comparator {
public:
    ExternalComparator(std::string name, std::string csv_path) : name_(std::move(name)) {
        table_ = load_embeddings_csv(csv_path);
        if (table_.empty())
            throw IoError("ExternalComparator '" + name_ + "': empty embedding file");
        dim_ = static_cast<int>(table_.begin()->second.v.size());
        for (auto& [id, e] : table_) {
            if (static_cast<int>(e.v.size()) != dim_)
                throw IoError("ExternalComparator '" + name_ + "': ragged embedding rows");
            e.comparator = name_;
        }
    }

    const std::string& name() const override { return name_; }
    int dim() const override { return dim_; }

    Embedding embed(const FaceImage& image) const override {
        auto it = table_.find(image.image_id);
        if (it == table_.end())
            throw RegistryError("ExternalComparator '" + name_ + "': no embedding for image '" +
                                image.image_id + "'");
        return it->second;
    }

private:
    std::string name_;
    int dim_ = 0;
    std::map<std::string, Embedding> table_;
};

/// Name-indexed comparator set built from descriptors.
class ComparatorRegistry {
public:
    ComparatorRegistry() = default;

    explicit ComparatorRegistry(const std::vector<ComparatorDescriptor>& descs) {
        for (const auto& d : descs) add(d);
    }

    void add(const ComparatorDescriptor& d) {
        if (d.dim <= 0) throw ValidationError("comparator '" + d.name + "': dim must be positive");
        if (map_.count(d.name))
            throw ValidationError("comparator '" + d.name + "' registered twice");
        if (d.kind == ComparatorKind::toy)
            map_[d.name] = std::make_shared<ToyComparator>(d.name, d.dim);
        else
            map_[d.name] = std::make_shared<ExternalComparator>(d.name, d.file);
        order_.push_back(d.name);
    }

    const Comparator& get(const std::string& name) const {
        auto it = map_.find(name);
        if (it == map_.end()) throw RegistryError("unknown comparator '" + name + "'");
        return *it->second;
    }

    const std::vector<std::string>& names() const { return order_; }
    bool empty() const { return order_.empty(); }

private:
    std::map<std::string, std::shared_ptr<Comparator>> map_;
    std::vector<std::string> order_;
};

} // namespace demorph::bio
