// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

// Shared fixtures for the test suites.

#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "demorph/core/image.hpp"
#include "demorph/core/rng.hpp"

namespace testutil {

inline demorph::Image random_image(demorph::Rng& rng, int side) {
    demorph::Image img(side, side);
    for (std::size_t i = 0; i < img.value_count(); ++i)
        img.data()[i] = static_cast<float>(rng.uniform());
    return img;
}

inline demorph::Image constant_image(int side, float v) { return demorph::Image(side, side, v); }

inline demorph::FaceImage random_face(demorph::Rng& rng, int side, const std::string& identity,
                                      const std::string& image_id) {
    return demorph::face_image(random_image(rng, side), identity, image_id);
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Scratch directory under the build tree, wiped per use.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("demorphlab_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace testutil
