// Copyright (c) 2026 demorphlab authors
// All rights reserved.
// Licensed under the Apache License 2.0.

/**
 * @file error.hpp
 * @brief Exception hierarchy shared by all demorphlab modules.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace demorph {

/// Base class; every error thrown by the library derives from it.
class Error : public std::runtime_error {
public:
    Error(std::string type, const std::string& message)
        : std::runtime_error(message), type_(std::move(type)) {}

    /// Short machine-readable tag ("ValidationError", "ConfigError", ...).
    const std::string& type() const { return type_; }

private:
    std::string type_;
};

/// Bad arguments or violated preconditions on an operation.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& m) : Error("ValidationError", m) {}
};

/// Malformed or inconsistent run configuration.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& m) : Error("ConfigError", m) {}
};

/// Evaluation protocol cannot proceed (too few faces, empty score lists, ...).
class ProtocolError : public Error {
public:
    explicit ProtocolError(const std::string& m) : Error("ProtocolError", m) {}
};

/// Unknown comparator / encoder name.
class RegistryError : public Error {
public:
    explicit RegistryError(const std::string& m) : Error("RegistryError", m) {}
};

/// File could not be read, written or parsed.
class IoError : public Error {
public:
    explicit IoError(const std::string& m) : Error("IoError", m) {}
};

/// Corrupt or incompatible checkpoint archive.
class CheckpointError : public Error {
public:
    explicit CheckpointError(const std::string& m) : Error("CheckpointError", m) {}
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& m) : Error("DivergenceError", m) {}
};

} // namespace demorph
