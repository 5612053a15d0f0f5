/**
 * @file errors.hpp
 * @brief Exception hierarchy shared by every uvstyle module
 */
#pragma once

#include <stdexcept>
#include <string>

namespace uvstyle {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed bytes or JSON on input.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Tensor or grid dimensions disagree with what a consumer expects.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Two embeddings (or an embedding and a store) come from different pipelines.
class IncompatibleError : public Error {
public:
    using Error::Error;
};

/// A caller violated a documented precondition (off-simplex weights, unknown ids, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

/// A layer's normalized activations vanish, so cosine distance is undefined.
class DegenerateLayerError : public Error {
public:
    DegenerateLayerError(int layer, const std::string& what)
        : Error(what), layer_(layer) {}
    int layer() const noexcept { return layer_; }

private:
    int layer_;
};

}  // namespace uvstyle
