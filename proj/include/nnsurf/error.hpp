#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nnsurf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Malformed text input (XYZ, OBJ, CSV). Carries the 1-based line number.
class ParseError : public Error
{
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line)
    {
    }

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Invalid configuration value or file.
class ConfigError : public Error
{
public:
    using Error::Error;
};

/// The k-NN graph splits into several components.
class DisconnectedGraphError : public Error
{
public:
    DisconnectedGraphError(const std::string& what, std::size_t components)
        : Error(what), components_(components)
    {
    }

    std::size_t components() const noexcept { return components_; }

private:
    std::size_t components_;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error
{
public:
    using Error::Error;
};

/// A pipeline stage failed. The message is prefixed with the stage name.
class StageError : public Error
{
public:
    StageError(std::string stage, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage))
    {
    }

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace nnsurf
