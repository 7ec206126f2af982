#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace npull
{
    /// Base class for every error raised by the library.
    class Error : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    /// Invalid configuration values or incompatible shapes.
    class ConfigError : public Error
    {
    public:
        using Error::Error;
    };

    /// A file that cannot be opened, read, or written.
    class FileError : public Error
    {
    public:
        FileError(const std::string& what, std::string path) : Error(what), path_(std::move(path)) {}

        const std::string& path() const noexcept { return path_; }

    private:
        std::string path_;
    };

    /// Malformed input text or bytes. `location()` is a 1-based line number for
    /// text formats and a byte offset for binary formats.
    class ParseError : public Error
    {
    public:
        ParseError(const std::string& what, std::size_t location)
            : Error(what), location_(location) {}

        std::size_t location() const noexcept { return location_; }

    private:
        std::size_t location_;
    };

    /// Checkpoint written by an incompatible format revision.
    class VersionError : public Error
    {
    public:
        VersionError(std::uint32_t found, std::uint32_t expected)
            : Error("checkpoint version " + std::to_string(found) + " is not supported (expected "
                    + std::to_string(expected) + ")"),
              found_(found) {}

        std::uint32_t found() const noexcept { return found_; }

    private:
        std::uint32_t found_;
    };

    /// Not enough points for a neighbor query.
    class InsufficientPointsError : public Error
    {
    public:
        InsufficientPointsError(std::size_t have, std::size_t required)
            : Error("point cloud has " + std::to_string(have) + " points; at least "
                    + std::to_string(required) + " are required"),
              required_(required) {}

        std::size_t required() const noexcept { return required_; }

    private:
        std::size_t required_;
    };

    /// Input-gradient norm at or below the configured floor.
    class DegenerateGradientError : public Error
    {
    public:
        using Error::Error;
    };

    /// Optimization failure: non-finite loss or a batch with no usable sample.
    class TrainingError : public Error
    {
    public:
        TrainingError(const std::string& what, std::size_t step)
            : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

        std::size_t step() const noexcept { return step_; }

    private:
        std::size_t step_;
    };
}
