#pragma once

#include <stdexcept>
#include <string>

namespace groundcrit {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input to a pure operation (invalid box, empty text, length mismatch...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A grid box that collapses below raster resolution when mapped to pixels.
class BelowResolution : public Error {
public:
    using Error::Error;
};

/// A file that does not match its documented schema. Carries the 1-based line.
class SchemaError : public Error {
public:
    SchemaError(std::string path, std::size_t line, const std::string& what)
        : Error(path + ":" + std::to_string(line) + ": " + what),
          path_(std::move(path)),
          line_(line) {}

    const std::string& path() const noexcept { return path_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string path_;
    std::size_t line_;
};

} // namespace groundcrit
