#pragma once

#include <stdexcept>
#include <string>

namespace egan {

// Failure classes surfaced by the library. The C API and the CLI map each
// one onto a distinct status / exit code.
enum class ErrorKind {
    NotFound = 1,
    Format = 2,
    Shape = 3,
    Bounds = 4,
    Argument = 5,
    Config = 6,
    Numerical = 7,
    Version = 8,
    Io = 9,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define EGAN_DEFINE_ERROR(Name, Kind)                                              \
    class Name : public Error {                                                    \
    public:                                                                        \
        explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {}   \
    };

EGAN_DEFINE_ERROR(NotFoundError, NotFound)
EGAN_DEFINE_ERROR(FormatError, Format)
EGAN_DEFINE_ERROR(ShapeError, Shape)
EGAN_DEFINE_ERROR(BoundsError, Bounds)
EGAN_DEFINE_ERROR(ArgumentError, Argument)
EGAN_DEFINE_ERROR(ConfigError, Config)
EGAN_DEFINE_ERROR(VersionError, Version)
EGAN_DEFINE_ERROR(IoError, Io)

#undef EGAN_DEFINE_ERROR

// Carries the name of the loss term that went non-finite.
class NumericalError : public Error {
public:
    NumericalError(const std::string& term, const std::string& what)
        : Error(ErrorKind::Numerical, what), term_(term) {}
    const std::string& term() const noexcept { return term_; }

private:
    std::string term_;
};

const char* error_kind_name(ErrorKind kind) noexcept;

}  // namespace egan
