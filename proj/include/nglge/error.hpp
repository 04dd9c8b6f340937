#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <string_view>

namespace nglge {

enum class ErrorKind {
    invalid_argument,
    io_error,
    format_error,
    numerical_error,
    unsupported_size,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::io_error: return "io-error";
    case ErrorKind::format_error: return "format-error";
    case ErrorKind::numerical_error: return "numerical-error";
    case ErrorKind::unsupported_size: return "unsupported-size";
    }
    return "unknown";
}

/// Base error for everything the library throws on a contract violation.
class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string &what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

class InvalidArgument : public Error {
  public:
    explicit InvalidArgument(const std::string &what)
        : Error(ErrorKind::invalid_argument, what) {}
};

class IoError : public Error {
  public:
    explicit IoError(const std::string &what) : Error(ErrorKind::io_error, what) {}
};

class FormatError : public Error {
  public:
    explicit FormatError(const std::string &what)
        : Error(ErrorKind::format_error, what) {}
};

class UnsupportedSize : public Error {
  public:
    explicit UnsupportedSize(const std::string &what)
        : Error(ErrorKind::unsupported_size, what) {}
};

/// Factorization or solve failure. `pivot` is the 0-based index of the first
/// non-positive pivot, or -1 when the failure is not tied to one.
class NumericalError : public Error {
  public:
    explicit NumericalError(const std::string &what, Eigen::Index pivot = -1)
        : Error(ErrorKind::numerical_error, what), pivot_(pivot) {}

    Eigen::Index pivot() const noexcept { return pivot_; }

  private:
    Eigen::Index pivot_;
};

} // namespace nglge
