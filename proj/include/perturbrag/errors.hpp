#pragma once

#include <stdexcept>
#include <string>

namespace perturbrag {

/// Broad classes of failure. The CLI maps these onto process exit codes.
enum class ErrorKind {
    argument,
    parse,
    conflict,
    not_found,
    template_error,
    dependency,
    degenerate,
    undefined_metric,
    unsupported_metric,
    transport,
    empty_response,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string& what) : Error(ErrorKind::argument, what) {}
};

/// Malformed input. `line` is 1-based, or 0 when no line applies.
struct ParseError : Error {
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(ErrorKind::parse, line == 0 ? what : "line " + std::to_string(line) + ": " + what),
          line(line) {}
    std::size_t line;
};

struct ConflictError : Error {
    explicit ConflictError(const std::string& what) : Error(ErrorKind::conflict, what) {}
};

struct NotFoundError : Error {
    explicit NotFoundError(const std::string& what) : Error(ErrorKind::not_found, what) {}
};

struct TemplateError : Error {
    explicit TemplateError(const std::string& what) : Error(ErrorKind::template_error, what) {}
};

struct DependencyError : Error {
    explicit DependencyError(const std::string& what) : Error(ErrorKind::dependency, what) {}
};

struct DegenerateCellError : Error {
    explicit DegenerateCellError(const std::string& what) : Error(ErrorKind::degenerate, what) {}
};

struct UndefinedMetricError : Error {
    explicit UndefinedMetricError(const std::string& what) : Error(ErrorKind::undefined_metric, what) {}
};

struct UnsupportedMetricError : Error {
    explicit UnsupportedMetricError(const std::string& what)
        : Error(ErrorKind::unsupported_metric, what) {}
};

struct TransportError : Error {
    explicit TransportError(const std::string& what) : Error(ErrorKind::transport, what) {}
};

struct EmptyResponseError : Error {
    explicit EmptyResponseError(const std::string& what) : Error(ErrorKind::empty_response, what) {}
};

} // namespace perturbrag
