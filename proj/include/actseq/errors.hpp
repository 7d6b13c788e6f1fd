#pragma once

#include <stdexcept>
#include <string>

namespace actseq {

// Error categories surfaced by the CLI as machine-parsable prefixes.
enum class ErrorCategory { format, shape, numeric, config };

inline const char* to_string(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::format: return "format";
        case ErrorCategory::shape: return "shape";
        case ErrorCategory::numeric: return "numeric";
        case ErrorCategory::config: return "config";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}
    ErrorCategory category() const { return category_; }

private:
    ErrorCategory category_;
};

struct FormatError : Error {
    explicit FormatError(const std::string& what) : Error(ErrorCategory::format, what) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error(ErrorCategory::shape, what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

// A metric whose denominator is empty (e.g. AER with empty ground truth).
struct UndefinedMetricError : NumericError {
    explicit UndefinedMetricError(const std::string& what) : NumericError(what) {}
};

}  // namespace actseq
