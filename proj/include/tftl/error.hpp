#pragma once

#include <stdexcept>
#include <string>

namespace tftl {

// Error taxonomy used across the engine. The CLI maps kinds to exit codes:
// Numeric -> 3, everything else -> 2.
enum class ErrorKind {
    Dimension,  // shape/conformance violation in a tensor primitive
    Numeric,    // non-finite value produced by an operation
    Contract,   // precondition violation on an engine operation
    Ingestion,  // malformed raw input (unordered timestamps, bad CSV, ...)
    Alignment,  // channel layout does not match the model's canonical layout
    Leakage,    // scaler fitted/applied across train/test or domain boundaries
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }
    const char* kind_name() const { return error_kind_name(kind_); }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool cond, ErrorKind kind, const std::string& message) {
    if (!cond) {
        raise(kind, message);
    }
}

inline const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Dimension: return "dimension";
        case ErrorKind::Numeric: return "numeric";
        case ErrorKind::Contract: return "contract";
        case ErrorKind::Ingestion: return "ingestion";
        case ErrorKind::Alignment: return "alignment";
        case ErrorKind::Leakage: return "leakage";
    }
    return "unknown";
}

}  // namespace tftl
