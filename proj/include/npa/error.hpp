#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace npa {

/// Failure categories shared by every module. The CLI maps these onto exit codes.
enum class ErrorKind {
    Parse,
    Schema,
    ScenarioMismatch,
    IndexOutOfBounds,
    LevelTooSmall,
    Infeasible,
    NumericalTrouble,
    ShapeMismatch,
    RangeViolation,
    NotFlat,
    IllConditioned,
    NotProjective,
    MissingContext,
    NotOptimal,
    InvalidArgument,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Parse: return "ParseError";
        case ErrorKind::Schema: return "SchemaError";
        case ErrorKind::ScenarioMismatch: return "ScenarioMismatch";
        case ErrorKind::IndexOutOfBounds: return "IndexOutOfBounds";
        case ErrorKind::LevelTooSmall: return "LevelTooSmall";
        case ErrorKind::Infeasible: return "Infeasible";
        case ErrorKind::NumericalTrouble: return "NumericalTrouble";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::RangeViolation: return "RangeViolation";
        case ErrorKind::NotFlat: return "NotFlat";
        case ErrorKind::IllConditioned: return "IllConditioned";
        case ErrorKind::NotProjective: return "NotProjective";
        case ErrorKind::MissingContext: return "MissingContext";
        case ErrorKind::NotOptimal: return "NotOptimal";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Error";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace npa
