#pragma once

#include <stdexcept>
#include <string>

namespace dpborrow {

// Raised for distribution parameters outside their domain. Always a caller bug.
struct InvalidParameter : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Input documents that do not match the expected layout.
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Well-formed input that violates a domain constraint.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingArm : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RankDeficient : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Internal sampler failure (empty slice, runaway component list). The chain is abandoned.
struct SamplerAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingEstimand : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateVariance : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace dpborrow
