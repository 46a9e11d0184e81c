#pragma once

#include <stdexcept>
#include <string>

namespace fusenas {

// Shape disagreement between tensors; message names both shapes.
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Bad run configuration (file keys, pool/param layout mismatches, ...).
struct ConfigError : std::invalid_argument {
    explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Dempster combination is undefined at total conflict (z -> 1).
struct TotalConflictError : std::runtime_error {
    explicit TotalConflictError(const std::string& msg) : std::runtime_error(msg) {}
};

// A proposition was queried outside its stated precondition.
struct PreconditionError : std::invalid_argument {
    explicit PreconditionError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Metric has no defined value on the given inputs (single class, no regions).
struct UndefinedMetricError : std::invalid_argument {
    explicit UndefinedMetricError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Training loss became non-finite; message reports the step index.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Rejection sampling exceeded its draw budget.
struct SamplingError : std::runtime_error {
    explicit SamplingError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed serialized artifact (genotype JSON, checkpoint, dataset cache).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fusenas
