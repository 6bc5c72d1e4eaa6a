#pragma once

#include <stdexcept>
#include <string>

namespace hclr {

// Precondition violations surface as std::invalid_argument; the types below
// name the domain failures callers are expected to handle.

struct ZeroNormRow : std::domain_error {
    using std::domain_error::domain_error;
};

struct NotScalar : std::logic_error {
    using std::logic_error::logic_error;
};

struct ShapeMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct PlacementError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptyDataset : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// IDX ingestion
struct BadMagic : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TruncatedFile : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Losses
struct DegenerateBatch : std::domain_error {
    using std::domain_error::domain_error;
};
struct EmptyMask : std::domain_error {
    using std::domain_error::domain_error;
};

// GMM
struct InsufficientPoints : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct LengthMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Training / evaluation
struct DivergenceError : std::runtime_error {
    DivergenceError(const std::string& what, int epoch, int step)
        : std::runtime_error(what), epoch(epoch), step(step) {}
    int epoch;
    int step;
};
struct SingleClass : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct DegenerateClusters : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

}  // namespace hclr
