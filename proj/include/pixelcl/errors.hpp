#pragma once

#include <stdexcept>
#include <string>

namespace pixelcl {

/// Invalid user-supplied configuration (bad split, bad hyperparameter, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A proposal whose foreground or background partition came out empty.
/// Such proposals contribute neither queries nor keys and must be skipped
/// by the contrastive path.
struct EmptyPartitionSide : std::runtime_error {
    explicit EmptyPartitionSide(const std::string& what) : std::runtime_error(what) {}
};

/// A bounding box that collapsed to zero area after jitter + clamping.
/// Distinct from other errors so callers can reject just the sample.
struct DegenerateBox : std::runtime_error {
    explicit DegenerateBox(const std::string& what) : std::runtime_error(what) {}
};

} // namespace pixelcl
