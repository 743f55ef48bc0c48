#pragma once

#include <stdexcept>
#include <string>

namespace hcnn {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer shape violations (channel mismatch, odd pooling dims, ...).
struct ShapeError : Error {
    using Error::Error;
};

// Invalid configuration values (unsupported deconv factor, zero fan-in, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Undecodable or malformed files (bad PNG, bad checkpoint magic).
struct FormatError : Error {
    using Error::Error;
};

// Checkpoint written by an incompatible format version.
struct VersionError : Error {
    using Error::Error;
};

// File ended in the middle of a record.
struct TruncatedError : Error {
    using Error::Error;
};

// Recorded pooling indices point outside the target plane.
struct CorruptionError : Error {
    using Error::Error;
};

// Image without a mask counterpart (or vice versa).
struct PairingError : Error {
    using Error::Error;
};

// A Gaussian fit received an empty class.
struct FitError : Error {
    using Error::Error;
};

// A fit produced an unusable model (zero pooled variance).
struct DegenerateFitError : FitError {
    using FitError::FitError;
};

// Input too small for the requested crop.
struct SizeError : Error {
    using Error::Error;
};

// Metric input that the measure is undefined on (empty class).
struct DegenerateInputError : Error {
    using Error::Error;
};

// Filesystem failures.
struct IoError : Error {
    using Error::Error;
};

}  // namespace hcnn
