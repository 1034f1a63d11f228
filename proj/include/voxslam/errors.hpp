#pragma once

#include <stdexcept>
#include <string>

namespace voxslam {

// Base class of all recoverable errors raised by the pipeline.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidDepthError : Error {
    using Error::Error;
};

struct BehindCameraError : Error {
    using Error::Error;
};

// Voxel/lattice coordinate outside the Morton depth budget.
struct OutOfRangeError : Error {
    using Error::Error;
};

struct UnallocatedVoxelError : Error {
    using Error::Error;
};

struct EmptyBatchError : Error {
    using Error::Error;
};

struct DegenerateFrameError : Error {
    using Error::Error;
};

struct NonFiniteError : Error {
    using Error::Error;
};

// Malformed or unreadable dataset / checkpoint / trajectory files.
struct DatasetError : Error {
    using Error::Error;
};

struct InsufficientSamplesError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

} // namespace voxslam
