#pragma once

#include <cstdint>

#include "voxslam/errors.hpp"

namespace voxslam {

using MortonCode = uint64_t;

// Offset-shifted voxel index; each component must lie in [0, 2^depth).
struct VoxelCoord {
    uint32_t x = 0, y = 0, z = 0;
    bool operator==(const VoxelCoord&) const = default;
};

namespace morton_detail {

// Spread the low 21 bits of x so bit k lands at bit 3k.
inline uint64_t spread_bits(uint64_t x) {
    x &= 0x1fffffull;
    x = (x | x << 32) & 0x1f00000000ffffull;
    x = (x | x << 16) & 0x1f0000ff0000ffull;
    x = (x | x << 8) & 0x100f00f00f00f00full;
    x = (x | x << 4) & 0x10c30c30c30c30c3ull;
    x = (x | x << 2) & 0x1249249249249249ull;
    return x;
}

// Inverse of spread_bits: gather every third bit into the low 21 bits.
inline uint64_t compact_bits(uint64_t x) {
    x &= 0x1249249249249249ull;
    x = (x | x >> 2) & 0x10c30c30c30c30c3ull;
    x = (x | x >> 4) & 0x100f00f00f00f00full;
    x = (x | x >> 8) & 0x1f0000ff0000ffull;
    x = (x | x >> 16) & 0x1f00000000ffffull;
    x = (x | x >> 32) & 0x1fffffull;
    return x;
}

constexpr uint64_t kXMask = 0x1249249249249249ull;
constexpr uint64_t kYMask = kXMask << 1;
constexpr uint64_t kZMask = kXMask << 2;

} // namespace morton_detail

constexpr int kMaxMortonDepth = 21;

// Interleave: bit k of x -> output bit 3k, y -> 3k+1, z -> 3k+2.
inline MortonCode morton_encode(const VoxelCoord& c, int depth) {
    const uint32_t limit = 1u << depth;
    if (c.x >= limit || c.y >= limit || c.z >= limit) {
        throw OutOfRangeError("morton_encode: coordinate exceeds depth budget");
    }
    using namespace morton_detail;
    return spread_bits(c.x) | (spread_bits(c.y) << 1) | (spread_bits(c.z) << 2);
}

inline VoxelCoord morton_decode(MortonCode m, int depth) {
    using namespace morton_detail;
    if (depth < kMaxMortonDepth && (m >> (3 * depth)) != 0) {
        throw OutOfRangeError("morton_decode: code exceeds depth budget");
    }
    return VoxelCoord{static_cast<uint32_t>(compact_bits(m)),
                      static_cast<uint32_t>(compact_bits(m >> 1)),
                      static_cast<uint32_t>(compact_bits(m >> 2))};
}

// Unit step along one axis without a full decode: add/subtract one in the
// interleaved representation (carries propagate only through the axis mask).
inline MortonCode morton_neighbor(MortonCode m, int axis, int direction, int depth) {
    using namespace morton_detail;
    const uint64_t mask = axis == 0 ? kXMask : axis == 1 ? kYMask : kZMask;
    const uint64_t axis_bits = m & mask;
    const uint64_t coord = compact_bits(axis_bits >> axis);
    const uint64_t limit = 1ull << depth;
    uint64_t stepped;
    if (direction > 0) {
        if (coord + 1 >= limit) {
            throw OutOfRangeError("morton_neighbor: step exceeds lattice boundary");
        }
        stepped = ((axis_bits | ~mask) + 1) & mask;
    } else {
        if (coord == 0) {
            throw OutOfRangeError("morton_neighbor: step below lattice boundary");
        }
        stepped = (axis_bits - (1ull << axis)) & mask;
    }
    return stepped | (m & ~mask);
}

} // namespace voxslam
