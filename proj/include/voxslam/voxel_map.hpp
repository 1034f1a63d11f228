#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "voxslam/geometry.hpp"
#include "voxslam/morton.hpp"
#include "voxslam/rng.hpp"

namespace voxslam {

// Integer lattice coordinates of a voxel corner, in grid units, unshifted
// (may be negative). The same physical corner always yields the same key.
struct VertexKey {
    int64_t x = 0, y = 0, z = 0;
    bool operator==(const VertexKey&) const = default;
};

// Packed form used as the hash key. Corner coordinates are biased into
// 21-bit fields, which covers every lattice this build can address.
inline uint64_t pack_vertex_key(const VertexKey& k) {
    constexpr int64_t bias = 1ll << 20;
    const uint64_t ux = static_cast<uint64_t>(k.x + bias) & 0x1fffff;
    const uint64_t uy = static_cast<uint64_t>(k.y + bias) & 0x1fffff;
    const uint64_t uz = static_cast<uint64_t>(k.z + bias) & 0x1fffff;
    return (ux << 42) | (uy << 21) | uz;
}

inline VertexKey unpack_vertex_key(uint64_t p) {
    constexpr int64_t bias = 1ll << 20;
    return VertexKey{static_cast<int64_t>((p >> 42) & 0x1fffff) - bias,
                     static_cast<int64_t>((p >> 21) & 0x1fffff) - bias,
                     static_cast<int64_t>(p & 0x1fffff) - bias};
}

struct VoxelMapConfig {
    double voxel_size = 0.2;  // meters
    int max_depth = 10;       // lattice is [0, 2^max_depth)^3 after the offset
    int embedding_dim = 16;
    double init_sigma = 0.01; // stddev of new vertex embeddings
    uint64_t seed = 0;        // embedding init seed
    // Shift added to signed voxel indices; -1 means "center the lattice".
    int origin_offset = -1;

    int offset() const { return origin_offset >= 0 ? origin_offset : (1 << (max_depth - 1)); }
};

// Per-corner interpolation stencil. Weights follow corner order
// k = dx + 2*dy + 4*dz.
struct TrilerpStencil {
    std::array<VertexKey, 8> keys;
    std::array<double, 8> weights;
    Vec3 cell_min = Vec3::Zero(); // world position of corner 0
};

struct AllocationResult {
    std::vector<MortonCode> newly_allocated; // sorted ascending
    int64_t out_of_range_points = 0;
};

struct HitCounts {
    int64_t novel = 0;        // N_c: distinct voxel codes covered but not allocated
    int64_t observed = 0;     // N_o: distinct allocated codes hit
    int64_t out_of_range = 0; // points outside the lattice (not in either tally)
};

struct SparsityReport {
    uint64_t voxel_count = 0;
    uint64_t vertex_count = 0;
    uint64_t embedding_bytes = 0;
    uint64_t dense_grid_bytes = 0; // dense vertex grid over the allocated AABB
};

// Sparse voxel scene map: Morton-coded leaf voxels over a fixed lattice with
// one shared embedding vector per corner vertex. Single writer (the mapper);
// readers work on deep copies.
class VoxelMap {
  public:
    explicit VoxelMap(const VoxelMapConfig& cfg = {});

    const VoxelMapConfig& config() const { return cfg_; }
    double voxel_size() const { return cfg_.voxel_size; }
    int embedding_dim() const { return cfg_.embedding_dim; }

    // Signed voxel index containing a world point (floor division).
    Eigen::Vector3i voxel_of(const Vec3& p) const;

    // Signed voxel index -> Morton code; throws OutOfRangeError outside the
    // lattice extent.
    MortonCode code_of(const Eigen::Vector3i& v) const;
    std::optional<MortonCode> try_code_of(const Eigen::Vector3i& v) const;
    Eigen::Vector3i voxel_of_code(MortonCode m) const;

    bool allocated(MortonCode m) const { return leaves_.contains(m); }
    size_t voxel_count() const { return leaves_.size(); }
    size_t vertex_count() const { return vertices_.size(); }
    bool empty() const { return leaves_.empty(); }

    // World AABB of a voxel given its Morton code.
    std::pair<Vec3, Vec3> voxel_bounds(MortonCode m) const;

    AllocationResult allocate_from_points(std::span<const Vec3> points);
    HitCounts count_voxel_hits(std::span<const Vec3> points) const;

    // Trilinear blend of the 8 corner embeddings at p. Throws
    // UnallocatedVoxelError when p is not inside an allocated voxel.
    Eigen::VectorXd trilerp(const Vec3& p, TrilerpStencil* stencil = nullptr) const;

    // Stencil only (no blend); cheap path for batch assembly.
    TrilerpStencil stencil_at(const Vec3& p) const;

    SparsityReport sparsity_report(size_t bytes_per_scalar = sizeof(double)) const;

    const Eigen::VectorXd& embedding(const VertexKey& k) const;
    Eigen::VectorXd& embedding_mut(const VertexKey& k);
    bool has_vertex(const VertexKey& k) const { return vertices_.contains(pack_vertex_key(k)); }

    std::vector<MortonCode> sorted_codes() const;
    std::vector<uint64_t> sorted_vertex_keys() const; // packed keys, ascending

    // Direct access for checkpoint I/O and snapshot checksums.
    const std::unordered_map<uint64_t, Eigen::VectorXd>& vertex_store() const { return vertices_; }
    void insert_raw(MortonCode code);                          // no corner creation
    void insert_vertex_raw(uint64_t packed, Eigen::VectorXd e); // checkpoint load path

    std::array<VertexKey, 8> corner_keys(const Eigen::Vector3i& voxel) const;

  private:
    Eigen::VectorXd make_embedding(uint64_t packed_key) const;

    VoxelMapConfig cfg_;
    std::unordered_set<MortonCode> leaves_;
    std::unordered_map<uint64_t, Eigen::VectorXd> vertices_;
};

} // namespace voxslam
