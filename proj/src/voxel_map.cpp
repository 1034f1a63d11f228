#include "voxslam/voxel_map.hpp"

#include <algorithm>
#include <cmath>

namespace voxslam {

VoxelMap::VoxelMap(const VoxelMapConfig& cfg) : cfg_(cfg) {
    if (cfg_.voxel_size <= 0 || cfg_.max_depth < 1 || cfg_.max_depth > kMaxMortonDepth ||
        cfg_.embedding_dim < 1) {
        throw Error("voxel map: invalid configuration");
    }
}

Eigen::Vector3i VoxelMap::voxel_of(const Vec3& p) const {
    return Eigen::Vector3i(static_cast<int>(std::floor(p.x() / cfg_.voxel_size)),
                           static_cast<int>(std::floor(p.y() / cfg_.voxel_size)),
                           static_cast<int>(std::floor(p.z() / cfg_.voxel_size)));
}

std::optional<MortonCode> VoxelMap::try_code_of(const Eigen::Vector3i& v) const {
    const int off = cfg_.offset();
    const int64_t limit = 1ll << cfg_.max_depth;
    const int64_t sx = v.x() + off, sy = v.y() + off, sz = v.z() + off;
    if (sx < 0 || sy < 0 || sz < 0 || sx >= limit || sy >= limit || sz >= limit) {
        return std::nullopt;
    }
    return morton_encode(VoxelCoord{static_cast<uint32_t>(sx), static_cast<uint32_t>(sy),
                                    static_cast<uint32_t>(sz)},
                         cfg_.max_depth);
}

MortonCode VoxelMap::code_of(const Eigen::Vector3i& v) const {
    auto c = try_code_of(v);
    if (!c) {
        throw OutOfRangeError("voxel map: voxel index outside lattice extent");
    }
    return *c;
}

Eigen::Vector3i VoxelMap::voxel_of_code(MortonCode m) const {
    const VoxelCoord c = morton_decode(m, cfg_.max_depth);
    const int off = cfg_.offset();
    return Eigen::Vector3i(static_cast<int>(c.x) - off, static_cast<int>(c.y) - off,
                           static_cast<int>(c.z) - off);
}

std::pair<Vec3, Vec3> VoxelMap::voxel_bounds(MortonCode m) const {
    const Eigen::Vector3i v = voxel_of_code(m);
    const Vec3 lo = v.cast<double>() * cfg_.voxel_size;
    return {lo, lo + Vec3::Constant(cfg_.voxel_size)};
}

std::array<VertexKey, 8> VoxelMap::corner_keys(const Eigen::Vector3i& v) const {
    std::array<VertexKey, 8> out;
    for (int k = 0; k < 8; ++k) {
        out[k] = VertexKey{v.x() + (k & 1), v.y() + ((k >> 1) & 1), v.z() + ((k >> 2) & 1)};
    }
    return out;
}

Eigen::VectorXd VoxelMap::make_embedding(uint64_t packed_key) const {
    // Seeded per vertex so allocation is order-independent.
    Rng rng(mix_seed(cfg_.seed, packed_key));
    Eigen::VectorXd e(cfg_.embedding_dim);
    for (int i = 0; i < cfg_.embedding_dim; ++i) {
        e[i] = cfg_.init_sigma * rng.normal();
    }
    return e;
}

AllocationResult VoxelMap::allocate_from_points(std::span<const Vec3> points) {
    AllocationResult res;
    std::unordered_set<MortonCode> fresh;
    for (const Vec3& p : points) {
        auto code = try_code_of(voxel_of(p));
        if (!code) {
            ++res.out_of_range_points;
            continue;
        }
        if (!leaves_.contains(*code)) {
            fresh.insert(*code);
        }
    }
    res.newly_allocated.assign(fresh.begin(), fresh.end());
    std::sort(res.newly_allocated.begin(), res.newly_allocated.end());
    for (MortonCode code : res.newly_allocated) {
        leaves_.insert(code);
        for (const VertexKey& k : corner_keys(voxel_of_code(code))) {
            const uint64_t packed = pack_vertex_key(k);
            if (!vertices_.contains(packed)) {
                vertices_.emplace(packed, make_embedding(packed));
            }
        }
    }
    return res;
}

HitCounts VoxelMap::count_voxel_hits(std::span<const Vec3> points) const {
    HitCounts hc;
    std::unordered_set<MortonCode> seen_novel, seen_observed;
    for (const Vec3& p : points) {
        auto code = try_code_of(voxel_of(p));
        if (!code) {
            ++hc.out_of_range;
            continue;
        }
        (leaves_.contains(*code) ? seen_observed : seen_novel).insert(*code);
    }
    hc.novel = static_cast<int64_t>(seen_novel.size());
    hc.observed = static_cast<int64_t>(seen_observed.size());
    return hc;
}

TrilerpStencil VoxelMap::stencil_at(const Vec3& p) const {
    const Eigen::Vector3i v = voxel_of(p);
    auto code = try_code_of(v);
    if (!code || !leaves_.contains(*code)) {
        throw UnallocatedVoxelError("trilerp: point is not inside an allocated voxel");
    }
    TrilerpStencil st;
    st.keys = corner_keys(v);
    st.cell_min = v.cast<double>() * cfg_.voxel_size;
    const Vec3 u = (p - st.cell_min) / cfg_.voxel_size;
    for (int k = 0; k < 8; ++k) {
        const double wx = (k & 1) ? u.x() : 1.0 - u.x();
        const double wy = ((k >> 1) & 1) ? u.y() : 1.0 - u.y();
        const double wz = ((k >> 2) & 1) ? u.z() : 1.0 - u.z();
        st.weights[k] = wx * wy * wz;
    }
    return st;
}

Eigen::VectorXd VoxelMap::trilerp(const Vec3& p, TrilerpStencil* stencil) const {
    const TrilerpStencil st = stencil_at(p);
    const Vec3 u = (p - st.cell_min) / cfg_.voxel_size;
    // Nested lerps a + t*(b - a): exact at corners and exact when the blended
    // vectors coincide.
    auto lerp = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b, double t) {
        return Eigen::VectorXd(a + t * (b - a));
    };
    std::array<const Eigen::VectorXd*, 8> e;
    for (int k = 0; k < 8; ++k) {
        e[k] = &vertices_.at(pack_vertex_key(st.keys[k]));
    }
    const Eigen::VectorXd c00 = lerp(*e[0], *e[1], u.x());
    const Eigen::VectorXd c10 = lerp(*e[2], *e[3], u.x());
    const Eigen::VectorXd c01 = lerp(*e[4], *e[5], u.x());
    const Eigen::VectorXd c11 = lerp(*e[6], *e[7], u.x());
    const Eigen::VectorXd c0 = lerp(c00, c10, u.y());
    const Eigen::VectorXd c1 = lerp(c01, c11, u.y());
    Eigen::VectorXd out = lerp(c0, c1, u.z());
    if (stencil) {
        *stencil = st;
    }
    return out;
}

SparsityReport VoxelMap::sparsity_report(size_t bytes_per_scalar) const {
    SparsityReport r;
    r.voxel_count = leaves_.size();
    r.vertex_count = vertices_.size();
    r.embedding_bytes = r.vertex_count * cfg_.embedding_dim * bytes_per_scalar;
    if (leaves_.empty()) {
        return r;
    }
    Eigen::Vector3i lo = Eigen::Vector3i::Constant(INT32_MAX);
    Eigen::Vector3i hi = Eigen::Vector3i::Constant(INT32_MIN);
    for (MortonCode m : leaves_) {
        const Eigen::Vector3i v = voxel_of_code(m);
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    const Eigen::Vector3i span = hi - lo + Eigen::Vector3i::Ones();
    const uint64_t dense_vertices = static_cast<uint64_t>(span.x() + 1) *
                                    static_cast<uint64_t>(span.y() + 1) *
                                    static_cast<uint64_t>(span.z() + 1);
    r.dense_grid_bytes = dense_vertices * cfg_.embedding_dim * bytes_per_scalar;
    return r;
}

const Eigen::VectorXd& VoxelMap::embedding(const VertexKey& k) const {
    auto it = vertices_.find(pack_vertex_key(k));
    if (it == vertices_.end()) {
        throw UnallocatedVoxelError("embedding: vertex does not exist");
    }
    return it->second;
}

Eigen::VectorXd& VoxelMap::embedding_mut(const VertexKey& k) {
    auto it = vertices_.find(pack_vertex_key(k));
    if (it == vertices_.end()) {
        throw UnallocatedVoxelError("embedding: vertex does not exist");
    }
    return it->second;
}

std::vector<MortonCode> VoxelMap::sorted_codes() const {
    std::vector<MortonCode> out(leaves_.begin(), leaves_.end());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<uint64_t> VoxelMap::sorted_vertex_keys() const {
    std::vector<uint64_t> out;
    out.reserve(vertices_.size());
    for (const auto& [k, _] : vertices_) {
        out.push_back(k);
    }
    std::sort(out.begin(), out.end());
    return out;
}

void VoxelMap::insert_raw(MortonCode code) {
    leaves_.insert(code);
}

void VoxelMap::insert_vertex_raw(uint64_t packed, Eigen::VectorXd e) {
    vertices_[packed] = std::move(e);
}

} // namespace voxslam
