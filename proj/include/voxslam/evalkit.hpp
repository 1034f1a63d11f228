#pragma once

#include <functional>

#include "voxslam/decoder.hpp"
#include "voxslam/scene_sim.hpp"
#include "voxslam/trajectory.hpp"
#include "voxslam/voxel_map.hpp"

namespace voxslam {

struct AteResult {
    double rmse = 0, mean = 0, median = 0;
};

// Absolute trajectory error over matched timestamps. With align, the
// closed-form least-squares rigid alignment (no scale) of the estimated
// positions onto the ground truth is applied first.
AteResult ate(const Trajectory& est, const Trajectory& gt, bool align);

struct ChamferResult {
    double accuracy = 0;         // mean nearest-gt distance over recon points
    double completion = 0;       // mean nearest-recon distance over gt points
    double completion_ratio = 0; // fraction of gt points within threshold
};

// Directed Chamfer metrics between sampled point sets (grid-hash nearest
// neighbors, exact).
ChamferResult chamfer_metrics(std::span<const Vec3> recon, std::span<const Vec3> gt,
                              double threshold);

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;

    double area() const;
    bool empty() const { return triangles.empty(); }
};

// Level-set triangulation of the decoded SDF over a per-voxel sub-lattice
// (samples_per_voxel_axis cells per voxel edge). Lattice points outside
// allocated voxels take SDF = +outside_sdf. Cells are tetrahedralized
// (Freudenthal subdivision, crack-free across cells); vertices on shared
// cell edges are deduplicated. Zero-area triangles are dropped.
TriangleMesh extract_mesh(const VoxelMap& map, const DecoderParams& decoder,
                          int samples_per_voxel_axis = 4, double outside_sdf = 0.1);

// Same mesher over an arbitrary SDF on the cell lattice covering [lo, hi];
// the oracle path for tests and ground-truth meshes.
TriangleMesh extract_mesh_from_function(const std::function<double(const Vec3&)>& sdf,
                                        const Vec3& lo, const Vec3& hi, double cell_size);

TriangleMesh extract_mesh_analytic(const SceneSpec& scene, const Vec3& lo, const Vec3& hi,
                                   double cell_size);

// Uniform area-weighted surface samples (points_per_m2 density).
std::vector<Vec3> sample_mesh_points(const TriangleMesh& mesh, double points_per_m2, Rng& rng);

void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);
TriangleMesh read_obj(const std::filesystem::path& path);

struct SdfFieldError {
    double mae = 0;
    double p90 = 0;
    int64_t samples = 0;
};

// Field-level oracle: rejection-sample points inside allocated voxels with
// |analytic sdf| <= band and compare the decoded SDF against the analytic
// one. Throws InsufficientSamplesError below 100 accepted points.
SdfFieldError eval_sdf_field(const VoxelMap& map, const DecoderParams& decoder,
                             const SceneSpec& scene, double band, int64_t count, Rng& rng);

// Test hook: same sampling with an arbitrary predicted-SDF callback.
SdfFieldError eval_sdf_field_fn(const VoxelMap& map,
                                const std::function<double(const Vec3&)>& predicted,
                                const SceneSpec& scene, double band, int64_t count, Rng& rng);

} // namespace voxslam
