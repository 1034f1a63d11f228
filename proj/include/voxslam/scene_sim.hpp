#pragma once

#include <filesystem>
#include <vector>

#include "voxslam/frame.hpp"
#include "voxslam/rng.hpp"
#include "voxslam/trajectory.hpp"

namespace voxslam {

// Analytic SDF scene used as simulator and evaluation oracle. Every
// primitive SDF is exact (1-Lipschitz); the scene is their min-union.
struct Primitive {
    enum class Kind { kSphere, kBox, kRoom }; // kRoom: inward-facing box shell
    Kind kind = Kind::kSphere;
    Vec3 center = Vec3::Zero();
    Vec3 half_extents = Vec3::Zero(); // box / room
    double radius = 0;                // sphere
    Vec3 albedo = Vec3::Constant(0.5);

    static Primitive sphere(const Vec3& c, double r, const Vec3& albedo);
    static Primitive box(const Vec3& c, const Vec3& half, const Vec3& albedo);
    static Primitive room(const Vec3& c, const Vec3& half, const Vec3& albedo);

    double sdf(const Vec3& p) const;
};

struct SceneSpec {
    std::vector<Primitive> primitives;
    double extent_bound = 8.0; // sphere tracing gives up beyond this distance

    // Canonical acceptance scene: 4x4x3 m room shell with one sphere and one
    // box, centered slightly off-lattice so no surface lies exactly on the
    // evaluation lattice planes.
    static SceneSpec box_room();
    // Single wall patch; minimal scene for unit tests.
    static SceneSpec single_wall();
};

struct SdfSample {
    double distance = 0;
    Vec3 albedo = Vec3::Zero();
};

// Exact signed distance (negative inside solids) and the albedo of the
// nearest primitive.
SdfSample scene_sdf(const SceneSpec& scene, const Vec3& p);

// Sphere-traced RGB-D frame: per pixel, march the SDF until |d| < 1e-5
// (max 256 steps); depth map stores z-depth, 0 on miss. Unshaded albedo
// color. Deterministic; rows render in parallel.
Image render_gt_frame(const SceneSpec& scene, const Transform& pose, const Intrinsics& K);

// Camera-to-world look-at pose (z forward, y down, world +z up).
Transform look_at(const Vec3& eye, const Vec3& target);

struct TrajectorySpec {
    std::vector<std::pair<double, Transform>> poses; // (timestamp, pose)

    // Interior orbit for the box-room scene: full azimuth turn with a slow
    // height bob and pitch sweep so floor and ceiling enter the view.
    static TrajectorySpec box_room_orbit(int frames);
    // Orbit around half the room, then a jump to face an unseen corner;
    // exercises the keyframe ratio rule.
    static TrajectorySpec box_room_jump(int frames);
};

struct Dataset {
    Intrinsics intrinsics;
    std::vector<Frame> frames;
    Trajectory gt;
};

// Canonical desk-scale camera (80x60, fx = fy = 70).
Intrinsics box_room_camera();

// Render a dataset along the trajectory; optional i.i.d. Gaussian depth
// noise (deterministic per seed, schedule-independent).
Dataset simulate_dataset(const SceneSpec& scene, const TrajectorySpec& traj, const Intrinsics& K,
                         double depth_noise_sigma = 0.0, uint64_t seed = 1);

// Directory layout: intrinsics.txt, traj_gt.txt, frames/%06d.color.ppm
// (binary P6), frames/%06d.depth.bin (w u32, h u32, row-major f32 meters,
// 0 = invalid), little-endian.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

} // namespace voxslam
