#pragma once

#include <optional>
#include <span>
#include <vector>

#include "voxslam/frame.hpp"
#include "voxslam/rng.hpp"
#include "voxslam/voxel_map.hpp"

namespace voxslam {

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::UnitZ(); // unit length
    Eigen::Vector2i pixel = Eigen::Vector2i::Zero();
    std::optional<Vec3> gt_color;
    std::optional<double> gt_depth; // along-ray distance (not z-depth)
};

struct HitSegment {
    MortonCode code = 0;
    double t_entry = 0;
    double t_exit = 0;
};
using HitSegments = std::vector<HitSegment>;

struct RaySamples {
    std::vector<double> depths; // strictly increasing, along the ray
    std::vector<Vec3> points;   // origin + depth * direction
};

struct SamplerConfig {
    double d_max = 8.0;      // meters
    double step_ratio = 0.1; // sampling step = step_ratio * voxel_size
    int max_samples = 64;    // per-ray cap; farthest samples dropped
};

// Rays for the given pixel indices. Origin is the camera center in world
// coordinates; gt depth is converted from the depth image's z-depth to
// along-ray distance so it is directly comparable with sample depths.
std::vector<Ray> generate_rays(const Frame& frame, const Transform& pose,
                               std::span<const Eigen::Vector2i> pixels);

// Slab test of a ray against an axis-aligned box; returns the (possibly
// degenerate) parameter interval, or nullopt when the ray misses.
std::optional<std::pair<double, double>> ray_box_interval(const Vec3& origin, const Vec3& dir,
                                                          const Vec3& box_min, const Vec3& box_max);

// Worst-case number of voxels a ray of length d_max can cross.
int max_hits(double d_max, double voxel_size);

// Ordered allocated-voxel segments along the ray within [0, d_max], found by
// an incremental 3-D grid walk; capped at max_hits(d_max, voxel_size).
// An empty result masks the ray out of rendering.
HitSegments intersect(const VoxelMap& map, const Ray& ray, double d_max);

// Depth-stratified samples inside the hit segments: one uniform draw per
// step-length sub-interval (trailing partial kept when longer than step/2).
RaySamples sample_points(const HitSegments& segments, const Ray& ray, double step, int max_samples,
                         Rng& rng);

} // namespace voxslam
