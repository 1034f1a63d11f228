#pragma once

#include <filesystem>
#include <vector>

#include "voxslam/geometry.hpp"

namespace voxslam {

// Timestamped pose sequence. File format (read/write, bit-exact):
// one line per pose, "timestamp tx ty tz qx qy qz qw", Hamilton quaternions,
// timestamps in seconds, strictly increasing.
struct Trajectory {
    std::vector<double> timestamps;
    std::vector<Transform> poses;

    size_t size() const { return poses.size(); }
    void push_back(double t, const Transform& T);
};

void write_trajectory(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory(const std::filesystem::path& path);

} // namespace voxslam
