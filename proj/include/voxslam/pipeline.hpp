#pragma once

#include <memory>

#include "voxslam/config.hpp"
#include "voxslam/scene_sim.hpp"

namespace voxslam {

// One line of the per-frame structured log.
struct FrameLogRecord {
    int frame = 0;
    bool keyframe = false;
    uint64_t voxels = 0;
    int64_t nc = 0, no = 0;
    double kf_ratio = 0;
    double track_loss = 0;
    int track_iters = 0;
    bool tracking_lost = false;
    double map_loss_first = 0, map_loss_last = 0;
    Transform pose;
};

std::string format_log_record(const FrameLogRecord& rec);
FrameLogRecord parse_log_record(const std::string& line);

struct SlamOutput {
    Trajectory trajectory; // refined per-frame poses
    std::vector<FrameLogRecord> logs;
    std::shared_ptr<Mapper> mapper; // final map + decoder
    uint64_t snapshot_checksum_failures = 0;
};

// Full tracking-and-mapping run over a dataset. Single-threaded mode
// interleaves tracking and mapping deterministically; concurrent mode runs
// them as two threads connected by a bounded frame queue and an atomically
// swapped snapshot. The first frame's pose is anchored to the dataset's
// ground-truth trajectory (gauge); with use_gt_poses every pose is.
SlamOutput run_slam(const Dataset& dataset, const RunConfig& cfg, Profiler* prof = nullptr);

// Holdout-pixel loss of one frame against the current map (forward only);
// used by evaluation and the acceptance suite.
LossValues evaluate_frame_loss(const VoxelMap& map, const DecoderParams& decoder,
                               const Frame& frame, const Transform& pose,
                               std::span<const Eigen::Vector2i> pixels, const SamplerConfig& scfg,
                               const RenderConfig& rcfg, uint64_t seed);

} // namespace voxslam
