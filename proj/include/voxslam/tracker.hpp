#pragma once

#include <memory>

#include "voxslam/render_graph.hpp"

namespace voxslam {

struct TrackerConfig {
    int num_pixels = 1024; // N_t, pixels sampled per iteration
    int iterations = 30;
    double pose_lr = 1e-2;           // Adam step size in twist units
    double convergence_xi = 1e-6;    // stop when the applied increment is smaller
    double min_hit_fraction = 0.1;   // below this the frame is degenerate
};

// Immutable deep copy of the map + decoder handed from the mapper to the
// tracker. checksum covers the serialized content.
struct MapSnapshot {
    VoxelMap map;
    DecoderParams decoder;
    uint64_t sequence = 0;
    uint64_t checksum = 0;

    MapSnapshot(VoxelMap m, DecoderParams d, uint64_t seq);
    uint64_t compute_checksum() const;
};

struct TrackResult {
    Transform pose;
    double final_loss = 0;
    int iterations = 0;
    std::vector<double> loss_history; // per-iteration batch loss
};

// Frame-to-map pose optimization against a frozen snapshot: zero-motion
// initialization, per-iteration pixel resampling, first-order updates on the
// twist with re-linearization after every step. Decoder parameters and
// embeddings stay fixed. Throws DegenerateFrameError when too few rays hit
// the map (caller keeps the previous pose).
TrackResult track_frame(const Frame& frame, const Transform& prev_pose,
                        const MapSnapshot& snapshot, const TrackerConfig& cfg,
                        const RenderConfig& rcfg, const SamplerConfig& scfg, Rng& rng,
                        Profiler* prof = nullptr);

} // namespace voxslam
