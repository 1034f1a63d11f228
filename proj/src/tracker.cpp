#include "voxslam/tracker.hpp"

#include "voxslam/adam.hpp"
#include "voxslam/checkpoint.hpp"

namespace voxslam {

MapSnapshot::MapSnapshot(VoxelMap m, DecoderParams d, uint64_t seq)
    : map(std::move(m)), decoder(std::move(d)), sequence(seq) {
    checksum = compute_checksum();
}

uint64_t MapSnapshot::compute_checksum() const {
    const std::string bytes = serialize_checkpoint(map, decoder);
    return fnv1a64(bytes.data(), bytes.size());
}

TrackResult track_frame(const Frame& frame, const Transform& prev_pose,
                        const MapSnapshot& snapshot, const TrackerConfig& cfg,
                        const RenderConfig& rcfg, const SamplerConfig& scfg, Rng& rng,
                        Profiler* prof) {
    if (snapshot.map.empty()) {
        throw Error("track_frame: snapshot map is empty");
    }
    const Intrinsics& K = frame.intrinsics;
    Transform pose = prev_pose; // zero-motion model
    AdamState adam(6);
    const AdamConfig adam_cfg{cfg.pose_lr};
    GradRequest req;
    req.pose = true;

    TrackResult result;
    result.pose = pose;
    for (int it = 0; it < cfg.iterations; ++it) {
        auto t_iter = Profiler::scope(prof, "tracking_iteration");
        std::vector<Eigen::Vector2i> pixels(cfg.num_pixels);
        for (auto& px : pixels) {
            px = Eigen::Vector2i(static_cast<int>(rng.uniform_index(K.width)),
                                 static_cast<int>(rng.uniform_index(K.height)));
        }
        const AssembledBatch batch =
            assemble_batch(snapshot.map, frame, pose, pixels, scfg, rcfg, rng, prof);
        if (batch.rays_with_hits <
            static_cast<int>(cfg.min_hit_fraction * static_cast<double>(cfg.num_pixels))) {
            throw DegenerateFrameError("track_frame: too few rays hit the map (" +
                                       std::to_string(batch.rays_with_hits) + "/" +
                                       std::to_string(cfg.num_pixels) + ")");
        }
        const RenderEval eval =
            evaluate_batch(snapshot.decoder, batch, rcfg, Twist(), req, 8192, prof);
        if (!eval.valid) {
            throw DegenerateFrameError("track_frame: no valid rays in batch");
        }
        if (!eval.xi_grad.allFinite() || !std::isfinite(eval.total)) {
            throw NonFiniteError("track_frame: non-finite pose gradient");
        }
        const Vec6 delta = adam.step_direction(eval.xi_grad, adam_cfg);
        pose = apply_increment(Twist::from_vec(delta), pose);
        result.final_loss = eval.total;
        result.loss_history.push_back(eval.total);
        result.iterations = it + 1;
        if (delta.norm() < cfg.convergence_xi) {
            break;
        }
    }
    pose.orthonormalize();
    result.pose = pose;
    return result;
}

} // namespace voxslam
