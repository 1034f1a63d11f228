#pragma once

#include <memory>
#include <optional>

#include "voxslam/adam.hpp"
#include "voxslam/render_graph.hpp"
#include "voxslam/tracker.hpp"

namespace voxslam {

struct MapperConfig {
    double kf_ratio_threshold = 0.2; // insert when N_c / N_o exceeds this
    int kf_max_interval = 10;        // insert at least every N frames
    int window_keyframes = 4;        // N_kf
    int rays_per_frame = 1024;       // N_m
    int iterations = 15;             // per integrated frame
    int bootstrap_iterations = 100;  // first frame, pose fixed
    double theta_lr = 1e-3;
    double embedding_lr = 5e-3;
    double pose_lr = 1e-3;
    // Pixels per frame withheld from optimization (evaluation holdout).
    int holdout_per_frame = 0;
};

struct Keyframe {
    Frame frame;
    Transform pose;                         // optimizable except for the gauge frame
    int insertion_index = 0;                // position in the keyframe list
    std::vector<MortonCode> observed_codes; // distinct codes covered at insertion
};

// Deterministic per-frame holdout pixel set (seeded shuffle prefix); shared
// between the mapper's exclusion logic and evaluation code.
std::vector<Eigen::Vector2i> holdout_pixels(const Intrinsics& K, uint64_t seed, int frame_index,
                                            int count);

// Keyframe bookkeeping, dynamic voxel allocation and windowed joint
// optimization of decoder parameters, vertex embeddings and keyframe poses.
// Sole writer of the map; readers receive deep snapshots.
class Mapper {
  public:
    Mapper(const VoxelMapConfig& map_cfg, const DecoderLayout& layout, const MapperConfig& cfg,
           const RenderConfig& rcfg, const SamplerConfig& scfg, uint64_t seed,
           Profiler* prof = nullptr);

    static bool should_insert_keyframe(int64_t n_c, int64_t n_o, int frames_since_last_kf,
                                       const MapperConfig& cfg, double* ratio_out = nullptr);

    struct IntegrationResult {
        bool keyframe_inserted = false;
        double kf_ratio = 0;
        HitCounts hits;
        size_t new_voxels = 0;
        int64_t dropped_points = 0;
    };
    // Back-projects the frame's valid depth, applies the keyframe policy
    // (hit counting happens before allocation), allocates voxels, and makes
    // the frame current for optimization.
    IntegrationResult integrate_frame(const Frame& frame, const Transform& pose);

    struct OptimizeResult {
        RenderLossTerms first, last;
        double first_total = 0, last_total = 0;
        int applied_iterations = 0;
        int aborted_iterations = 0; // non-finite loss, update skipped
        Transform refined_pose;     // current frame's pose after the window
    };
    // Windowed joint optimization around the current frame. The random
    // keyframe subset is selected once per call.
    OptimizeResult optimize_current(int iterations);

    // First-frame map fit with the pose held fixed.
    OptimizeResult bootstrap();

    std::shared_ptr<const MapSnapshot> publish_snapshot();

    // Uniform random subset of the keyframe list (excluding the current
    // frame's own entry); exposed for tests.
    std::vector<int> select_window_indices(Rng& rng) const;

    const VoxelMap& map() const { return map_; }
    const DecoderParams& decoder() const { return decoder_; }
    DecoderParams& decoder_mut() { return decoder_; }
    const std::vector<Keyframe>& keyframes() const { return keyframes_; }
    int frames_since_last_keyframe() const { return frames_since_last_kf_; }
    uint64_t snapshot_sequence() const { return snapshot_seq_; }
    const MapperConfig& config() const { return cfg_; }
    const Transform& current_pose() const;

  private:
    struct CurrentFrame {
        Frame frame;
        Transform pose;
        bool is_keyframe = false;
        int kf_index = -1; // into keyframes_ when inserted
    };
    struct WindowFrame {
        const Frame* frame = nullptr;
        Transform* pose = nullptr;   // live slot updated by optimization
        AdamState* adam = nullptr;   // twist moments; null when not optimizable
    };

    OptimizeResult run_window(const std::vector<WindowFrame>& window, int iterations);
    std::vector<Eigen::Vector2i> sample_pixels(const Frame& frame, int count);
    const std::vector<uint8_t>& holdout_mask(const Frame& frame);

    VoxelMapConfig map_cfg_;
    MapperConfig cfg_;
    RenderConfig rcfg_;
    SamplerConfig scfg_;
    uint64_t seed_;
    Profiler* prof_;

    VoxelMap map_;
    DecoderParams decoder_;
    AdamState theta_adam_;
    std::unordered_map<uint64_t, AdamState> vertex_adam_;
    std::vector<Keyframe> keyframes_;
    std::vector<AdamState> keyframe_pose_adam_;
    std::optional<CurrentFrame> current_;
    AdamState current_pose_adam_{6};
    int frames_since_last_kf_ = 0;
    uint64_t snapshot_seq_ = 0;
    Rng rng_;
    Rng select_rng_;
    std::unordered_map<int, std::vector<uint8_t>> holdout_masks_;
};

} // namespace voxslam
