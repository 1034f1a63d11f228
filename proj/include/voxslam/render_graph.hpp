#pragma once

#include <span>
#include <vector>

#include "voxslam/decoder.hpp"
#include "voxslam/profile.hpp"
#include "voxslam/sampler.hpp"
#include "voxslam/voxel_map.hpp"

namespace voxslam {

// One frame's worth of flattened render samples: everything needed to
// evaluate the losses and their gradients at a fixed pose linearization
// point. Behind samples are already excluded; voxel/stencil bindings are
// frozen at assembly time.
struct AssembledBatch {
    Eigen::MatrixXd q;         // 3 x S: sample world points at the linearization pose
    std::vector<double> depths; // S, along-ray
    std::vector<std::array<int32_t, 8>> corners; // per sample: columns into `embeddings`
    std::vector<Vec3> cell_min;                  // per sample: voxel lower corner
    std::vector<RayBatchInfo> rays;
    Eigen::MatrixXd embeddings;        // N x V gathered vertex embeddings
    std::vector<uint64_t> vertex_keys; // V packed keys, aligned with columns
    LossDenominators denom;
    int rays_requested = 0;
    int rays_with_hits = 0; // rays with at least one voxel hit
    double voxel_size = 0;

    int64_t sample_count() const { return static_cast<int64_t>(depths.size()); }
};

// Ray generation + intersection + stratified sampling + stencil gathering
// for the given pixels of one frame at the given pose.
AssembledBatch assemble_batch(const VoxelMap& map, const Frame& frame, const Transform& pose,
                              std::span<const Eigen::Vector2i> pixels, const SamplerConfig& scfg,
                              const RenderConfig& rcfg, Rng& rng, Profiler* prof = nullptr);

struct GradRequest {
    bool theta = false;
    bool embeddings = false;
    bool pose = false;
    bool backward = true; // false: forward-only evaluation
};

struct RenderEval {
    RenderLossTerms terms;
    double total = 0;
    bool valid = false; // false when the batch had no valid rays
    Vec6 xi_grad = Vec6::Zero();
    Eigen::VectorXd theta_grad;     // empty unless requested
    Eigen::MatrixXd embedding_grad; // N x V aligned with batch.vertex_keys; empty unless requested
    int64_t forward_ops = 0, backward_ops = 0;
};

// Full differentiable pipeline for one assembled batch:
// loss(render(decode(trilerp(exp(xi) * q)))). Gradients are exact
// reverse-mode derivatives at xi = 0; forward-only evaluation accepts any
// xi (used by the finite-difference checks). Samples are processed in
// chunks of at most chunk_samples to bound memory.
RenderEval evaluate_batch(const DecoderParams& params, const AssembledBatch& batch,
                          const RenderConfig& cfg, const Twist& xi, const GradRequest& req,
                          int chunk_samples = 8192, Profiler* prof = nullptr);

} // namespace voxslam
