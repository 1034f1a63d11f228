#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "voxslam/geometry.hpp"

namespace voxslam {

struct RenderConfig {
    double truncation = 0.1; // tr, meters
    double eps_norm = 1e-8;  // weight normalization floor
    double lambda_rgb = 1.0;
    double lambda_depth = 0.1;
    double lambda_fs = 5.0;
    double lambda_sdf = 50.0;
};

enum class SampleClass : uint8_t {
    kFreeSpace,
    kTruncation,
    kBehind,      // excluded from rendering and all losses
    kUnclassified // ray has no ground-truth depth
};

// Eq. w = sigmoid(s/tr) * sigmoid(-s/tr); peaks at 0.25 on the surface.
inline double sdf_weight(double s, double tr) {
    const double sig = 1.0 / (1.0 + std::exp(-s / tr));
    return sig * (1.0 - sig);
}

inline SampleClass classify_sample(double d, double d_gt, double tr) {
    if (d < d_gt - tr) {
        return SampleClass::kFreeSpace;
    }
    if (d <= d_gt + tr) {
        return SampleClass::kTruncation;
    }
    return SampleClass::kBehind;
}

struct RaySampleData {
    std::vector<Vec3> colors;
    std::vector<double> sdfs;
    std::vector<double> depths; // along-ray, increasing
    std::optional<Vec3> gt_color;
    std::optional<double> gt_depth; // along-ray
};

struct RayRender {
    Vec3 color = Vec3::Zero();
    double depth = 0;
    bool valid = false;
    std::vector<double> weights; // normalized; 0 for excluded samples
};

// SDF-weighted rendering of one ray. Behind samples (when gt depth is known)
// are excluded; a ray with no included samples is invalid.
RayRender render_ray(const RaySampleData& ray, const RenderConfig& cfg);

struct LossValues {
    double rgb = 0, depth = 0, fs = 0, sdf = 0, total = 0;
};

// Batch losses: L1 color/depth on rendered rays, squared free-space and
// SDF losses on classified samples (nested per-ray means). Throws
// EmptyBatchError when no ray is valid.
LossValues compute_losses(std::span<const RaySampleData> rays, const RenderConfig& cfg);

// ---------------------------------------------------------------------------
// Batched form used by the gradient tape. Samples are flattened across rays
// (Behind samples already dropped); classes align with the included samples.

struct RayBatchInfo {
    int begin = 0, count = 0; // included-sample range
    std::optional<Vec3> gt_color;
    std::optional<double> gt_depth;
    std::vector<SampleClass> classes; // size == count
};

// Batch-level denominators for the loss means; must be computed over the
// whole frame batch before any chunked evaluation.
struct LossDenominators {
    int64_t rgb = 0;   // valid rays with gt color
    int64_t depth = 0; // valid rays with gt depth
    int64_t fs = 0;    // rays with at least one free-space sample
    int64_t sdf = 0;   // rays with at least one truncation sample
    int64_t valid = 0; // rays with at least one included sample
};

LossDenominators count_denominators(std::span<const RayBatchInfo> rays);

struct RenderLossTerms {
    double rgb = 0, depth = 0, fs = 0, sdf = 0;
    double total(const RenderConfig& cfg) const {
        return cfg.lambda_rgb * rgb + cfg.lambda_depth * depth + cfg.lambda_fs * fs +
               cfg.lambda_sdf * sdf;
    }
};

// Forward loss terms over one chunk of rays, already scaled by the global
// denominators (summing chunk terms across chunks yields the batch means).
RenderLossTerms render_loss_forward(const Eigen::MatrixXd& rgb,
                                    const Eigen::RowVectorXd& sdf,
                                    std::span<const double> depths,
                                    std::span<const RayBatchInfo> rays, const RenderConfig& cfg,
                                    const LossDenominators& denom);

// Hand-derived reverse pass of render_loss_forward w.r.t. the per-sample
// colors and SDF values; adds into rgb_grad / sdf_grad.
void render_loss_backward(const Eigen::MatrixXd& rgb, const Eigen::RowVectorXd& sdf,
                          std::span<const double> depths, std::span<const RayBatchInfo> rays,
                          const RenderConfig& cfg, const LossDenominators& denom,
                          double total_grad, Eigen::MatrixXd& rgb_grad,
                          Eigen::RowVectorXd& sdf_grad);

} // namespace voxslam
