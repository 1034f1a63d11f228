#pragma once

#include <array>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "voxslam/geometry.hpp"
#include "voxslam/renderer.hpp"

namespace voxslam {

// Reverse-mode tape over matrix-valued nodes (one column per sample).
// Values are computed eagerly at node creation; backward() visits the
// recorded DAG once in reverse order. Operation counters track forward and
// backward work so the backward/forward cost ratio can be asserted.
class Tape {
  public:
    using NodeId = int32_t;

    // Parameter block of an affine layer; gradients are accumulated into
    // w_grad / b_grad when non-null.
    struct ParamSlot {
        const double* w = nullptr; // column-major rows x cols
        const double* b = nullptr; // rows
        int rows = 0, cols = 0;
        double* w_grad = nullptr;
        double* b_grad = nullptr;
    };

    NodeId constant(Eigen::MatrixXd value);
    // Leaf with gradient storage (e.g. the gathered embedding matrix).
    NodeId var(Eigen::MatrixXd value);

    NodeId affine(const ParamSlot& slot, NodeId x); // W * x + b
    NodeId relu(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId concat_rows(NodeId a, NodeId b);
    NodeId rows(NodeId x, int first, int count);
    NodeId sum_all(NodeId x); // 1x1

    // World points under a pose increment: value = exp(xi) * q per column.
    // Backward accumulates d/dxi at the linearization point xi = 0 into
    // xi_grad (when non-null), using d(exp(xi) q)/dxi|0 = [I | -q^].
    NodeId se3_points(const Eigen::MatrixXd& q, const Twist& xi, Vec6* xi_grad);

    // Trilinear gather: column j of the result blends the 8 corner columns
    // of the embedding node with weights derived from point column j.
    NodeId trilerp(NodeId points, NodeId embeddings,
                   std::span<const std::array<int32_t, 8>> corners,
                   std::span<const Vec3> cell_min, double voxel_size);

    // Total render loss (1x1) over (rgb 3xS, sdf 1xS); metadata spans must
    // outlive the tape.
    NodeId render_loss(NodeId rgb, NodeId sdf, std::span<const double> depths,
                       std::span<const RayBatchInfo> rays, const RenderConfig& cfg,
                       const LossDenominators& denom);

    const Eigen::MatrixXd& value(NodeId id) const { return nodes_[id].value; }
    const Eigen::MatrixXd& grad(NodeId id) const { return nodes_[id].grad; }
    RenderLossTerms loss_terms(NodeId render_loss_node) const;

    // Reverse pass from a scalar output node.
    void backward(NodeId output);

    int64_t forward_ops() const { return forward_ops_; }
    int64_t backward_ops() const { return backward_ops_; }
    size_t node_count() const { return nodes_.size(); }

  private:
    enum class Op : uint8_t {
        kConst,
        kVar,
        kAffine,
        kRelu,
        kSigmoid,
        kConcatRows,
        kRows,
        kSumAll,
        kSe3Points,
        kTrilerp,
        kRenderLoss
    };

    struct TrilerpPayload {
        std::span<const std::array<int32_t, 8>> corners;
        std::span<const Vec3> cell_min;
        double voxel_size = 0;
    };
    struct RenderLossPayload {
        std::span<const double> depths;
        std::span<const RayBatchInfo> rays;
        RenderConfig cfg;
        LossDenominators denom;
        RenderLossTerms terms;
    };

    struct Node {
        Op op;
        std::array<NodeId, 2> in{-1, -1};
        Eigen::MatrixXd value;
        Eigen::MatrixXd grad; // sized on first accumulation
        bool needs_grad = false;
        int aux = 0, aux2 = 0; // op-specific (row range etc.)
        ParamSlot slot;
        Vec6* xi_grad = nullptr;
        int payload = -1;
    };

    NodeId push(Node n);
    Eigen::MatrixXd& grad_ref(NodeId id);
    void backward_node(NodeId id);

    std::vector<Node> nodes_;
    std::vector<TrilerpPayload> trilerp_payloads_;
    std::vector<RenderLossPayload> loss_payloads_;
    int64_t forward_ops_ = 0;
    int64_t backward_ops_ = 0;
};

} // namespace voxslam
