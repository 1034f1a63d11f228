#include "voxslam/tape.hpp"

#include "voxslam/errors.hpp"

namespace voxslam {

using Eigen::MatrixXd;

Tape::NodeId Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

MatrixXd& Tape::grad_ref(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) {
        n.grad = MatrixXd::Zero(n.value.rows(), n.value.cols());
    }
    return n.grad;
}

Tape::NodeId Tape::constant(MatrixXd value) {
    Node n;
    n.op = Op::kConst;
    n.value = std::move(value);
    return push(std::move(n));
}

Tape::NodeId Tape::var(MatrixXd value) {
    Node n;
    n.op = Op::kVar;
    n.value = std::move(value);
    n.needs_grad = true;
    return push(std::move(n));
}

Tape::NodeId Tape::affine(const ParamSlot& slot, NodeId x) {
    Node n;
    n.op = Op::kAffine;
    n.in[0] = x;
    n.slot = slot;
    Eigen::Map<const MatrixXd> W(slot.w, slot.rows, slot.cols);
    Eigen::Map<const Eigen::VectorXd> b(slot.b, slot.rows);
    const MatrixXd& X = nodes_[x].value;
    if (X.rows() != slot.cols) {
        throw Error("tape: affine input dimension mismatch");
    }
    n.value.noalias() = W * X;
    n.value.colwise() += b;
    n.needs_grad = nodes_[x].needs_grad || slot.w_grad != nullptr;
    forward_ops_ += 2ll * slot.rows * slot.cols * X.cols();
    return push(std::move(n));
}

Tape::NodeId Tape::relu(NodeId x) {
    Node n;
    n.op = Op::kRelu;
    n.in[0] = x;
    n.value = nodes_[x].value.cwiseMax(0.0);
    n.needs_grad = nodes_[x].needs_grad;
    forward_ops_ += n.value.size();
    return push(std::move(n));
}

Tape::NodeId Tape::sigmoid(NodeId x) {
    Node n;
    n.op = Op::kSigmoid;
    n.in[0] = x;
    n.value = (1.0 + (-nodes_[x].value.array()).exp()).inverse().matrix();
    n.needs_grad = nodes_[x].needs_grad;
    forward_ops_ += 4 * n.value.size();
    return push(std::move(n));
}

Tape::NodeId Tape::concat_rows(NodeId a, NodeId b) {
    Node n;
    n.op = Op::kConcatRows;
    n.in[0] = a;
    n.in[1] = b;
    const MatrixXd& A = nodes_[a].value;
    const MatrixXd& B = nodes_[b].value;
    n.value.resize(A.rows() + B.rows(), A.cols());
    n.value.topRows(A.rows()) = A;
    n.value.bottomRows(B.rows()) = B;
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    forward_ops_ += n.value.size();
    return push(std::move(n));
}

Tape::NodeId Tape::rows(NodeId x, int first, int count) {
    Node n;
    n.op = Op::kRows;
    n.in[0] = x;
    n.aux = first;
    n.aux2 = count;
    n.value = nodes_[x].value.middleRows(first, count);
    n.needs_grad = nodes_[x].needs_grad;
    forward_ops_ += n.value.size();
    return push(std::move(n));
}

Tape::NodeId Tape::sum_all(NodeId x) {
    Node n;
    n.op = Op::kSumAll;
    n.in[0] = x;
    n.value = MatrixXd::Constant(1, 1, nodes_[x].value.sum());
    n.needs_grad = nodes_[x].needs_grad;
    forward_ops_ += nodes_[x].value.size();
    return push(std::move(n));
}

Tape::NodeId Tape::se3_points(const MatrixXd& q, const Twist& xi, Vec6* xi_grad) {
    Node n;
    n.op = Op::kSe3Points;
    n.xi_grad = xi_grad;
    if (xi_grad != nullptr && xi.norm() != 0.0) {
        throw Error("tape: se3_points gradient requires linearization at xi = 0");
    }
    const Transform T = se3_exp(xi);
    n.value.noalias() = T.rotation() * q;
    n.value.colwise() += T.translation();
    n.needs_grad = xi_grad != nullptr;
    forward_ops_ += 18 * q.cols();
    return push(std::move(n));
}

Tape::NodeId Tape::trilerp(NodeId points, NodeId embeddings,
                           std::span<const std::array<int32_t, 8>> corners,
                           std::span<const Vec3> cell_min, double voxel_size) {
    Node n;
    n.op = Op::kTrilerp;
    n.in[0] = points;
    n.in[1] = embeddings;
    n.payload = static_cast<int>(trilerp_payloads_.size());
    trilerp_payloads_.push_back(TrilerpPayload{corners, cell_min, voxel_size});
    const MatrixXd& P = nodes_[points].value;
    const MatrixXd& E = nodes_[embeddings].value;
    const auto S = P.cols();
    n.value = MatrixXd::Zero(E.rows(), S);
    for (Eigen::Index j = 0; j < S; ++j) {
        const Vec3 u = (P.col(j) - cell_min[j]) / voxel_size;
        for (int k = 0; k < 8; ++k) {
            const double wx = (k & 1) ? u.x() : 1.0 - u.x();
            const double wy = ((k >> 1) & 1) ? u.y() : 1.0 - u.y();
            const double wz = ((k >> 2) & 1) ? u.z() : 1.0 - u.z();
            n.value.col(j) += (wx * wy * wz) * E.col(corners[j][k]);
        }
    }
    n.needs_grad = nodes_[points].needs_grad || nodes_[embeddings].needs_grad;
    forward_ops_ += 16ll * (E.rows() + 3) * S;
    return push(std::move(n));
}

Tape::NodeId Tape::render_loss(NodeId rgb, NodeId sdf, std::span<const double> depths,
                               std::span<const RayBatchInfo> rays, const RenderConfig& cfg,
                               const LossDenominators& denom) {
    Node n;
    n.op = Op::kRenderLoss;
    n.in[0] = rgb;
    n.in[1] = sdf;
    n.payload = static_cast<int>(loss_payloads_.size());
    RenderLossPayload p;
    p.depths = depths;
    p.rays = rays;
    p.cfg = cfg;
    p.denom = denom;
    const Eigen::RowVectorXd sdf_row = nodes_[sdf].value.row(0);
    p.terms = render_loss_forward(nodes_[rgb].value, sdf_row, depths, rays, cfg, denom);
    n.value = MatrixXd::Constant(1, 1, p.terms.total(cfg));
    loss_payloads_.push_back(std::move(p));
    n.needs_grad = nodes_[rgb].needs_grad || nodes_[sdf].needs_grad;
    forward_ops_ += 40ll * static_cast<int64_t>(depths.size());
    return push(std::move(n));
}

RenderLossTerms Tape::loss_terms(NodeId id) const {
    return loss_payloads_[nodes_[id].payload].terms;
}

void Tape::backward(NodeId output) {
    if (nodes_[output].value.size() != 1) {
        throw Error("tape: backward requires a scalar output node");
    }
    grad_ref(output)(0, 0) = 1.0;
    for (NodeId id = output; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.needs_grad || n.grad.size() == 0) {
            continue;
        }
        backward_node(id);
    }
}

void Tape::backward_node(NodeId id) {
    Node& n = nodes_[id];
    const MatrixXd& g = n.grad;
    switch (n.op) {
    case Op::kConst:
    case Op::kVar:
        break;
    case Op::kAffine: {
        Node& x = nodes_[n.in[0]];
        Eigen::Map<const MatrixXd> W(n.slot.w, n.slot.rows, n.slot.cols);
        if (x.needs_grad) {
            grad_ref(n.in[0]).noalias() += W.transpose() * g;
            backward_ops_ += 2ll * n.slot.rows * n.slot.cols * g.cols();
        }
        if (n.slot.w_grad != nullptr) {
            Eigen::Map<MatrixXd> Wg(n.slot.w_grad, n.slot.rows, n.slot.cols);
            Wg.noalias() += g * x.value.transpose();
            Eigen::Map<Eigen::VectorXd> bg(n.slot.b_grad, n.slot.rows);
            bg.noalias() += g.rowwise().sum();
            backward_ops_ += 2ll * n.slot.rows * n.slot.cols * g.cols() + g.size();
        }
        break;
    }
    case Op::kRelu: {
        Node& x = nodes_[n.in[0]];
        if (x.needs_grad) {
            grad_ref(n.in[0]).array() += (x.value.array() > 0.0).cast<double>() * g.array();
            backward_ops_ += 2 * g.size();
        }
        break;
    }
    case Op::kSigmoid: {
        Node& x = nodes_[n.in[0]];
        if (x.needs_grad) {
            grad_ref(n.in[0]).array() += n.value.array() * (1.0 - n.value.array()) * g.array();
            backward_ops_ += 3 * g.size();
        }
        break;
    }
    case Op::kConcatRows: {
        Node& a = nodes_[n.in[0]];
        Node& b = nodes_[n.in[1]];
        if (a.needs_grad) {
            grad_ref(n.in[0]) += g.topRows(a.value.rows());
        }
        if (b.needs_grad) {
            grad_ref(n.in[1]) += g.bottomRows(b.value.rows());
        }
        backward_ops_ += g.size();
        break;
    }
    case Op::kRows: {
        Node& x = nodes_[n.in[0]];
        if (x.needs_grad) {
            grad_ref(n.in[0]).middleRows(n.aux, n.aux2) += g;
            backward_ops_ += g.size();
        }
        break;
    }
    case Op::kSumAll: {
        Node& x = nodes_[n.in[0]];
        if (x.needs_grad) {
            grad_ref(n.in[0]).array() += g(0, 0);
            backward_ops_ += x.value.size();
        }
        break;
    }
    case Op::kSe3Points: {
        if (n.xi_grad != nullptr) {
            // Linearized at xi = 0, so the point value equals q.
            Vec3 sum = Vec3::Zero(), cross = Vec3::Zero();
            for (Eigen::Index j = 0; j < g.cols(); ++j) {
                const Vec3 gj = g.col(j);
                sum += gj;
                cross += Vec3(n.value.col(j)).cross(gj);
            }
            n.xi_grad->head<3>() += sum;
            n.xi_grad->tail<3>() += cross;
            backward_ops_ += 12 * g.cols();
        }
        break;
    }
    case Op::kTrilerp: {
        const TrilerpPayload& p = trilerp_payloads_[n.payload];
        Node& pts = nodes_[n.in[0]];
        Node& emb = nodes_[n.in[1]];
        const bool want_p = pts.needs_grad;
        const bool want_e = emb.needs_grad;
        MatrixXd* eg = want_e ? &grad_ref(n.in[1]) : nullptr;
        MatrixXd* pg = want_p ? &grad_ref(n.in[0]) : nullptr;
        const MatrixXd& E = emb.value;
        for (Eigen::Index j = 0; j < g.cols(); ++j) {
            const Vec3 u = (pts.value.col(j) - p.cell_min[j]) / p.voxel_size;
            const double ax[2] = {1.0 - u.x(), u.x()};
            const double ay[2] = {1.0 - u.y(), u.y()};
            const double az[2] = {1.0 - u.z(), u.z()};
            Vec3 dp = Vec3::Zero();
            for (int k = 0; k < 8; ++k) {
                const int bx = k & 1, by = (k >> 1) & 1, bz = (k >> 2) & 1;
                const double wk = ax[bx] * ay[by] * az[bz];
                if (eg != nullptr) {
                    eg->col(p.corners[j][k]) += wk * g.col(j);
                }
                if (pg != nullptr) {
                    const double ge = g.col(j).dot(E.col(p.corners[j][k]));
                    dp.x() += (bx ? 1.0 : -1.0) * ay[by] * az[bz] * ge;
                    dp.y() += (by ? 1.0 : -1.0) * ax[bx] * az[bz] * ge;
                    dp.z() += (bz ? 1.0 : -1.0) * ax[bx] * ay[by] * ge;
                }
            }
            if (pg != nullptr) {
                pg->col(j) += dp / p.voxel_size;
            }
        }
        backward_ops_ += 16ll * (E.rows() + 6) * g.cols();
        break;
    }
    case Op::kRenderLoss: {
        const RenderLossPayload& p = loss_payloads_[n.payload];
        Node& rgb = nodes_[n.in[0]];
        Node& sdf = nodes_[n.in[1]];
        MatrixXd& rgb_g = grad_ref(n.in[0]);
        MatrixXd& sdf_g = grad_ref(n.in[1]);
        Eigen::RowVectorXd sdf_row = sdf.value.row(0);
        Eigen::RowVectorXd sdf_row_grad = Eigen::RowVectorXd::Zero(sdf_row.cols());
        render_loss_backward(rgb.value, sdf_row, p.depths, p.rays, p.cfg, p.denom, g(0, 0),
                             rgb_g, sdf_row_grad);
        sdf_g.row(0) += sdf_row_grad;
        backward_ops_ += 60ll * static_cast<int64_t>(p.depths.size());
        break;
    }
    }
}

} // namespace voxslam
