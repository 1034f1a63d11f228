#pragma once

#include "voxslam/render_graph.hpp"

namespace voxslam::testutil {

// Synthetic render batch with consistent classes/targets; stencils reference
// a shared embedding matrix directly (no map needed).
struct BatchSpec {
    int rays = 4;
    int max_samples_per_ray = 8;
    int vertices = 24;
    int embedding_dim = 16;
    double voxel_size = 0.2;
    double truncation = 0.1;
    bool with_depth = true;
};

inline AssembledBatch random_batch(const BatchSpec& spec, Rng& rng) {
    AssembledBatch batch;
    batch.voxel_size = spec.voxel_size;
    batch.rays_requested = spec.rays;
    batch.embeddings = Eigen::MatrixXd::Zero(spec.embedding_dim, spec.vertices);
    for (Eigen::Index c = 0; c < batch.embeddings.cols(); ++c) {
        for (Eigen::Index r = 0; r < batch.embeddings.rows(); ++r) {
            batch.embeddings(r, c) = 0.3 * rng.normal();
        }
    }
    batch.vertex_keys.resize(spec.vertices);
    for (int i = 0; i < spec.vertices; ++i) {
        batch.vertex_keys[i] = static_cast<uint64_t>(i);
    }

    std::vector<Vec3> points;
    for (int r = 0; r < spec.rays; ++r) {
        RayBatchInfo info;
        info.begin = static_cast<int>(batch.depths.size());
        info.gt_color = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
        const int n = 1 + static_cast<int>(rng.uniform_index(spec.max_samples_per_ray));
        double t = rng.uniform(0.5, 1.0);
        const double gt_depth = spec.with_depth ? t + rng.uniform(0, 0.25) : 0.0;
        if (spec.with_depth) {
            info.gt_depth = gt_depth;
        }
        for (int j = 0; j < n; ++j) {
            t += rng.uniform(0.01, 0.08);
            SampleClass cls = SampleClass::kUnclassified;
            if (spec.with_depth) {
                cls = classify_sample(t, gt_depth, spec.truncation);
                if (cls == SampleClass::kBehind) {
                    continue;
                }
            }
            const Vec3 cell_min(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
            const Vec3 p = cell_min + Vec3(rng.uniform(0.02, 0.98), rng.uniform(0.02, 0.98),
                                           rng.uniform(0.02, 0.98)) *
                                          spec.voxel_size;
            std::array<int32_t, 8> corners;
            for (auto& c : corners) {
                c = static_cast<int32_t>(rng.uniform_index(spec.vertices));
            }
            batch.corners.push_back(corners);
            batch.cell_min.push_back(cell_min);
            batch.depths.push_back(t);
            points.push_back(p);
            info.classes.push_back(cls);
        }
        info.count = static_cast<int>(batch.depths.size()) - info.begin;
        if (info.count > 0) {
            batch.rays.push_back(std::move(info));
            ++batch.rays_with_hits;
        }
    }
    batch.q.resize(3, static_cast<Eigen::Index>(points.size()));
    for (size_t j = 0; j < points.size(); ++j) {
        batch.q.col(static_cast<Eigen::Index>(j)) = points[j];
    }
    batch.denom = count_denominators(batch.rays);
    return batch;
}

struct FdReport {
    double max_rel_error = 0;
    int checked = 0;
};

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Central finite differences against the reverse-mode gradients of the full
// pipeline, on a sampled subset of coordinates.
inline FdReport fd_check(const DecoderParams& params, const AssembledBatch& batch,
                         const RenderConfig& rcfg, int theta_probes, int emb_probes, Rng& rng,
                         double h = 1e-6) {
    GradRequest full;
    full.theta = true;
    full.embeddings = true;
    full.pose = true;
    const RenderEval eval = evaluate_batch(params, batch, rcfg, Twist(), full);
    REQUIRE(eval.valid);

    GradRequest fwd;
    fwd.backward = false;
    auto loss_at = [&](const DecoderParams& p, const AssembledBatch& b, const Twist& xi) {
        return evaluate_batch(p, b, rcfg, xi, fwd).total;
    };

    FdReport rep;
    auto track = [&](double analytic, double fd) {
        rep.max_rel_error = std::max(rep.max_rel_error, rel_err(analytic, fd));
        ++rep.checked;
    };

    for (int i = 0; i < theta_probes; ++i) {
        const auto k = static_cast<Eigen::Index>(rng.uniform_index(params.theta.size()));
        DecoderParams p = params;
        p.theta[k] += h;
        const double up = loss_at(p, batch, Twist());
        p.theta[k] -= 2 * h;
        const double dn = loss_at(p, batch, Twist());
        track(eval.theta_grad[k], (up - dn) / (2 * h));
    }
    for (int i = 0; i < emb_probes; ++i) {
        const auto c = static_cast<Eigen::Index>(rng.uniform_index(batch.embeddings.cols()));
        const auto r = static_cast<Eigen::Index>(rng.uniform_index(batch.embeddings.rows()));
        AssembledBatch b = batch;
        b.embeddings(r, c) += h;
        const double up = loss_at(params, b, Twist());
        b.embeddings(r, c) -= 2 * h;
        const double dn = loss_at(params, b, Twist());
        track(eval.embedding_grad(r, c), (up - dn) / (2 * h));
    }
    for (int k = 0; k < 6; ++k) {
        Vec6 e = Vec6::Zero();
        e[k] = h;
        const double up = loss_at(params, batch, Twist::from_vec(e));
        const double dn = loss_at(params, batch, Twist::from_vec(-e));
        track(eval.xi_grad[k], (up - dn) / (2 * h));
    }
    return rep;
}

} // namespace voxslam::testutil
