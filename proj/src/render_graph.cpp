#include "voxslam/render_graph.hpp"

#include <unordered_map>

namespace voxslam {

using Eigen::MatrixXd;

AssembledBatch assemble_batch(const VoxelMap& map, const Frame& frame, const Transform& pose,
                              std::span<const Eigen::Vector2i> pixels, const SamplerConfig& scfg,
                              const RenderConfig& rcfg, Rng& rng, Profiler* prof) {
    AssembledBatch batch;
    batch.voxel_size = map.voxel_size();
    batch.rays_requested = static_cast<int>(pixels.size());

    const std::vector<Ray> rays = generate_rays(frame, pose, pixels);
    const double step = scfg.step_ratio * map.voxel_size();

    std::vector<Vec3> points;
    std::vector<double> depths;
    std::unordered_map<uint64_t, int32_t> vertex_col;
    std::vector<uint64_t> keys;

    auto column_of = [&](const VertexKey& k) {
        const uint64_t packed = pack_vertex_key(k);
        auto [it, fresh] = vertex_col.try_emplace(packed, static_cast<int32_t>(keys.size()));
        if (fresh) {
            keys.push_back(packed);
        }
        return it->second;
    };

    for (const Ray& ray : rays) {
        HitSegments segs;
        {
            auto t = Profiler::scope(prof, "ray_voxel_intersection");
            segs = intersect(map, ray, scfg.d_max);
        }
        if (segs.empty()) {
            continue;
        }
        ++batch.rays_with_hits;
        RaySamples samples;
        {
            auto t = Profiler::scope(prof, "point_sampling");
            samples = sample_points(segs, ray, step, scfg.max_samples, rng);
        }
        RayBatchInfo info;
        info.begin = static_cast<int>(batch.depths.size());
        info.gt_color = ray.gt_color;
        info.gt_depth = ray.gt_depth;
        for (size_t j = 0; j < samples.depths.size(); ++j) {
            SampleClass cls = SampleClass::kUnclassified;
            if (ray.gt_depth) {
                cls = classify_sample(samples.depths[j], *ray.gt_depth, rcfg.truncation);
                if (cls == SampleClass::kBehind) {
                    continue;
                }
            }
            const Vec3& p = samples.points[j];
            const Eigen::Vector3i v = map.voxel_of(p);
            auto code = map.try_code_of(v);
            if (!code || !map.allocated(*code)) {
                // A sample can round onto a cell boundary and land in an
                // unallocated neighbor; such points are skipped.
                continue;
            }
            std::array<int32_t, 8> cols;
            const auto corner = map.corner_keys(v);
            for (int k = 0; k < 8; ++k) {
                cols[k] = column_of(corner[k]);
            }
            batch.corners.push_back(cols);
            batch.cell_min.push_back(v.cast<double>() * map.voxel_size());
            batch.depths.push_back(samples.depths[j]);
            points.push_back(p);
            info.classes.push_back(cls);
        }
        info.count = static_cast<int>(batch.depths.size()) - info.begin;
        if (info.count > 0) {
            batch.rays.push_back(std::move(info));
        }
    }

    batch.q.resize(3, static_cast<Eigen::Index>(points.size()));
    for (size_t j = 0; j < points.size(); ++j) {
        batch.q.col(static_cast<Eigen::Index>(j)) = points[j];
    }
    batch.vertex_keys = std::move(keys);
    batch.embeddings.resize(map.embedding_dim(), static_cast<Eigen::Index>(batch.vertex_keys.size()));
    for (size_t c = 0; c < batch.vertex_keys.size(); ++c) {
        batch.embeddings.col(static_cast<Eigen::Index>(c)) =
            map.vertex_store().at(batch.vertex_keys[c]);
    }
    batch.denom = count_denominators(batch.rays);
    return batch;
}

RenderEval evaluate_batch(const DecoderParams& params, const AssembledBatch& batch,
                          const RenderConfig& cfg, const Twist& xi, const GradRequest& req,
                          int chunk_samples, Profiler* prof) {
    RenderEval out;
    if (batch.denom.valid == 0) {
        return out; // caller decides whether this is an error
    }
    out.valid = true;
    if (req.backward && req.theta) {
        out.theta_grad = Eigen::VectorXd::Zero(params.layout.param_count);
    }
    if (req.backward && req.embeddings) {
        out.embedding_grad = MatrixXd::Zero(batch.embeddings.rows(), batch.embeddings.cols());
    }

    double* theta_grad = (req.backward && req.theta) ? out.theta_grad.data() : nullptr;
    Vec6* xi_grad = (req.backward && req.pose) ? &out.xi_grad : nullptr;

    size_t ray_lo = 0;
    while (ray_lo < batch.rays.size()) {
        // Grow the chunk ray-by-ray up to the sample budget.
        size_t ray_hi = ray_lo;
        int64_t s0 = batch.rays[ray_lo].begin;
        int64_t s1 = s0;
        while (ray_hi < batch.rays.size()) {
            const RayBatchInfo& r = batch.rays[ray_hi];
            const int64_t end = r.begin + r.count;
            if (end - s0 > chunk_samples && ray_hi > ray_lo) {
                break;
            }
            s1 = end;
            ++ray_hi;
        }
        const int64_t len = s1 - s0;

        std::vector<RayBatchInfo> local_rays(batch.rays.begin() + ray_lo,
                                             batch.rays.begin() + ray_hi);
        for (RayBatchInfo& r : local_rays) {
            r.begin -= static_cast<int>(s0);
        }
        std::span<const double> local_depths(batch.depths.data() + s0, len);
        std::span<const std::array<int32_t, 8>> local_corners(batch.corners.data() + s0, len);
        std::span<const Vec3> local_cellmin(batch.cell_min.data() + s0, len);

        Tape tape;
        Tape::NodeId e_node = (req.backward && req.embeddings) ? tape.var(batch.embeddings)
                                                               : tape.constant(batch.embeddings);
        Tape::NodeId p_node = tape.se3_points(batch.q.middleCols(s0, len), xi, xi_grad);
        Tape::NodeId x_node =
            tape.trilerp(p_node, e_node, local_corners, local_cellmin, batch.voxel_size);
        Tape::NodeId rgb_node, sdf_node;
        {
            auto t = Profiler::scope(prof, "volume_rendering");
            std::tie(rgb_node, sdf_node) = decode_on_tape(tape, params, x_node, theta_grad);
        }
        Tape::NodeId loss_node =
            tape.render_loss(rgb_node, sdf_node, local_depths, local_rays, cfg, batch.denom);

        const RenderLossTerms terms = tape.loss_terms(loss_node);
        out.terms.rgb += terms.rgb;
        out.terms.depth += terms.depth;
        out.terms.fs += terms.fs;
        out.terms.sdf += terms.sdf;

        if (req.backward) {
            auto t = Profiler::scope(prof, "back_propagation");
            tape.backward(loss_node);
            if (req.embeddings) {
                out.embedding_grad += tape.grad(e_node);
            }
        }
        out.forward_ops += tape.forward_ops();
        out.backward_ops += tape.backward_ops();
        ray_lo = ray_hi;
    }
    out.total = out.terms.total(cfg);
    return out;
}

} // namespace voxslam
