#include "voxslam/mapper.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

namespace voxslam {

std::vector<Eigen::Vector2i> holdout_pixels(const Intrinsics& K, uint64_t seed, int frame_index,
                                            int count) {
    std::vector<int> order(static_cast<size_t>(K.width) * K.height);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(mix_seed(seed, 0x686f6c64ull), static_cast<uint64_t>(frame_index)));
    const int n = static_cast<int>(order.size());
    count = std::min(count, n);
    for (int i = 0; i < count; ++i) {
        const int j = i + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(n - i)));
        std::swap(order[i], order[j]);
    }
    std::vector<Eigen::Vector2i> out(count);
    for (int i = 0; i < count; ++i) {
        out[i] = Eigen::Vector2i(order[i] % K.width, order[i] / K.width);
    }
    return out;
}

Mapper::Mapper(const VoxelMapConfig& map_cfg, const DecoderLayout& layout,
               const MapperConfig& cfg, const RenderConfig& rcfg, const SamplerConfig& scfg,
               uint64_t seed, Profiler* prof)
    : map_cfg_(map_cfg), cfg_(cfg), rcfg_(rcfg), scfg_(scfg), seed_(seed), prof_(prof),
      map_(map_cfg), decoder_(init_params(mix_seed(seed, 0x646563ull), layout)),
      theta_adam_(layout.param_count), rng_(mix_seed(seed, 0x6d617070ull)),
      select_rng_(mix_seed(seed, 0x77696e64ull)) {}

bool Mapper::should_insert_keyframe(int64_t n_c, int64_t n_o, int frames_since_last_kf,
                                    const MapperConfig& cfg, double* ratio_out) {
    double ratio;
    if (n_o == 0) {
        ratio = n_c > 0 ? std::numeric_limits<double>::infinity() : 0.0;
    } else {
        ratio = static_cast<double>(n_c) / static_cast<double>(n_o);
    }
    if (ratio_out != nullptr) {
        *ratio_out = ratio;
    }
    if (n_o == 0) {
        return true;
    }
    if (ratio > cfg.kf_ratio_threshold) {
        return true;
    }
    return frames_since_last_kf >= cfg.kf_max_interval;
}

const Transform& Mapper::current_pose() const {
    if (!current_) {
        throw Error("mapper: no current frame");
    }
    return current_->pose;
}

Mapper::IntegrationResult Mapper::integrate_frame(const Frame& frame, const Transform& pose) {
    IntegrationResult res;
    const Intrinsics& K = frame.intrinsics;
    std::vector<Vec3> points;
    points.reserve(static_cast<size_t>(K.width) * K.height);
    for (int v = 0; v < K.height; ++v) {
        for (int u = 0; u < K.width; ++u) {
            const float d = frame.image.depth_at(u, v);
            if (d > 0.f && std::isfinite(d)) {
                points.push_back(pose.apply(backproject(u, v, d, K)));
            }
        }
    }
    res.hits = map_.count_voxel_hits(points);
    const bool insert = should_insert_keyframe(res.hits.novel, res.hits.observed,
                                               frames_since_last_kf_ + 1, cfg_, &res.kf_ratio);
    {
        auto t = Profiler::scope(prof_, "voxel_allocation");
        AllocationResult alloc = map_.allocate_from_points(points);
        res.new_voxels = alloc.newly_allocated.size();
        res.dropped_points = alloc.out_of_range_points;
    }

    CurrentFrame cur;
    cur.frame = frame;
    cur.pose = pose;
    cur.is_keyframe = insert;
    if (insert) {
        Keyframe kf;
        kf.frame = frame;
        kf.pose = pose;
        kf.insertion_index = static_cast<int>(keyframes_.size());
        std::unordered_set<MortonCode> codes;
        for (const Vec3& p : points) {
            if (auto c = map_.try_code_of(map_.voxel_of(p))) {
                codes.insert(*c);
            }
        }
        kf.observed_codes.assign(codes.begin(), codes.end());
        std::sort(kf.observed_codes.begin(), kf.observed_codes.end());
        cur.kf_index = kf.insertion_index;
        keyframes_.push_back(std::move(kf));
        keyframe_pose_adam_.emplace_back(6);
        frames_since_last_kf_ = 0;
    } else {
        ++frames_since_last_kf_;
    }
    current_ = std::move(cur);
    current_pose_adam_ = AdamState(6);
    res.keyframe_inserted = insert;
    return res;
}

const std::vector<uint8_t>& Mapper::holdout_mask(const Frame& frame) {
    auto it = holdout_masks_.find(frame.index);
    if (it != holdout_masks_.end()) {
        return it->second;
    }
    const Intrinsics& K = frame.intrinsics;
    std::vector<uint8_t> mask(static_cast<size_t>(K.width) * K.height, 0);
    if (cfg_.holdout_per_frame > 0) {
        for (const auto& px : holdout_pixels(K, seed_, frame.index, cfg_.holdout_per_frame)) {
            mask[static_cast<size_t>(px.y()) * K.width + px.x()] = 1;
        }
    }
    return holdout_masks_.emplace(frame.index, std::move(mask)).first->second;
}

std::vector<Eigen::Vector2i> Mapper::sample_pixels(const Frame& frame, int count) {
    const Intrinsics& K = frame.intrinsics;
    const std::vector<uint8_t>& mask = holdout_mask(frame);
    std::vector<Eigen::Vector2i> pixels;
    pixels.reserve(count);
    while (static_cast<int>(pixels.size()) < count) {
        const int u = static_cast<int>(rng_.uniform_index(K.width));
        const int v = static_cast<int>(rng_.uniform_index(K.height));
        if (mask[static_cast<size_t>(v) * K.width + u] != 0) {
            continue;
        }
        pixels.emplace_back(u, v);
    }
    return pixels;
}

std::vector<int> Mapper::select_window_indices(Rng& rng) const {
    std::vector<int> pool;
    pool.reserve(keyframes_.size());
    const int current_kf = current_ && current_->is_keyframe ? current_->kf_index : -1;
    for (int i = 0; i < static_cast<int>(keyframes_.size()); ++i) {
        if (i != current_kf) {
            pool.push_back(i);
        }
    }
    const int take = std::min<int>(cfg_.window_keyframes, static_cast<int>(pool.size()));
    for (int i = 0; i < take; ++i) {
        const int j =
            i + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(pool.size() - i)));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(take);
    std::sort(pool.begin(), pool.end());
    return pool;
}

Mapper::OptimizeResult Mapper::bootstrap() {
    if (!current_) {
        throw Error("mapper: no current frame to bootstrap from");
    }
    std::vector<WindowFrame> window;
    window.push_back(WindowFrame{&current_->frame, &current_->pose, nullptr});
    OptimizeResult r = run_window(window, cfg_.bootstrap_iterations);
    if (current_->is_keyframe) {
        keyframes_[current_->kf_index].pose = current_->pose;
    }
    return r;
}

Mapper::OptimizeResult Mapper::optimize_current(int iterations) {
    if (!current_) {
        throw Error("mapper: no current frame to optimize");
    }
    std::vector<WindowFrame> window;
    for (int idx : select_window_indices(select_rng_)) {
        Keyframe& kf = keyframes_[idx];
        // The first keyframe is the gauge and never moves.
        const bool optimizable = idx != 0;
        window.push_back(WindowFrame{&kf.frame, &kf.pose,
                                     optimizable ? &keyframe_pose_adam_[idx] : nullptr});
    }
    if (current_->is_keyframe) {
        Keyframe& kf = keyframes_[current_->kf_index];
        const bool optimizable = current_->kf_index != 0;
        window.push_back(WindowFrame{&kf.frame, &kf.pose,
                                     optimizable ? &keyframe_pose_adam_[current_->kf_index]
                                                 : nullptr});
    } else {
        window.push_back(WindowFrame{&current_->frame, &current_->pose, &current_pose_adam_});
    }
    OptimizeResult r = run_window(window, iterations);
    if (current_->is_keyframe) {
        current_->pose = keyframes_[current_->kf_index].pose;
    }
    r.refined_pose = current_->pose;
    return r;
}

Mapper::OptimizeResult Mapper::run_window(const std::vector<WindowFrame>& window,
                                          int iterations) {
    OptimizeResult res;
    if (window.empty()) {
        throw Error("mapper: empty optimization window");
    }
    const double frame_weight = 1.0 / static_cast<double>(window.size());
    const AdamConfig theta_cfg{cfg_.theta_lr};
    const AdamConfig emb_cfg{cfg_.embedding_lr};
    const AdamConfig pose_cfg{cfg_.pose_lr};

    for (int it = 0; it < iterations; ++it) {
        auto t_iter = Profiler::scope(prof_, "mapping_iteration");
        Eigen::VectorXd theta_grad = Eigen::VectorXd::Zero(decoder_.layout.param_count);
        std::unordered_map<uint64_t, Eigen::VectorXd> emb_grad;
        std::vector<Vec6> xi_grads(window.size(), Vec6::Zero());
        RenderLossTerms terms;
        double total = 0;
        bool finite = true;
        bool any_valid = false;

        for (size_t f = 0; f < window.size(); ++f) {
            const WindowFrame& wf = window[f];
            const auto pixels = sample_pixels(*wf.frame, cfg_.rays_per_frame);
            const AssembledBatch batch =
                assemble_batch(map_, *wf.frame, *wf.pose, pixels, scfg_, rcfg_, rng_, prof_);
            GradRequest req;
            req.theta = true;
            req.embeddings = true;
            req.pose = wf.adam != nullptr;
            const RenderEval eval =
                evaluate_batch(decoder_, batch, rcfg_, Twist(), req, 8192, prof_);
            if (!eval.valid) {
                continue; // frame contributed no valid rays this iteration
            }
            any_valid = true;
            terms.rgb += frame_weight * eval.terms.rgb;
            terms.depth += frame_weight * eval.terms.depth;
            terms.fs += frame_weight * eval.terms.fs;
            terms.sdf += frame_weight * eval.terms.sdf;
            total += frame_weight * eval.total;
            finite = finite && std::isfinite(eval.total) && eval.theta_grad.allFinite() &&
                     eval.embedding_grad.allFinite() &&
                     (!req.pose || eval.xi_grad.allFinite());
            if (!finite) {
                break;
            }
            theta_grad += frame_weight * eval.theta_grad;
            for (size_t c = 0; c < batch.vertex_keys.size(); ++c) {
                auto [slot, fresh] = emb_grad.try_emplace(batch.vertex_keys[c]);
                if (fresh) {
                    slot->second = Eigen::VectorXd::Zero(map_.embedding_dim());
                }
                slot->second += frame_weight * eval.embedding_grad.col(static_cast<Eigen::Index>(c));
            }
            if (req.pose) {
                xi_grads[f] = frame_weight * eval.xi_grad;
            }
        }

        if (!any_valid) {
            throw EmptyBatchError("mapper: no window frame produced valid rays");
        }
        if (it == 0) {
            res.first = terms;
            res.first_total = total;
        }
        res.last = terms;
        res.last_total = total;
        if (!finite) {
            // Abort the iteration: no state was mutated yet, so skipping the
            // update restores the pre-iteration state.
            ++res.aborted_iterations;
            continue;
        }

        theta_adam_.step(decoder_.theta, theta_grad, theta_cfg);
        std::vector<uint64_t> touched;
        touched.reserve(emb_grad.size());
        for (const auto& [key, _] : emb_grad) {
            touched.push_back(key);
        }
        std::sort(touched.begin(), touched.end());
        for (uint64_t key : touched) {
            auto [slot, fresh] = vertex_adam_.try_emplace(key, map_.embedding_dim());
            slot->second.step(map_.embedding_mut(unpack_vertex_key(key)), emb_grad.at(key),
                              emb_cfg);
        }
        for (size_t f = 0; f < window.size(); ++f) {
            if (window[f].adam == nullptr) {
                continue;
            }
            const Vec6 delta = window[f].adam->step_direction(xi_grads[f], pose_cfg);
            *window[f].pose = apply_increment(Twist::from_vec(delta), *window[f].pose);
        }
        ++res.applied_iterations;
    }
    if (current_) {
        res.refined_pose = current_->pose;
    }
    return res;
}

std::shared_ptr<const MapSnapshot> Mapper::publish_snapshot() {
    return std::make_shared<MapSnapshot>(map_, decoder_, ++snapshot_seq_);
}

} // namespace voxslam
