#include "voxslam/pipeline.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <sstream>
#include <thread>

namespace voxslam {

std::string format_log_record(const FrameLogRecord& rec) {
    std::ostringstream os;
    os.precision(17);
    Eigen::Quaterniond q(rec.pose.rotation());
    q.normalize();
    const Vec3& t = rec.pose.translation();
    os << "frame=" << rec.frame << " kf=" << (rec.keyframe ? 1 : 0) << " voxels=" << rec.voxels
       << " nc=" << rec.nc << " no=" << rec.no << " ratio=" << rec.kf_ratio
       << " track_loss=" << rec.track_loss << " track_iters=" << rec.track_iters
       << " lost=" << (rec.tracking_lost ? 1 : 0) << " map_first=" << rec.map_loss_first
       << " map_last=" << rec.map_loss_last << " tx=" << t.x() << " ty=" << t.y()
       << " tz=" << t.z() << " qx=" << q.x() << " qy=" << q.y() << " qz=" << q.z()
       << " qw=" << q.w();
    return os.str();
}

FrameLogRecord parse_log_record(const std::string& line) {
    std::istringstream is(line);
    std::string token;
    FrameLogRecord rec;
    double tx = 0, ty = 0, tz = 0, qx = 0, qy = 0, qz = 0, qw = 1;
    while (is >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) {
            throw Error("log record: malformed token '" + token + "'");
        }
        const std::string key = token.substr(0, eq);
        const std::string val = token.substr(eq + 1);
        const double x = std::stod(val);
        if (key == "frame") {
            rec.frame = static_cast<int>(x);
        } else if (key == "kf") {
            rec.keyframe = x != 0;
        } else if (key == "voxels") {
            rec.voxels = static_cast<uint64_t>(x);
        } else if (key == "nc") {
            rec.nc = static_cast<int64_t>(x);
        } else if (key == "no") {
            rec.no = static_cast<int64_t>(x);
        } else if (key == "ratio") {
            rec.kf_ratio = x;
        } else if (key == "track_loss") {
            rec.track_loss = x;
        } else if (key == "track_iters") {
            rec.track_iters = static_cast<int>(x);
        } else if (key == "lost") {
            rec.tracking_lost = x != 0;
        } else if (key == "map_first") {
            rec.map_loss_first = x;
        } else if (key == "map_last") {
            rec.map_loss_last = x;
        } else if (key == "tx") {
            tx = x;
        } else if (key == "ty") {
            ty = x;
        } else if (key == "tz") {
            tz = x;
        } else if (key == "qx") {
            qx = x;
        } else if (key == "qy") {
            qy = x;
        } else if (key == "qz") {
            qz = x;
        } else if (key == "qw") {
            qw = x;
        } else {
            throw Error("log record: unknown key '" + key + "'");
        }
    }
    Eigen::Quaterniond q(qw, qx, qy, qz);
    q.normalize();
    rec.pose = Transform(q.toRotationMatrix(), Vec3(tx, ty, tz));
    return rec;
}

LossValues evaluate_frame_loss(const VoxelMap& map, const DecoderParams& decoder,
                               const Frame& frame, const Transform& pose,
                               std::span<const Eigen::Vector2i> pixels, const SamplerConfig& scfg,
                               const RenderConfig& rcfg, uint64_t seed) {
    Rng rng(mix_seed(seed, 0x6576616cull));
    const AssembledBatch batch = assemble_batch(map, frame, pose, pixels, scfg, rcfg, rng);
    GradRequest req;
    req.backward = false;
    const RenderEval eval = evaluate_batch(decoder, batch, rcfg, Twist(), req);
    if (!eval.valid) {
        throw EmptyBatchError("evaluate_frame_loss: no valid rays");
    }
    LossValues out;
    out.rgb = eval.terms.rgb;
    out.depth = eval.terms.depth;
    out.fs = eval.terms.fs;
    out.sdf = eval.terms.sdf;
    out.total = eval.total;
    return out;
}

namespace {

// Bounded single-producer single-consumer frame queue; push blocks at
// capacity (the tracker waits for the mapper).
class FrameQueue {
  public:
    explicit FrameQueue(size_t capacity) : capacity_(capacity) {}

    void push(std::pair<int, Transform> item) {
        std::unique_lock lock(mu_);
        not_full_.wait(lock, [&] { return items_.size() < capacity_; });
        items_.push_back(std::move(item));
        not_empty_.notify_one();
    }

    bool pop(std::pair<int, Transform>& out) {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
        if (items_.empty()) {
            return false;
        }
        out = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return true;
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        not_empty_.notify_all();
    }

  private:
    std::mutex mu_;
    std::condition_variable not_full_, not_empty_;
    std::deque<std::pair<int, Transform>> items_;
    size_t capacity_;
    bool closed_ = false;
};

// Latest-snapshot slot with atomic replacement semantics.
class SnapshotSlot {
  public:
    void store(std::shared_ptr<const MapSnapshot> snap) {
        std::lock_guard lock(mu_);
        snap_ = std::move(snap);
    }
    std::shared_ptr<const MapSnapshot> load() const {
        std::lock_guard lock(mu_);
        return snap_;
    }

  private:
    mutable std::mutex mu_;
    std::shared_ptr<const MapSnapshot> snap_;
};

struct FrameWork {
    FrameLogRecord log;
};

} // namespace

SlamOutput run_slam(const Dataset& dataset, const RunConfig& cfg, Profiler* prof) {
    if (dataset.frames.empty()) {
        throw DatasetError("run_slam: dataset has no frames");
    }
    SlamOutput out;
    out.mapper = std::make_shared<Mapper>(cfg.map, cfg.decoder_layout(), cfg.mapper, cfg.render,
                                          cfg.sampler, cfg.seed, prof);
    Mapper& mapper = *out.mapper;
    out.logs.resize(dataset.frames.size());

    // Frame 0 anchors the gauge at the dataset's first ground-truth pose.
    const Transform pose0 = dataset.gt.poses.at(0);
    auto integ0 = mapper.integrate_frame(dataset.frames[0], pose0);
    auto boot = mapper.bootstrap();
    {
        FrameLogRecord& rec = out.logs[0];
        rec.frame = 0;
        rec.keyframe = integ0.keyframe_inserted;
        rec.voxels = mapper.map().voxel_count();
        rec.nc = integ0.hits.novel;
        rec.no = integ0.hits.observed;
        rec.kf_ratio = integ0.kf_ratio;
        rec.map_loss_first = boot.first_total;
        rec.map_loss_last = boot.last_total;
        rec.pose = pose0;
    }
    SnapshotSlot slot;
    slot.store(mapper.publish_snapshot());
    std::atomic<uint64_t> checksum_failures{0};

    auto verify_snapshot = [&](const MapSnapshot& snap) {
        if (snap.compute_checksum() != snap.checksum) {
            ++checksum_failures;
        }
    };

    auto track_one = [&](int i, const Transform& prev_pose,
                         const MapSnapshot& snap) -> std::pair<TrackResult, bool> {
        auto t = Profiler::scope(prof, "tracking");
        Rng rng(mix_seed(mix_seed(cfg.seed, 0x747261636bull), static_cast<uint64_t>(i)));
        try {
            TrackResult tr = track_frame(dataset.frames[i], prev_pose, snap, cfg.tracker,
                                         cfg.render, cfg.sampler, rng, prof);
            return {tr, false};
        } catch (const DegenerateFrameError&) {
            TrackResult tr;
            tr.pose = prev_pose; // tracking lost: keep the previous pose
            return {tr, true};
        }
    };

    auto map_one = [&](int i, const Transform& tracked_pose) {
        auto t = Profiler::scope(prof, "mapping");
        FrameLogRecord& rec = out.logs[i];
        auto integ = mapper.integrate_frame(dataset.frames[i], tracked_pose);
        auto opt = mapper.optimize_current(cfg.mapper.iterations);
        rec.frame = i;
        rec.keyframe = integ.keyframe_inserted;
        rec.voxels = mapper.map().voxel_count();
        rec.nc = integ.hits.novel;
        rec.no = integ.hits.observed;
        rec.kf_ratio = integ.kf_ratio;
        rec.map_loss_first = opt.first_total;
        rec.map_loss_last = opt.last_total;
        rec.pose = opt.refined_pose;
        return opt.refined_pose;
    };

    const int n = static_cast<int>(dataset.frames.size());
    if (cfg.use_gt_poses) {
        for (int i = 1; i < n; ++i) {
            map_one(i, dataset.gt.poses.at(i));
            slot.store(mapper.publish_snapshot());
        }
    } else if (cfg.mode == RunMode::kSingleThreaded) {
        Transform prev_pose = pose0;
        for (int i = 1; i < n; ++i) {
            auto snap = slot.load();
            verify_snapshot(*snap);
            auto [tr, lost] = track_one(i, prev_pose, *snap);
            out.logs[i].track_loss = tr.final_loss;
            out.logs[i].track_iters = tr.iterations;
            out.logs[i].tracking_lost = lost;
            const Transform refined = map_one(i, tr.pose);
            slot.store(mapper.publish_snapshot());
            prev_pose = refined;
        }
    } else {
        FrameQueue queue(static_cast<size_t>(cfg.queue_capacity));
        std::thread tracker_thread([&] {
            Transform prev_pose = pose0;
            for (int i = 1; i < n; ++i) {
                auto snap = slot.load();
                verify_snapshot(*snap);
                auto [tr, lost] = track_one(i, prev_pose, *snap);
                out.logs[i].track_loss = tr.final_loss;
                out.logs[i].track_iters = tr.iterations;
                out.logs[i].tracking_lost = lost;
                prev_pose = tr.pose;
                queue.push({i, tr.pose});
            }
            queue.close();
        });
        std::thread mapper_thread([&] {
            std::pair<int, Transform> item;
            while (queue.pop(item)) {
                map_one(item.first, item.second);
                slot.store(mapper.publish_snapshot());
            }
        });
        tracker_thread.join();
        mapper_thread.join();
    }

    for (int i = 0; i < n; ++i) {
        out.trajectory.push_back(dataset.frames[i].timestamp, out.logs[i].pose);
    }
    out.snapshot_checksum_failures = checksum_failures.load();
    return out;
}

} // namespace voxslam
