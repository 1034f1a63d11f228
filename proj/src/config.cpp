#include "voxslam/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace voxslam {

namespace {

using nlohmann::json;

// Strict object reader: every key must be consumed exactly once.
class ObjectReader {
  public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError("config: " + path_ + " must be an object");
        }
    }
    ~ObjectReader() = default;

    template <typename T> void field(const char* key, T& out) {
        auto it = j_.find(key);
        if (it == j_.end()) {
            seen_.insert(key);
            return;
        }
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config: bad value for " + path_ + "." + key);
        }
        seen_.insert(key);
    }

    const json* object(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.contains(it.key())) {
                throw ConfigError("config: unknown key " + path_ + "." + it.key());
            }
        }
    }

  private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

} // namespace

const char* to_string(RunMode mode) {
    return mode == RunMode::kSingleThreaded ? "single-threaded" : "concurrent";
}

RunMode parse_run_mode(const std::string& s) {
    if (s == "single-threaded") {
        return RunMode::kSingleThreaded;
    }
    if (s == "concurrent") {
        return RunMode::kConcurrent;
    }
    throw ConfigError("config: mode must be 'single-threaded' or 'concurrent', got '" + s + "'");
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("config: cannot open " + path.string());
    }
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config: parse error in " + path.string() + ": " + e.what());
    }

    RunConfig cfg;
    ObjectReader root(j, "");
    root.field("seed", cfg.seed);
    std::string mode = to_string(cfg.mode);
    root.field("mode", mode);
    cfg.mode = parse_run_mode(mode);
    root.field("use_gt_poses", cfg.use_gt_poses);
    root.field("queue_capacity", cfg.queue_capacity);

    if (const json* m = root.object("map")) {
        ObjectReader r(*m, "map");
        r.field("voxel_size", cfg.map.voxel_size);
        r.field("max_depth", cfg.map.max_depth);
        r.field("embedding_dim", cfg.map.embedding_dim);
        r.field("init_sigma", cfg.map.init_sigma);
        r.field("origin_offset", cfg.map.origin_offset);
        r.finish();
    }
    if (const json* m = root.object("decoder")) {
        ObjectReader r(*m, "decoder");
        r.field("hidden", cfg.decoder_hidden);
        r.field("trunk_layers", cfg.decoder_trunk_layers);
        r.field("skip_at", cfg.decoder_skip_at);
        r.field("sdf_hidden", cfg.decoder_sdf_hidden);
        r.field("color_hidden", cfg.decoder_color_hidden);
        r.finish();
    }
    if (const json* m = root.object("sampler")) {
        ObjectReader r(*m, "sampler");
        r.field("d_max", cfg.sampler.d_max);
        r.field("step_ratio", cfg.sampler.step_ratio);
        r.field("max_samples", cfg.sampler.max_samples);
        r.finish();
    }
    if (const json* m = root.object("render")) {
        ObjectReader r(*m, "render");
        r.field("truncation", cfg.render.truncation);
        r.field("eps_norm", cfg.render.eps_norm);
        r.field("lambda_rgb", cfg.render.lambda_rgb);
        r.field("lambda_depth", cfg.render.lambda_depth);
        r.field("lambda_fs", cfg.render.lambda_fs);
        r.field("lambda_sdf", cfg.render.lambda_sdf);
        r.finish();
    }
    if (const json* m = root.object("tracker")) {
        ObjectReader r(*m, "tracker");
        r.field("pixels", cfg.tracker.num_pixels);
        r.field("iterations", cfg.tracker.iterations);
        r.field("pose_lr", cfg.tracker.pose_lr);
        r.field("convergence_xi", cfg.tracker.convergence_xi);
        r.field("min_hit_fraction", cfg.tracker.min_hit_fraction);
        r.finish();
    }
    if (const json* m = root.object("mapper")) {
        ObjectReader r(*m, "mapper");
        r.field("kf_ratio_threshold", cfg.mapper.kf_ratio_threshold);
        r.field("kf_max_interval", cfg.mapper.kf_max_interval);
        r.field("window_keyframes", cfg.mapper.window_keyframes);
        r.field("rays_per_frame", cfg.mapper.rays_per_frame);
        r.field("iterations", cfg.mapper.iterations);
        r.field("bootstrap_iterations", cfg.mapper.bootstrap_iterations);
        r.field("theta_lr", cfg.mapper.theta_lr);
        r.field("embedding_lr", cfg.mapper.embedding_lr);
        r.field("pose_lr", cfg.mapper.pose_lr);
        r.field("holdout_per_frame", cfg.mapper.holdout_per_frame);
        r.finish();
    }
    root.finish();
    return cfg;
}

} // namespace voxslam
