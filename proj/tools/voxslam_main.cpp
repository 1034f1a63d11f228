#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "voxslam/checkpoint.hpp"
#include "voxslam/evalkit.hpp"
#include "voxslam/pipeline.hpp"

namespace fs = std::filesystem;
using namespace voxslam;

namespace {

SceneSpec scene_by_name(const std::string& name) {
    if (name == "box-room") {
        return SceneSpec::box_room();
    }
    if (name == "single-wall") {
        return SceneSpec::single_wall();
    }
    throw ConfigError("unknown scene '" + name + "' (available: box-room, single-wall)");
}

int cmd_simulate(const std::string& scene_name, const std::string& traj_name, int frames,
                 const std::string& out_dir, double noise, uint64_t seed) {
    const SceneSpec scene = scene_by_name(scene_name);
    TrajectorySpec traj;
    if (traj_name == "orbit") {
        traj = TrajectorySpec::box_room_orbit(frames);
    } else if (traj_name == "jump") {
        traj = TrajectorySpec::box_room_jump(frames);
    } else {
        throw ConfigError("unknown trajectory '" + traj_name + "' (available: orbit, jump)");
    }
    const Dataset ds = simulate_dataset(scene, traj, box_room_camera(), noise, seed);
    write_dataset(ds, out_dir);
    std::cout << "frames=" << ds.frames.size() << " dir=" << out_dir << "\n";
    return 0;
}

int cmd_slam(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir,
             bool profile_table) {
    const Dataset ds = load_dataset(data_dir);
    fs::create_directories(out_dir);
    Profiler prof;
    const SlamOutput result = run_slam(ds, cfg, &prof);
    write_trajectory(fs::path(out_dir) / "traj_est.txt", result.trajectory);
    save_checkpoint(fs::path(out_dir) / "map.vxfm", result.mapper->map(),
                    result.mapper->decoder());
    {
        std::ofstream log(fs::path(out_dir) / "slam_log.txt");
        for (const FrameLogRecord& rec : result.logs) {
            log << format_log_record(rec) << '\n';
        }
    }
    size_t keyframes = result.mapper->keyframes().size();
    std::cout << "frames=" << ds.frames.size() << " keyframes=" << keyframes
              << " voxels=" << result.mapper->map().voxel_count()
              << " vertices=" << result.mapper->map().vertex_count()
              << " checksum_failures=" << result.snapshot_checksum_failures << "\n";
    if (profile_table) {
        static const char* rows[] = {"tracking_iteration", "mapping_iteration",
                                     "voxel_allocation",   "ray_voxel_intersection",
                                     "point_sampling",     "volume_rendering",
                                     "back_propagation"};
        std::cout << "component median_ms\n";
        for (const char* row : rows) {
            std::cout << row << ' ' << prof.median(row) << '\n';
        }
    }
    return 0;
}

int cmd_mesh(const std::string& checkpoint_path, const std::string& out_path, int resolution,
             double outside_sdf) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const TriangleMesh mesh = extract_mesh(ck.map, ck.decoder, resolution, outside_sdf);
    write_obj(out_path, mesh);
    std::cout << "vertices=" << mesh.vertices.size() << " triangles=" << mesh.triangles.size()
              << " area=" << mesh.area() << "\n";
    return 0;
}

int cmd_eval(const std::string& est_path, const std::string& gt_path, const std::string& scene_name,
             const std::string& checkpoint_path, double threshold, double density, uint64_t seed,
             double band) {
    const Trajectory est = read_trajectory(est_path);
    const Trajectory gt = read_trajectory(gt_path);
    const AteResult aligned = ate(est, gt, true);
    const AteResult raw = ate(est, gt, false);
    std::cout << "ate_rmse_aligned=" << aligned.rmse << "\n"
              << "ate_mean_aligned=" << aligned.mean << "\n"
              << "ate_median_aligned=" << aligned.median << "\n"
              << "ate_rmse_raw=" << raw.rmse << "\n"
              << "ate_mean_raw=" << raw.mean << "\n"
              << "ate_median_raw=" << raw.median << "\n";
    if (!scene_name.empty() && !checkpoint_path.empty()) {
        const SceneSpec scene = scene_by_name(scene_name);
        const Checkpoint ck = load_checkpoint(checkpoint_path);
        const TriangleMesh recon = extract_mesh(ck.map, ck.decoder, 4, band);
        const TriangleMesh truth =
            extract_mesh_analytic(scene, Vec3(-2.5, -2.5, -2.0), Vec3(2.5, 2.5, 2.0),
                                  ck.map.voxel_size() / 4.0);
        Rng rng(mix_seed(seed, 0x6d657368ull));
        const auto recon_pts = sample_mesh_points(recon, density, rng);
        const auto gt_pts = sample_mesh_points(truth, density, rng);
        const ChamferResult ch = chamfer_metrics(recon_pts, gt_pts, threshold);
        std::cout << "chamfer_accuracy=" << ch.accuracy << "\n"
                  << "chamfer_completion=" << ch.completion << "\n"
                  << "completion_ratio=" << ch.completion_ratio << "\n";
        Rng rng2(mix_seed(seed, 0x736466ull));
        const SdfFieldError fe = eval_sdf_field(ck.map, ck.decoder, scene, band, 2000, rng2);
        std::cout << "sdf_mae=" << fe.mae << "\n"
                  << "sdf_p90=" << fe.p90 << "\n"
                  << "sdf_samples=" << fe.samples << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse-voxel neural SDF SLAM: simulate, run, evaluate"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Render a synthetic RGB-D dataset");
    std::string sim_scene = "box-room", sim_traj = "orbit", sim_out;
    int sim_frames = 60;
    double sim_noise = 0.0;
    uint64_t sim_seed = 1;
    sim->add_option("--scene", sim_scene, "Scene name (box-room, single-wall)")
        ->capture_default_str();
    sim->add_option("--trajectory", sim_traj, "Trajectory (orbit, jump)")->capture_default_str();
    sim->add_option("--frames", sim_frames, "Frame count")->capture_default_str();
    sim->add_option("--out", sim_out, "Output dataset directory")->required();
    sim->add_option("--noise", sim_noise, "Gaussian depth noise sigma (meters)")
        ->capture_default_str();
    sim->add_option("--seed", sim_seed, "Noise seed")->capture_default_str();

    // slam
    auto* slam = app.add_subcommand("slam", "Track and map an RGB-D dataset");
    std::string slam_data, slam_out, slam_mode, slam_config;
    uint64_t slam_seed = 0;
    bool slam_gt_poses = false, slam_profile = false;
    int slam_holdout = -1, slam_tracker_iters = -1, slam_tracker_pixels = -1;
    int slam_mapper_rays = -1, slam_mapper_iters = -1, slam_bootstrap = -1;
    slam->add_option("--data", slam_data, "Dataset directory")->required();
    slam->add_option("--out", slam_out, "Output directory")->required();
    slam->add_option("--config", slam_config, "JSON config file (defaults when omitted)");
    slam->add_option("--mode", slam_mode, "single-threaded or concurrent (default single-threaded)");
    slam->add_option("--seed", slam_seed, "Run seed (default 1)");
    slam->add_flag("--use-gt-poses", slam_gt_poses,
                   "Disable tracking; map with ground-truth poses");
    slam->add_flag("--profile", slam_profile, "Print per-component timing medians");
    slam->add_option("--holdout", slam_holdout, "Holdout pixels per frame (default 0)");
    slam->add_option("--tracker-iterations", slam_tracker_iters, "Override tracker iterations");
    slam->add_option("--tracker-pixels", slam_tracker_pixels, "Override tracker pixel count");
    slam->add_option("--mapper-rays", slam_mapper_rays, "Override mapper rays per frame");
    slam->add_option("--mapper-iterations", slam_mapper_iters, "Override mapper iterations");
    slam->add_option("--bootstrap-iterations", slam_bootstrap, "Override bootstrap iterations");

    // mesh
    auto* mesh = app.add_subcommand("mesh", "Extract a triangle mesh from a checkpoint");
    std::string mesh_ckpt, mesh_out;
    int mesh_res = 4;
    double mesh_outside = 0.1;
    mesh->add_option("--checkpoint", mesh_ckpt, "Checkpoint file (map.vxfm)")->required();
    mesh->add_option("--out", mesh_out, "Output OBJ path")->required();
    mesh->add_option("--resolution", mesh_res, "SDF samples per voxel axis")
        ->capture_default_str();
    mesh->add_option("--outside-sdf", mesh_outside, "SDF assigned outside allocated voxels")
        ->capture_default_str();

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a trajectory (and optionally the map)");
    std::string ev_est, ev_gt, ev_scene, ev_ckpt;
    double ev_threshold = 0.05, ev_density = 10000.0, ev_band = 0.1;
    uint64_t ev_seed = 1;
    ev->add_option("--est", ev_est, "Estimated trajectory file")->required();
    ev->add_option("--gt", ev_gt, "Ground-truth trajectory file")->required();
    ev->add_option("--scene", ev_scene, "Analytic scene for mesh/SDF metrics");
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint for mesh/SDF metrics");
    ev->add_option("--threshold", ev_threshold, "Completion ratio threshold (m)")
        ->capture_default_str();
    ev->add_option("--density", ev_density, "Mesh sampling density (points per m^2)")
        ->capture_default_str();
    ev->add_option("--band", ev_band, "SDF evaluation band (m)")->capture_default_str();
    ev->add_option("--seed", ev_seed, "Sampling seed")->capture_default_str();

    // profile
    auto* prof_cmd = app.add_subcommand("profile", "Run a short sequence and print timings");
    std::string prof_data, prof_config;
    int prof_frames = 10;
    uint64_t prof_seed = 1;
    prof_cmd->add_option("--data", prof_data, "Dataset directory")->required();
    prof_cmd->add_option("--config", prof_config, "JSON config file");
    prof_cmd->add_option("--frames", prof_frames, "Frames to process")->capture_default_str();
    prof_cmd->add_option("--seed", prof_seed, "Run seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed()) {
            return cmd_simulate(sim_scene, sim_traj, sim_frames, sim_out, sim_noise, sim_seed);
        }
        if (slam->parsed()) {
            RunConfig cfg;
            if (!slam_config.empty()) {
                cfg = load_run_config(slam_config);
            }
            if (slam->count("--mode") > 0) {
                cfg.mode = parse_run_mode(slam_mode);
            }
            if (slam->count("--seed") > 0) {
                cfg.seed = slam_seed;
            }
            if (slam_gt_poses) {
                cfg.use_gt_poses = true;
            }
            if (slam_holdout >= 0) {
                cfg.mapper.holdout_per_frame = slam_holdout;
            }
            if (slam_tracker_iters > 0) {
                cfg.tracker.iterations = slam_tracker_iters;
            }
            if (slam_tracker_pixels > 0) {
                cfg.tracker.num_pixels = slam_tracker_pixels;
            }
            if (slam_mapper_rays > 0) {
                cfg.mapper.rays_per_frame = slam_mapper_rays;
            }
            if (slam_mapper_iters > 0) {
                cfg.mapper.iterations = slam_mapper_iters;
            }
            if (slam_bootstrap >= 0) {
                cfg.mapper.bootstrap_iterations = slam_bootstrap;
            }
            cfg.map.seed = cfg.seed;
            return cmd_slam(cfg, slam_data, slam_out, slam_profile);
        }
        if (mesh->parsed()) {
            return cmd_mesh(mesh_ckpt, mesh_out, mesh_res, mesh_outside);
        }
        if (ev->parsed()) {
            return cmd_eval(ev_est, ev_gt, ev_scene, ev_ckpt, ev_threshold, ev_density, ev_seed,
                            ev_band);
        }
        if (prof_cmd->parsed()) {
            RunConfig cfg;
            if (!prof_config.empty()) {
                cfg = load_run_config(prof_config);
            }
            cfg.seed = prof_seed;
            cfg.map.seed = cfg.seed;
            Dataset ds = load_dataset(prof_data);
            if (static_cast<int>(ds.frames.size()) > prof_frames) {
                ds.frames.resize(prof_frames);
                ds.gt.timestamps.resize(prof_frames);
                ds.gt.poses.resize(prof_frames);
            }
            Profiler prof;
            run_slam(ds, cfg, &prof);
            static const char* rows[] = {"tracking_iteration", "mapping_iteration",
                                         "voxel_allocation",   "ray_voxel_intersection",
                                         "point_sampling",     "volume_rendering",
                                         "back_propagation"};
            std::cout << "component median_ms\n";
            for (const char* row : rows) {
                std::cout << row << ' ' << prof.median(row) << '\n';
            }
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
