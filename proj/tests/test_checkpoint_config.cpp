#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "voxslam/checkpoint.hpp"
#include "voxslam/config.hpp"

using namespace voxslam;
namespace fs = std::filesystem;

TEST_SUITE("checkpoint_config") {

TEST_CASE("checkpoint roundtrip preserves everything") {
    VoxelMapConfig cfg;
    cfg.voxel_size = 0.25;
    cfg.max_depth = 8;
    cfg.embedding_dim = 16;
    cfg.seed = 77;
    VoxelMap map(cfg);
    Rng rng(3);
    std::vector<Vec3> pts;
    for (int i = 0; i < 50; ++i) {
        pts.emplace_back(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    }
    map.allocate_from_points(pts);
    const DecoderParams decoder = init_params(9, DecoderLayout::make(16, 32, 3, 2, 8, 16));

    const fs::path path = fs::temp_directory_path() / "voxslam_ckpt_test.vxfm";
    save_checkpoint(path, map, decoder);
    const Checkpoint back = load_checkpoint(path);

    CHECK(back.map.config().voxel_size == cfg.voxel_size);
    CHECK(back.map.config().max_depth == cfg.max_depth);
    CHECK(back.map.config().offset() == map.config().offset());
    CHECK(back.map.sorted_codes() == map.sorted_codes());
    REQUIRE(back.map.sorted_vertex_keys() == map.sorted_vertex_keys());
    for (uint64_t key : map.sorted_vertex_keys()) {
        CHECK(back.map.vertex_store().at(key) == map.vertex_store().at(key));
    }
    CHECK(back.decoder.layout == decoder.layout);
    CHECK(back.decoder.theta == decoder.theta);
}

TEST_CASE("serialized bytes are canonical") {
    VoxelMapConfig cfg;
    cfg.seed = 5;
    VoxelMap a(cfg), b(cfg);
    Rng rng(7);
    std::vector<Vec3> pts;
    for (int i = 0; i < 30; ++i) {
        pts.emplace_back(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    }
    a.allocate_from_points(pts);
    std::vector<Vec3> rev(pts.rbegin(), pts.rend());
    b.allocate_from_points(rev);
    const DecoderParams decoder = init_params(1, DecoderLayout::make(16, 8, 2, 1, 4, 8));
    CHECK(serialize_checkpoint(a, decoder) == serialize_checkpoint(b, decoder));
}

TEST_CASE("corrupt checkpoints are rejected") {
    SUBCASE("bad magic") {
        std::istringstream is(std::string("NOPE") + std::string(100, '\0'));
        CHECK_THROWS_AS(load_checkpoint(is), DatasetError);
    }
    SUBCASE("truncated file") {
        VoxelMap map{VoxelMapConfig{}};
        map.allocate_from_points(std::vector<Vec3>{Vec3(0.1, 0.1, 0.1)});
        const DecoderParams decoder = init_params(1, DecoderLayout::make(16, 8, 2, 1, 4, 8));
        const std::string bytes = serialize_checkpoint(map, decoder);
        std::istringstream is(bytes.substr(0, bytes.size() / 2));
        CHECK_THROWS_AS(load_checkpoint(is), DatasetError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint(fs::path("/nonexistent/missing.vxfm")), DatasetError);
    }
}

TEST_CASE("run config parsing") {
    const fs::path path = fs::temp_directory_path() / "voxslam_cfg_test.json";
    SUBCASE("defaults survive an empty object") {
        std::ofstream(path) << "{}";
        const RunConfig cfg = load_run_config(path);
        CHECK(cfg.seed == 1);
        CHECK(cfg.mode == RunMode::kSingleThreaded);
        CHECK(cfg.map.voxel_size == 0.2);
        CHECK(cfg.map.embedding_dim == 16);
        CHECK(cfg.render.truncation == 0.1);
        CHECK(cfg.mapper.kf_ratio_threshold == 0.2);
        CHECK(cfg.mapper.window_keyframes == 4);
        CHECK(cfg.decoder_layout().hidden == 256);
    }
    SUBCASE("values parse and nest") {
        std::ofstream(path) << R"({
            "seed": 42,
            "mode": "concurrent",
            "use_gt_poses": true,
            "map": {"voxel_size": 0.25, "embedding_dim": 8},
            "decoder": {"hidden": 64, "trunk_layers": 2, "skip_at": 1},
            "render": {"lambda_sdf": 10.0},
            "tracker": {"pixels": 256, "iterations": 12},
            "mapper": {"rays_per_frame": 128}
        })";
        const RunConfig cfg = load_run_config(path);
        CHECK(cfg.seed == 42);
        CHECK(cfg.mode == RunMode::kConcurrent);
        CHECK(cfg.use_gt_poses);
        CHECK(cfg.map.voxel_size == 0.25);
        CHECK(cfg.map.embedding_dim == 8);
        CHECK(cfg.decoder_hidden == 64);
        CHECK(cfg.render.lambda_sdf == 10.0);
        CHECK(cfg.tracker.num_pixels == 256);
        CHECK(cfg.tracker.iterations == 12);
        CHECK(cfg.mapper.rays_per_frame == 128);
        CHECK(cfg.decoder_layout().param_count > 0);
    }
    SUBCASE("unknown keys are errors") {
        std::ofstream(path) << R"({"sedd": 42})";
        CHECK_THROWS_AS(load_run_config(path), ConfigError);
        std::ofstream(path) << R"({"tracker": {"pixel": 12}})";
        CHECK_THROWS_AS(load_run_config(path), ConfigError);
    }
    SUBCASE("bad mode is an error") {
        std::ofstream(path) << R"({"mode": "warp"})";
        CHECK_THROWS_AS(load_run_config(path), ConfigError);
    }
    SUBCASE("malformed json is an error") {
        std::ofstream(path) << "{";
        CHECK_THROWS_AS(load_run_config(path), ConfigError);
    }
}

} // TEST_SUITE
