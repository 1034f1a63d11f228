#pragma once

#include <filesystem>

#include "voxslam/decoder.hpp"
#include "voxslam/mapper.hpp"
#include "voxslam/renderer.hpp"
#include "voxslam/sampler.hpp"
#include "voxslam/tracker.hpp"

namespace voxslam {

enum class RunMode { kSingleThreaded, kConcurrent };

// Everything a SLAM run needs, parseable from one declarative JSON file.
// Unknown keys are errors; every field has a documented default.
struct RunConfig {
    uint64_t seed = 1;
    RunMode mode = RunMode::kSingleThreaded;
    bool use_gt_poses = false; // mapping-only mode: tracker disabled
    int queue_capacity = 8;    // tracker -> mapper frame queue

    VoxelMapConfig map;
    // Decoder network shape (embedding size comes from map.embedding_dim).
    int decoder_hidden = 256;
    int decoder_trunk_layers = 3;
    int decoder_skip_at = 2;
    int decoder_sdf_hidden = 128;
    int decoder_color_hidden = 256;

    SamplerConfig sampler;
    RenderConfig render;
    TrackerConfig tracker;
    MapperConfig mapper;

    DecoderLayout decoder_layout() const {
        return DecoderLayout::make(map.embedding_dim, decoder_hidden, decoder_trunk_layers,
                                   decoder_skip_at, decoder_sdf_hidden, decoder_color_hidden);
    }
};

// Parse a config file; values not present keep their defaults. Throws
// ConfigError on unknown keys or malformed values.
RunConfig load_run_config(const std::filesystem::path& path);

const char* to_string(RunMode mode);
RunMode parse_run_mode(const std::string& s);

} // namespace voxslam
