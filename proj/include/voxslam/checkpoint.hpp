#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "voxslam/decoder.hpp"
#include "voxslam/voxel_map.hpp"

namespace voxslam {

// Map + decoder container, little-endian:
//   magic "VXFM", version u32,
//   voxel_size f64, embedding_dim u32, max_depth u32, origin_offset i64 x3,
//   voxel count u64, sorted Morton codes u64 each,
//   vertex count u64, records (vertex key i64 x3, embedding f64 x N),
//   decoder layout (hidden, trunk_layers, skip_at, sdf_hidden, color_hidden
//   as u32), parameter count u64, parameters f64 each.

struct Checkpoint {
    VoxelMap map;
    DecoderParams decoder;
};

void save_checkpoint(std::ostream& os, const VoxelMap& map, const DecoderParams& decoder);
void save_checkpoint(const std::filesystem::path& path, const VoxelMap& map,
                     const DecoderParams& decoder);

Checkpoint load_checkpoint(std::istream& is);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// In-memory serialization; used for snapshot checksums.
std::string serialize_checkpoint(const VoxelMap& map, const DecoderParams& decoder);

} // namespace voxslam
