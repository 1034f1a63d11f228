#include "voxslam/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "voxslam/errors.hpp"

namespace voxslam {

namespace {

constexpr char kMagic[4] = {'V', 'X', 'F', 'M'};
constexpr uint32_t kVersion = 1;

template <typename T> void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T> T get(std::istream& is, const char* what) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) {
        throw DatasetError(std::string("checkpoint: truncated while reading ") + what);
    }
    return v;
}

} // namespace

void save_checkpoint(std::ostream& os, const VoxelMap& map, const DecoderParams& decoder) {
    os.write(kMagic, 4);
    put(os, kVersion);
    const VoxelMapConfig& cfg = map.config();
    put(os, cfg.voxel_size);
    put(os, static_cast<uint32_t>(cfg.embedding_dim));
    put(os, static_cast<uint32_t>(cfg.max_depth));
    const int64_t off = cfg.offset();
    put(os, off);
    put(os, off);
    put(os, off);

    const auto codes = map.sorted_codes();
    put(os, static_cast<uint64_t>(codes.size()));
    for (MortonCode c : codes) {
        put(os, static_cast<uint64_t>(c));
    }

    const auto keys = map.sorted_vertex_keys();
    put(os, static_cast<uint64_t>(keys.size()));
    for (uint64_t packed : keys) {
        const VertexKey k = unpack_vertex_key(packed);
        put(os, k.x);
        put(os, k.y);
        put(os, k.z);
        const Eigen::VectorXd& e = map.vertex_store().at(packed);
        os.write(reinterpret_cast<const char*>(e.data()),
                 static_cast<std::streamsize>(e.size() * sizeof(double)));
    }

    const DecoderLayout& l = decoder.layout;
    put(os, static_cast<uint32_t>(l.hidden));
    put(os, static_cast<uint32_t>(l.trunk_layers));
    put(os, static_cast<uint32_t>(l.skip_at));
    put(os, static_cast<uint32_t>(l.sdf_hidden));
    put(os, static_cast<uint32_t>(l.color_hidden));
    put(os, static_cast<uint64_t>(decoder.theta.size()));
    os.write(reinterpret_cast<const char*>(decoder.theta.data()),
             static_cast<std::streamsize>(decoder.theta.size() * sizeof(double)));
    if (!os) {
        throw DatasetError("checkpoint: write failed");
    }
}

void save_checkpoint(const std::filesystem::path& path, const VoxelMap& map,
                     const DecoderParams& decoder) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw DatasetError("checkpoint: cannot open " + path.string() + " for writing");
    }
    save_checkpoint(os, map, decoder);
}

Checkpoint load_checkpoint(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw DatasetError("checkpoint: bad magic (not a VXFM file)");
    }
    const auto version = get<uint32_t>(is, "version");
    if (version != kVersion) {
        throw DatasetError("checkpoint: unsupported version " + std::to_string(version));
    }
    VoxelMapConfig cfg;
    cfg.voxel_size = get<double>(is, "voxel_size");
    cfg.embedding_dim = static_cast<int>(get<uint32_t>(is, "embedding_dim"));
    cfg.max_depth = static_cast<int>(get<uint32_t>(is, "max_depth"));
    const int64_t ox = get<int64_t>(is, "origin_offset");
    get<int64_t>(is, "origin_offset");
    get<int64_t>(is, "origin_offset");
    cfg.origin_offset = static_cast<int>(ox);

    VoxelMap map(cfg);
    const auto n_voxels = get<uint64_t>(is, "voxel count");
    for (uint64_t i = 0; i < n_voxels; ++i) {
        map.insert_raw(get<uint64_t>(is, "morton code"));
    }
    const auto n_vertices = get<uint64_t>(is, "vertex count");
    for (uint64_t i = 0; i < n_vertices; ++i) {
        VertexKey k;
        k.x = get<int64_t>(is, "vertex key");
        k.y = get<int64_t>(is, "vertex key");
        k.z = get<int64_t>(is, "vertex key");
        Eigen::VectorXd e(cfg.embedding_dim);
        is.read(reinterpret_cast<char*>(e.data()),
                static_cast<std::streamsize>(e.size() * sizeof(double)));
        if (!is) {
            throw DatasetError("checkpoint: truncated embedding record");
        }
        map.insert_vertex_raw(pack_vertex_key(k), std::move(e));
    }

    const int hidden = static_cast<int>(get<uint32_t>(is, "hidden"));
    const int trunk_layers = static_cast<int>(get<uint32_t>(is, "trunk_layers"));
    const int skip_at = static_cast<int>(get<uint32_t>(is, "skip_at"));
    const int sdf_hidden = static_cast<int>(get<uint32_t>(is, "sdf_hidden"));
    const int color_hidden = static_cast<int>(get<uint32_t>(is, "color_hidden"));
    DecoderLayout layout = DecoderLayout::make(cfg.embedding_dim, hidden, trunk_layers, skip_at,
                                               sdf_hidden, color_hidden);
    const auto n_params = get<uint64_t>(is, "param count");
    if (n_params != static_cast<uint64_t>(layout.param_count)) {
        throw DatasetError("checkpoint: parameter count does not match layout");
    }
    DecoderParams decoder;
    decoder.layout = layout;
    decoder.theta.resize(static_cast<Eigen::Index>(n_params));
    is.read(reinterpret_cast<char*>(decoder.theta.data()),
            static_cast<std::streamsize>(n_params * sizeof(double)));
    if (!is) {
        throw DatasetError("checkpoint: truncated parameter vector");
    }
    return Checkpoint{std::move(map), std::move(decoder)};
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DatasetError("checkpoint: cannot open " + path.string());
    }
    return load_checkpoint(is);
}

std::string serialize_checkpoint(const VoxelMap& map, const DecoderParams& decoder) {
    std::ostringstream os(std::ios::binary);
    save_checkpoint(os, map, decoder);
    return std::move(os).str();
}

} // namespace voxslam
