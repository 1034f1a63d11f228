#pragma once

#include <vector>

#include "voxslam/geometry.hpp"

namespace voxslam {

// Dense RGB-D image pair. Color channels in [0,1], depth in meters with
// 0 (or negative / non-finite) meaning invalid.
struct Image {
    int width = 0, height = 0;
    std::vector<float> color; // 3 * width * height, row-major RGB
    std::vector<float> depth; // width * height, row-major

    Image() = default;
    Image(int w, int h) : width(w), height(h), color(3 * w * h, 0.f), depth(w * h, 0.f) {}

    Vec3 color_at(int u, int v) const {
        const size_t i = 3 * (static_cast<size_t>(v) * width + u);
        return Vec3(color[i], color[i + 1], color[i + 2]);
    }
    void set_color(int u, int v, const Vec3& c) {
        const size_t i = 3 * (static_cast<size_t>(v) * width + u);
        color[i] = static_cast<float>(c.x());
        color[i + 1] = static_cast<float>(c.y());
        color[i + 2] = static_cast<float>(c.z());
    }
    float depth_at(int u, int v) const { return depth[static_cast<size_t>(v) * width + u]; }
    void set_depth(int u, int v, float d) { depth[static_cast<size_t>(v) * width + u] = d; }
};

struct Frame {
    int index = 0;
    double timestamp = 0.0;
    Image image;
    Intrinsics intrinsics;
    Transform pose; // camera-to-world estimate
    bool is_keyframe = false;
};

} // namespace voxslam
