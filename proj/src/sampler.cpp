#include "voxslam/sampler.hpp"

#include <cmath>

namespace voxslam {

std::vector<Ray> generate_rays(const Frame& frame, const Transform& pose,
                               std::span<const Eigen::Vector2i> pixels) {
    const Intrinsics& K = frame.intrinsics;
    std::vector<Ray> rays;
    rays.reserve(pixels.size());
    for (const Eigen::Vector2i& px : pixels) {
        if (px.x() < 0 || px.x() >= K.width || px.y() < 0 || px.y() >= K.height) {
            throw OutOfRangeError("generate_rays: pixel outside image bounds");
        }
        const Vec3 dir_cam =
            Vec3((px.x() - K.cx) / K.fx, (px.y() - K.cy) / K.fy, 1.0).normalized();
        Ray r;
        r.origin = pose.translation();
        r.direction = pose.rotation() * dir_cam;
        r.pixel = px;
        r.gt_color = frame.image.color_at(px.x(), px.y());
        const float z = frame.image.depth_at(px.x(), px.y());
        if (z > 0.f && std::isfinite(z)) {
            r.gt_depth = static_cast<double>(z) / dir_cam.z();
        }
        rays.push_back(std::move(r));
    }
    return rays;
}

std::optional<std::pair<double, double>> ray_box_interval(const Vec3& o, const Vec3& d,
                                                          const Vec3& lo, const Vec3& hi) {
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
            if (o[a] < lo[a] || o[a] > hi[a]) {
                return std::nullopt;
            }
            continue;
        }
        double t0 = (lo[a] - o[a]) / d[a];
        double t1 = (hi[a] - o[a]) / d[a];
        if (t0 > t1) {
            std::swap(t0, t1);
        }
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) {
            return std::nullopt;
        }
    }
    return std::make_pair(tmin, tmax);
}

int max_hits(double d_max, double voxel_size) {
    return static_cast<int>(std::ceil(d_max / voxel_size * std::sqrt(3.0)));
}

HitSegments intersect(const VoxelMap& map, const Ray& ray, double d_max) {
    HitSegments out;
    const double vs = map.voxel_size();
    const int off = map.config().offset();
    const int64_t n = 1ll << map.config().max_depth;
    const Vec3 lattice_lo = Vec3::Constant(-off * vs);
    const Vec3 lattice_hi = Vec3::Constant(static_cast<double>(n - off) * vs);

    auto span = ray_box_interval(ray.origin, ray.direction, lattice_lo, lattice_hi);
    if (!span) {
        return out;
    }
    const double t_lo = std::max(span->first, 0.0);
    const double t_hi = std::min(span->second, d_max);
    if (t_hi <= t_lo) {
        return out;
    }

    const int cap = max_hits(d_max, vs);
    const Vec3 start = ray.origin + t_lo * ray.direction;
    Eigen::Vector3i cell = map.voxel_of(start);
    // Clamp the entry cell onto the lattice (the start point can sit exactly
    // on the boundary plane).
    for (int a = 0; a < 3; ++a) {
        cell[a] = std::clamp(cell[a], -off, static_cast<int>(n) - off - 1);
    }

    // Amanatides-Woo stepping state.
    Eigen::Vector3i step;
    Vec3 t_next, t_delta;
    for (int a = 0; a < 3; ++a) {
        if (ray.direction[a] > 0) {
            step[a] = 1;
            t_next[a] = ((cell[a] + 1) * vs - ray.origin[a]) / ray.direction[a];
            t_delta[a] = vs / ray.direction[a];
        } else if (ray.direction[a] < 0) {
            step[a] = -1;
            t_next[a] = (cell[a] * vs - ray.origin[a]) / ray.direction[a];
            t_delta[a] = -vs / ray.direction[a];
        } else {
            step[a] = 0;
            t_next[a] = std::numeric_limits<double>::infinity();
            t_delta[a] = std::numeric_limits<double>::infinity();
        }
    }

    double t_cur = t_lo;
    while (t_cur <= t_hi && static_cast<int>(out.size()) < cap) {
        auto code = map.try_code_of(cell);
        if (!code) {
            break;
        }
        if (map.allocated(*code)) {
            const Vec3 cell_lo = cell.cast<double>() * vs;
            auto iv = ray_box_interval(ray.origin, ray.direction, cell_lo,
                                       cell_lo + Vec3::Constant(vs));
            if (iv) {
                const double a = std::max(iv->first, 0.0);
                const double b = std::min(iv->second, d_max);
                if (b > a) {
                    out.push_back(HitSegment{*code, a, b});
                }
            }
        }
        int axis = 0;
        if (t_next[1] < t_next[axis]) {
            axis = 1;
        }
        if (t_next[2] < t_next[axis]) {
            axis = 2;
        }
        t_cur = t_next[axis];
        cell[axis] += step[axis];
        t_next[axis] += t_delta[axis];
    }
    return out;
}

RaySamples sample_points(const HitSegments& segments, const Ray& ray, double step,
                         int max_samples, Rng& rng) {
    RaySamples out;
    if (step <= 0) {
        throw Error("sample_points: step must be positive");
    }
    for (const HitSegment& seg : segments) {
        const double len = seg.t_exit - seg.t_entry;
        const int n_full = static_cast<int>(std::floor(len / step));
        const double rem = len - n_full * step;
        int n_sub = n_full + (rem > 0.5 * step ? 1 : 0);
        for (int i = 0; i < n_sub; ++i) {
            const double a = seg.t_entry + i * step;
            const double b = (i == n_full) ? seg.t_exit : a + step;
            out.depths.push_back(a + rng.uniform() * (b - a));
        }
    }
    if (static_cast<int>(out.depths.size()) > max_samples) {
        out.depths.resize(max_samples); // drop the farthest
    }
    out.points.reserve(out.depths.size());
    for (double t : out.depths) {
        out.points.push_back(ray.origin + t * ray.direction);
    }
    return out;
}

} // namespace voxslam
