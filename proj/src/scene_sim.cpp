#include "voxslam/scene_sim.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "voxslam/errors.hpp"

namespace voxslam {

Primitive Primitive::sphere(const Vec3& c, double r, const Vec3& albedo) {
    Primitive p;
    p.kind = Kind::kSphere;
    p.center = c;
    p.radius = r;
    p.albedo = albedo;
    return p;
}

Primitive Primitive::box(const Vec3& c, const Vec3& half, const Vec3& albedo) {
    Primitive p;
    p.kind = Kind::kBox;
    p.center = c;
    p.half_extents = half;
    p.albedo = albedo;
    return p;
}

Primitive Primitive::room(const Vec3& c, const Vec3& half, const Vec3& albedo) {
    Primitive p = box(c, half, albedo);
    p.kind = Kind::kRoom;
    return p;
}

namespace {

double box_sdf(const Vec3& p, const Vec3& c, const Vec3& half) {
    const Vec3 q = (p - c).cwiseAbs() - half;
    return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

} // namespace

double Primitive::sdf(const Vec3& p) const {
    switch (kind) {
    case Kind::kSphere:
        return (p - center).norm() - radius;
    case Kind::kBox:
        return box_sdf(p, center, half_extents);
    case Kind::kRoom:
        return -box_sdf(p, center, half_extents);
    }
    return 0;
}

SdfSample scene_sdf(const SceneSpec& scene, const Vec3& p) {
    SdfSample best;
    best.distance = std::numeric_limits<double>::infinity();
    for (const Primitive& prim : scene.primitives) {
        const double d = prim.sdf(p);
        if (d < best.distance) {
            best.distance = d;
            best.albedo = prim.albedo;
        }
    }
    return best;
}

SceneSpec SceneSpec::box_room() {
    SceneSpec s;
    const Vec3 room_center(0.031, 0.043, 0.027);
    s.primitives.push_back(
        Primitive::room(room_center, Vec3(2.0, 2.0, 1.5), Vec3(0.75, 0.72, 0.68)));
    s.primitives.push_back(
        Primitive::sphere(Vec3(-0.85, 0.72, -0.97), 0.5, Vec3(0.20, 0.45, 0.85)));
    s.primitives.push_back(
        Primitive::box(Vec3(0.97, -0.66, -1.22), Vec3(0.30, 0.20, 0.25), Vec3(0.85, 0.30, 0.25)));
    s.extent_bound = 8.0;
    return s;
}

SceneSpec SceneSpec::single_wall() {
    SceneSpec s;
    // Thick slab at z ~ 2 facing the origin.
    s.primitives.push_back(
        Primitive::box(Vec3(0.013, -0.017, 2.55), Vec3(2.0, 1.6, 0.5), Vec3(0.7, 0.55, 0.35)));
    s.extent_bound = 8.0;
    return s;
}

Image render_gt_frame(const SceneSpec& scene, const Transform& pose, const Intrinsics& K) {
    Image img(K.width, K.height);
    const Mat3 R = pose.rotation();
    const Vec3 o = pose.translation();
#pragma omp parallel for schedule(static)
    for (int v = 0; v < K.height; ++v) {
        for (int u = 0; u < K.width; ++u) {
            const Vec3 dir_cam = Vec3((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0).normalized();
            const Vec3 dir = R * dir_cam;
            double t = 0.0;
            bool hit = false;
            Vec3 albedo = Vec3::Zero();
            for (int it = 0; it < 256; ++it) {
                const SdfSample s = scene_sdf(scene, o + t * dir);
                if (s.distance < 1e-5) {
                    if (it == 0 && s.distance <= 0.0) {
                        break; // camera starts inside a solid
                    }
                    hit = true;
                    albedo = s.albedo;
                    break;
                }
                t += s.distance;
                if (t > scene.extent_bound) {
                    break;
                }
            }
            if (hit) {
                img.set_depth(u, v, static_cast<float>(t * dir_cam.z()));
                img.set_color(u, v, albedo);
            }
        }
    }
    return img;
}

Transform look_at(const Vec3& eye, const Vec3& target) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 up_world = Vec3::UnitZ();
    if (std::abs(forward.dot(up_world)) > 0.999) {
        up_world = Vec3::UnitX();
    }
    const Vec3 right = forward.cross(up_world).normalized();
    const Vec3 down = forward.cross(right); // camera y points down in world
    Mat3 R;
    R.col(0) = right;
    R.col(1) = down;
    R.col(2) = forward;
    return Transform(R, eye);
}

Intrinsics box_room_camera() {
    return Intrinsics(70.0, 70.0, 39.5, 29.5, 80, 60);
}

TrajectorySpec TrajectorySpec::box_room_orbit(int frames) {
    TrajectorySpec spec;
    const Vec3 center(0.031, 0.043, 0.027);
    const double radius = 0.9;
    for (int i = 0; i < frames; ++i) {
        const double phi = 2.0 * M_PI * i / frames;
        const Vec3 eye = center + Vec3(radius * std::cos(phi), radius * std::sin(phi),
                                       0.25 * std::sin(2.0 * phi));
        const Vec3 target = center + Vec3(0, 0, 1.1 * std::sin(phi + 1.0));
        spec.poses.emplace_back(static_cast<double>(i), look_at(eye, target));
    }
    return spec;
}

TrajectorySpec TrajectorySpec::box_room_jump(int frames) {
    TrajectorySpec spec;
    const Vec3 center(0.031, 0.043, 0.027);
    const double radius = 0.9;
    const int orbit_frames = frames - 1;
    // Slow sweep across one half of the room...
    for (int i = 0; i < orbit_frames; ++i) {
        const double phi = M_PI * i / orbit_frames * 0.5;
        const Vec3 eye = center + Vec3(radius * std::cos(phi), radius * std::sin(phi), 0.0);
        const Vec3 target = center;
        spec.poses.emplace_back(static_cast<double>(i), look_at(eye, target));
    }
    // ...then a jump to stare into the opposite corner.
    const Vec3 eye = center + Vec3(-0.4, -0.4, 0.3);
    const Vec3 corner = center + Vec3(1.9, 1.9, -1.4);
    spec.poses.emplace_back(static_cast<double>(orbit_frames), look_at(eye, corner));
    return spec;
}

Dataset simulate_dataset(const SceneSpec& scene, const TrajectorySpec& traj, const Intrinsics& K,
                         double depth_noise_sigma, uint64_t seed) {
    Dataset ds;
    ds.intrinsics = K;
    for (size_t i = 0; i < traj.poses.size(); ++i) {
        const auto& [timestamp, pose] = traj.poses[i];
        Frame f;
        f.index = static_cast<int>(i);
        f.timestamp = timestamp;
        f.intrinsics = K;
        f.pose = pose;
        f.image = render_gt_frame(scene, pose, K);
        if (depth_noise_sigma > 0) {
            for (int v = 0; v < K.height; ++v) {
                for (int u = 0; u < K.width; ++u) {
                    const float d = f.image.depth_at(u, v);
                    if (d > 0.f) {
                        Rng pix_rng(mix_seed(mix_seed(seed, i),
                                             static_cast<uint64_t>(v) * K.width + u));
                        f.image.set_depth(
                            u, v,
                            std::max(0.f, d + static_cast<float>(depth_noise_sigma *
                                                                 pix_rng.normal())));
                    }
                }
            }
        }
        ds.frames.push_back(std::move(f));
        ds.gt.push_back(timestamp, pose);
    }
    return ds;
}

namespace {

void write_ppm(const std::filesystem::path& path, const Image& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw DatasetError("dataset: cannot open " + path.string() + " for writing");
    }
    os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(img.width) * 3);
    for (int v = 0; v < img.height; ++v) {
        for (int u = 0; u < img.width; ++u) {
            for (int c = 0; c < 3; ++c) {
                const float x = img.color[3 * (static_cast<size_t>(v) * img.width + u) + c];
                const long b = std::lround(std::clamp(x, 0.f, 1.f) * 255.f);
                row[3 * u + c] = static_cast<unsigned char>(b);
            }
        }
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DatasetError("dataset: cannot open " + path.string());
    }
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    is >> magic >> w >> h >> maxval;
    if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) {
        throw DatasetError("dataset: " + path.string() + " is not an 8-bit P6 PPM");
    }
    is.get(); // single whitespace after header
    Image img(w, h);
    std::vector<unsigned char> buf(static_cast<size_t>(w) * h * 3);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is) {
        throw DatasetError("dataset: truncated PPM " + path.string());
    }
    for (size_t i = 0; i < buf.size(); ++i) {
        img.color[i] = static_cast<float>(buf[i]) / 255.f;
    }
    return img;
}

void write_depth(const std::filesystem::path& path, const Image& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw DatasetError("dataset: cannot open " + path.string() + " for writing");
    }
    const uint32_t w = static_cast<uint32_t>(img.width), h = static_cast<uint32_t>(img.height);
    os.write(reinterpret_cast<const char*>(&w), 4);
    os.write(reinterpret_cast<const char*>(&h), 4);
    os.write(reinterpret_cast<const char*>(img.depth.data()),
             static_cast<std::streamsize>(img.depth.size() * sizeof(float)));
}

void read_depth(const std::filesystem::path& path, Image& img) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DatasetError("dataset: cannot open " + path.string());
    }
    uint32_t w = 0, h = 0;
    is.read(reinterpret_cast<char*>(&w), 4);
    is.read(reinterpret_cast<char*>(&h), 4);
    if (!is || static_cast<int>(w) != img.width || static_cast<int>(h) != img.height) {
        throw DatasetError("dataset: depth header mismatch in " + path.string());
    }
    is.read(reinterpret_cast<char*>(img.depth.data()),
            static_cast<std::streamsize>(img.depth.size() * sizeof(float)));
    if (!is) {
        throw DatasetError("dataset: truncated depth file " + path.string());
    }
}

std::string frame_stem(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", index);
    return buf;
}

} // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "frames");
    {
        std::ofstream os(dir / "intrinsics.txt");
        if (!os) {
            throw DatasetError("dataset: cannot write intrinsics.txt");
        }
        os.precision(17);
        const Intrinsics& K = ds.intrinsics;
        os << K.fx << ' ' << K.fy << ' ' << K.cx << ' ' << K.cy << ' ' << K.width << ' '
           << K.height << '\n';
    }
    write_trajectory(dir / "traj_gt.txt", ds.gt);
    for (const Frame& f : ds.frames) {
        write_ppm(dir / "frames" / (frame_stem(f.index) + ".color.ppm"), f.image);
        write_depth(dir / "frames" / (frame_stem(f.index) + ".depth.bin"), f.image);
    }
}

Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset ds;
    {
        std::ifstream is(dir / "intrinsics.txt");
        if (!is) {
            throw DatasetError("dataset: missing intrinsics.txt in " + dir.string());
        }
        double fx, fy, cx, cy;
        int w, h;
        if (!(is >> fx >> fy >> cx >> cy >> w >> h)) {
            throw DatasetError("dataset: malformed intrinsics.txt in " + dir.string());
        }
        ds.intrinsics = Intrinsics(fx, fy, cx, cy, w, h);
    }
    ds.gt = read_trajectory(dir / "traj_gt.txt");
    for (int i = 0;; ++i) {
        const auto color_path = dir / "frames" / (frame_stem(i) + ".color.ppm");
        if (!std::filesystem::exists(color_path)) {
            break;
        }
        Frame f;
        f.index = i;
        f.intrinsics = ds.intrinsics;
        f.image = read_ppm(color_path);
        if (f.image.width != ds.intrinsics.width || f.image.height != ds.intrinsics.height) {
            throw DatasetError("dataset: frame size mismatch at index " + std::to_string(i));
        }
        read_depth(dir / "frames" / (frame_stem(i) + ".depth.bin"), f.image);
        if (static_cast<size_t>(i) < ds.gt.size()) {
            f.timestamp = ds.gt.timestamps[i];
            f.pose = ds.gt.poses[i];
        }
        ds.frames.push_back(std::move(f));
    }
    if (ds.frames.size() != ds.gt.size()) {
        throw DatasetError("dataset: trajectory row count (" + std::to_string(ds.gt.size()) +
                           ") does not match frame count (" + std::to_string(ds.frames.size()) +
                           ")");
    }
    return ds;
}

} // namespace voxslam
