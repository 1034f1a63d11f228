#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <optional>

#include "voxslam/scene_sim.hpp"

using namespace voxslam;
namespace fs = std::filesystem;

namespace {

// Closed-form ray/primitive intersections: the oracle for sphere tracing.
std::optional<double> ray_sphere(const Vec3& o, const Vec3& d, const Vec3& c, double r) {
    const Vec3 oc = o - c;
    const double b = oc.dot(d);
    const double disc = b * b - (oc.squaredNorm() - r * r);
    if (disc < 0) {
        return std::nullopt;
    }
    const double t = -b - std::sqrt(disc);
    return t > 0 ? std::optional(t) : std::nullopt;
}

std::optional<double> ray_box_entry(const Vec3& o, const Vec3& d, const Vec3& c,
                                    const Vec3& half) {
    double t0 = -1e300, t1 = 1e300;
    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0) {
            if (std::abs(o[a] - c[a]) > half[a]) {
                return std::nullopt;
            }
            continue;
        }
        double ta = (c[a] - half[a] - o[a]) / d[a];
        double tb = (c[a] + half[a] - o[a]) / d[a];
        if (ta > tb) {
            std::swap(ta, tb);
        }
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t0 > t1 || t0 <= 0) {
        return std::nullopt;
    }
    return t0;
}

// First exit of a ray starting inside a box (the room-shell hit).
double ray_box_exit(const Vec3& o, const Vec3& d, const Vec3& c, const Vec3& half) {
    double t1 = 1e300;
    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0) {
            continue;
        }
        const double ta = (c[a] - half[a] - o[a]) / d[a];
        const double tb = (c[a] + half[a] - o[a]) / d[a];
        t1 = std::min(t1, std::max(ta, tb));
    }
    return t1;
}

} // namespace

TEST_SUITE("scene_sim") {

TEST_CASE("analytic sdf examples") {
    SceneSpec s;
    s.primitives.push_back(Primitive::sphere(Vec3::Zero(), 1.0, Vec3(1, 0, 0)));
    CHECK(scene_sdf(s, Vec3::Zero()).distance == doctest::Approx(-1.0));
    CHECK(scene_sdf(s, Vec3(2, 0, 0)).distance == doctest::Approx(1.0));

    SceneSpec room;
    room.primitives.push_back(Primitive::room(Vec3::Zero(), Vec3(2, 2, 2), Vec3(1, 1, 1)));
    CHECK(scene_sdf(room, Vec3(1.9, 0, 0)).distance == doctest::Approx(0.1));
    CHECK(scene_sdf(room, Vec3(2.5, 0, 0)).distance == doctest::Approx(-0.5));
}

TEST_CASE("nearest primitive provides the albedo") {
    SceneSpec s;
    s.primitives.push_back(Primitive::sphere(Vec3(0, 0, 0), 0.5, Vec3(1, 0, 0)));
    s.primitives.push_back(Primitive::sphere(Vec3(3, 0, 0), 0.5, Vec3(0, 1, 0)));
    CHECK(scene_sdf(s, Vec3(0.6, 0, 0)).albedo == Vec3(1, 0, 0));
    CHECK(scene_sdf(s, Vec3(2.4, 0, 0)).albedo == Vec3(0, 1, 0));
}

TEST_CASE("scene sdf is 1-Lipschitz") {
    const SceneSpec scene = SceneSpec::box_room();
    Rng rng(3);
    for (int i = 0; i < 5000; ++i) {
        const Vec3 p(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
        const Vec3 q(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
        const double dp = scene_sdf(scene, p).distance;
        const double dq = scene_sdf(scene, q).distance;
        CHECK(std::abs(dp - dq) <= (p - q).norm() + 1e-12);
    }
}

TEST_CASE("center pixel depth of a frontal wall") {
    SceneSpec s;
    s.primitives.push_back(Primitive::box(Vec3(0, 0, 2.5), Vec3(3, 3, 0.5), Vec3(1, 1, 1)));
    const Intrinsics K(70, 70, 40, 30, 80, 60);
    const Image img = render_gt_frame(s, Transform(), K);
    // principal point is between pixels; pixel (40,30) looks almost along +z
    CHECK(img.depth_at(40, 30) == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("rays escaping the scene get invalid depth") {
    SceneSpec s;
    s.primitives.push_back(Primitive::box(Vec3(0, 0, 2.5), Vec3(0.1, 0.1, 0.1), Vec3(1, 1, 1)));
    const Intrinsics K(70, 70, 40, 30, 80, 60);
    const Image img = render_gt_frame(s, Transform(), K);
    CHECK(img.depth_at(0, 0) == 0.f);
    CHECK(img.depth_at(40, 30) > 0.f);
}

TEST_CASE("rendering is deterministic") {
    const SceneSpec scene = SceneSpec::box_room();
    const Intrinsics K = box_room_camera();
    const Transform pose = TrajectorySpec::box_room_orbit(10).poses[3].second;
    const Image a = render_gt_frame(scene, pose, K);
    const Image b = render_gt_frame(scene, pose, K);
    CHECK(a.depth == b.depth);
    CHECK(a.color == b.color);
}

TEST_CASE("sphere tracing matches closed-form intersections") {
    const SceneSpec scene = SceneSpec::box_room();
    const auto& room = scene.primitives[0];
    const auto& sphere = scene.primitives[1];
    const auto& box = scene.primitives[2];
    Rng rng(7);
    int checked = 0;
    for (int i = 0; i < 10000; ++i) {
        const Vec3 o = room.center + Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1),
                                          rng.uniform(-0.8, 0.8));
        if (scene_sdf(scene, o).distance <= 0.01) {
            continue;
        }
        Vec3 d(rng.normal(), rng.normal(), rng.normal());
        if (d.norm() < 1e-9) {
            continue;
        }
        d.normalize();
        // closed-form first hit among the three primitives
        double expect = ray_box_exit(o, d, room.center, room.half_extents);
        if (auto t = ray_sphere(o, d, sphere.center, sphere.radius)) {
            expect = std::min(expect, *t);
        }
        if (auto t = ray_box_entry(o, d, box.center, box.half_extents)) {
            expect = std::min(expect, *t);
        }
        // sphere trace the same ray
        double t = 0;
        bool hit = false;
        for (int it = 0; it < 256; ++it) {
            const double s = scene_sdf(scene, o + t * d).distance;
            if (s < 1e-5) {
                hit = true;
                break;
            }
            t += s;
            if (t > scene.extent_bound) {
                break;
            }
        }
        REQUIRE(hit);
        CHECK(std::abs(t - expect) < 1e-3);
        ++checked;
    }
    CHECK(checked > 8000);
}

TEST_CASE("depth maps satisfy the projective relation") {
    const SceneSpec scene = SceneSpec::box_room();
    const Intrinsics K = box_room_camera();
    const Transform pose = TrajectorySpec::box_room_orbit(60).poses[17].second;
    const Image img = render_gt_frame(scene, pose, K);
    int checked = 0;
    for (int v = 0; v < K.height; v += 3) {
        for (int u = 0; u < K.width; u += 3) {
            const float d = img.depth_at(u, v);
            if (d <= 0) {
                continue;
            }
            const Vec3 p = pose.apply(backproject(u, v, d, K));
            CHECK(std::abs(scene_sdf(scene, p).distance) < 1e-3);
            ++checked;
        }
    }
    CHECK(checked > 400);
}

TEST_CASE("dataset roundtrip") {
    const SceneSpec scene = SceneSpec::box_room();
    const Dataset ds = simulate_dataset(scene, TrajectorySpec::box_room_orbit(4),
                                        box_room_camera());
    const fs::path dir = fs::temp_directory_path() / "voxslam_ds_test";
    fs::remove_all(dir);
    write_dataset(ds, dir);
    const Dataset back = load_dataset(dir);
    REQUIRE(back.frames.size() == ds.frames.size());
    for (size_t i = 0; i < ds.frames.size(); ++i) {
        CHECK(back.frames[i].image.depth == ds.frames[i].image.depth); // bit-identical
        CHECK(back.frames[i].image.color.size() == ds.frames[i].image.color.size());
    }
    for (size_t i = 0; i < ds.gt.size(); ++i) {
        CHECK(back.gt.timestamps[i] == ds.gt.timestamps[i]);
        CHECK((back.gt.poses[i].translation() - ds.gt.poses[i].translation()).norm() < 1e-15);
        CHECK((back.gt.poses[i].rotation() - ds.gt.poses[i].rotation()).cwiseAbs().maxCoeff() <
              1e-15);
    }

    SUBCASE("missing intrinsics is a dataset error") {
        fs::remove(dir / "intrinsics.txt");
        CHECK_THROWS_AS(load_dataset(dir), DatasetError);
    }
    SUBCASE("trajectory row count mismatch is a dataset error") {
        Trajectory t = back.gt;
        t.timestamps.pop_back();
        t.poses.pop_back();
        write_trajectory(dir / "traj_gt.txt", t);
        CHECK_THROWS_AS(load_dataset(dir), DatasetError);
    }
}

TEST_CASE("simulation with fixed seed is bit-identical") {
    const SceneSpec scene = SceneSpec::box_room();
    const Dataset a =
        simulate_dataset(scene, TrajectorySpec::box_room_orbit(3), box_room_camera(), 0.01, 5);
    const Dataset b =
        simulate_dataset(scene, TrajectorySpec::box_room_orbit(3), box_room_camera(), 0.01, 5);
    for (size_t i = 0; i < a.frames.size(); ++i) {
        CHECK(a.frames[i].image.depth == b.frames[i].image.depth);
    }
}

} // TEST_SUITE
