#include <doctest.h>

#include <algorithm>

#include "voxslam/sampler.hpp"

using namespace voxslam;

namespace {

VoxelMapConfig cfg_depth6() {
    VoxelMapConfig cfg;
    cfg.voxel_size = 0.2;
    cfg.max_depth = 6;
    cfg.origin_offset = 0;
    return cfg;
}

// Oracle: slab test against every allocated voxel, sorted by entry distance,
// truncated to the hit cap.
HitSegments brute_force_intersect(const VoxelMap& map, const Ray& ray, double d_max) {
    HitSegments out;
    for (MortonCode code : map.sorted_codes()) {
        const auto [lo, hi] = map.voxel_bounds(code);
        const auto iv = ray_box_interval(ray.origin, ray.direction, lo, hi);
        if (!iv) {
            continue;
        }
        const double a = std::max(iv->first, 0.0);
        const double b = std::min(iv->second, d_max);
        if (b > a) {
            out.push_back(HitSegment{code, a, b});
        }
    }
    std::sort(out.begin(), out.end(),
              [](const HitSegment& x, const HitSegment& y) { return x.t_entry < y.t_entry; });
    const int cap = max_hits(d_max, map.voxel_size());
    if (static_cast<int>(out.size()) > cap) {
        out.resize(cap);
    }
    return out;
}

// Independent per-axis slab check used to validate the shared interval
// routine itself.
std::optional<std::pair<double, double>> slab_reference(const Vec3& o, const Vec3& d,
                                                        const Vec3& lo, const Vec3& hi) {
    double t0 = -1e300, t1 = 1e300;
    for (int a = 0; a < 3; ++a) {
        if (d[a] != 0.0) {
            const double ta = (lo[a] - o[a]) / d[a];
            const double tb = (hi[a] - o[a]) / d[a];
            t0 = std::max(t0, std::min(ta, tb));
            t1 = std::min(t1, std::max(ta, tb));
        } else if (o[a] < lo[a] || o[a] > hi[a]) {
            return std::nullopt;
        }
    }
    if (t0 > t1) {
        return std::nullopt;
    }
    return std::make_pair(t0, t1);
}

Frame make_frame(const Intrinsics& K) {
    Frame f;
    f.intrinsics = K;
    f.image = Image(K.width, K.height);
    return f;
}

} // namespace

TEST_SUITE("sampler") {

TEST_CASE("generate_rays basics") {
    const Intrinsics K(70, 70, 40, 30, 80, 60);
    Frame f = make_frame(K);
    f.image.set_color(40, 30, Vec3(0.25, 0.5, 0.75));
    f.image.set_depth(40, 30, 2.0f);

    SUBCASE("principal point looks along +z under identity pose") {
        const std::vector<Eigen::Vector2i> px{{40, 30}};
        const auto rays = generate_rays(f, Transform(), px);
        REQUIRE(rays.size() == 1);
        CHECK((rays[0].direction - Vec3(0, 0, 1)).norm() < 1e-15);
        CHECK(rays[0].origin == Vec3::Zero());
        REQUIRE(rays[0].gt_color.has_value());
        CHECK((*rays[0].gt_color - Vec3(0.25, 0.5, 0.75)).norm() < 1e-7);
        REQUIRE(rays[0].gt_depth.has_value());
        CHECK(*rays[0].gt_depth == doctest::Approx(2.0));
    }
    SUBCASE("origins equal the pose translation") {
        const Transform pose(Mat3::Identity(), Vec3(1, -2, 3));
        const std::vector<Eigen::Vector2i> px{{0, 0}, {79, 59}, {40, 30}};
        for (const Ray& r : generate_rays(f, pose, px)) {
            CHECK(r.origin == Vec3(1, -2, 3));
            CHECK(std::abs(r.direction.norm() - 1.0) < 1e-12);
        }
    }
    SUBCASE("invalid depth leaves gt_depth absent") {
        const std::vector<Eigen::Vector2i> px{{10, 10}};
        const auto rays = generate_rays(f, Transform(), px);
        CHECK(!rays[0].gt_depth.has_value());
    }
    SUBCASE("depth converts from z-depth to along-ray distance") {
        f.image.set_depth(60, 30, 2.0f);
        const std::vector<Eigen::Vector2i> px{{60, 30}};
        const auto rays = generate_rays(f, Transform(), px);
        const Vec3 dir_cam = Vec3((60 - K.cx) / K.fx, 0, 1).normalized();
        CHECK(*rays[0].gt_depth == doctest::Approx(2.0 / dir_cam.z()).epsilon(1e-9));
        // the implied sample point at gt depth lies on the z = 2 plane
        const Vec3 p = rays[0].origin + *rays[0].gt_depth * rays[0].direction;
        CHECK(p.z() == doctest::Approx(2.0).epsilon(1e-6));
    }
    SUBCASE("out-of-bounds pixel throws") {
        const std::vector<Eigen::Vector2i> px{{80, 30}};
        CHECK_THROWS_AS(generate_rays(f, Transform(), px), OutOfRangeError);
    }
}

TEST_CASE("intersect single voxel by hand") {
    VoxelMap map(cfg_depth6());
    map.allocate_from_points(std::vector<Vec3>{Vec3(0.1, 0.1, 0.3)}); // voxel (0,0,1)
    Ray ray;
    ray.origin = Vec3(0.1, 0.1, 0.0);
    ray.direction = Vec3(0, 0, 1);
    const HitSegments segs = intersect(map, ray, 8.0);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].t_entry == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(segs[0].t_exit == doctest::Approx(0.4).epsilon(1e-12));

    Ray miss;
    miss.origin = Vec3(3.0, 3.0, 0.0);
    miss.direction = Vec3(0, 0, 1);
    CHECK(intersect(map, miss, 8.0).empty());
}

TEST_CASE("slab routine matches independent reference") {
    Rng rng(53);
    for (int i = 0; i < 20000; ++i) {
        const Vec3 o(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
        Vec3 d(rng.normal(), rng.normal(), rng.normal());
        if (i % 7 == 0) {
            d[rng.uniform_index(3)] = 0.0;
        }
        if (d.norm() == 0) {
            continue;
        }
        d.normalize();
        const Vec3 lo(rng.uniform(-1, 0.5), rng.uniform(-1, 0.5), rng.uniform(-1, 0.5));
        const Vec3 hi = lo + Vec3(rng.uniform(0.1, 1), rng.uniform(0.1, 1), rng.uniform(0.1, 1));
        const auto a = ray_box_interval(o, d, lo, hi);
        const auto b = slab_reference(o, d, lo, hi);
        REQUIRE(a.has_value() == b.has_value());
        if (a) {
            CHECK(a->first == doctest::Approx(b->first).epsilon(1e-12));
            CHECK(a->second == doctest::Approx(b->second).epsilon(1e-12));
        }
    }
}

TEST_CASE("intersect equals brute-force oracle on random maps") {
    Rng rng(59);
    for (int trial = 0; trial < 50; ++trial) {
        VoxelMap map(cfg_depth6());
        std::vector<Vec3> pts;
        for (int i = 0; i < 50; ++i) {
            pts.emplace_back(rng.uniform(0, 2.4), rng.uniform(0, 2.4), rng.uniform(0, 2.4));
        }
        map.allocate_from_points(pts);
        for (int r = 0; r < 20; ++r) {
            Ray ray;
            ray.origin = Vec3(rng.uniform(-0.5, 2.9), rng.uniform(-0.5, 2.9),
                              rng.uniform(-0.5, 2.9));
            Vec3 d(rng.normal(), rng.normal(), rng.normal());
            while (d.norm() < 1e-6) {
                d = Vec3(rng.normal(), rng.normal(), rng.normal());
            }
            ray.direction = d.normalized();
            const double d_max = rng.uniform(0.5, 8.0);
            const HitSegments got = intersect(map, ray, d_max);
            const HitSegments want = brute_force_intersect(map, ray, d_max);
            REQUIRE(got.size() == want.size());
            for (size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].code == want[i].code);
                CHECK(got[i].t_entry == want[i].t_entry);
                CHECK(got[i].t_exit == want[i].t_exit);
            }
        }
    }
}

TEST_CASE("enlarging d_max never removes segments") {
    Rng rng(61);
    VoxelMap map(cfg_depth6());
    std::vector<Vec3> pts;
    for (int i = 0; i < 80; ++i) {
        pts.emplace_back(rng.uniform(0, 3.0), rng.uniform(0, 3.0), rng.uniform(0, 3.0));
    }
    map.allocate_from_points(pts);
    for (int r = 0; r < 200; ++r) {
        Ray ray;
        ray.origin = Vec3(rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(0, 3));
        Vec3 d(rng.normal(), rng.normal(), rng.normal());
        if (d.norm() < 1e-9) {
            continue;
        }
        ray.direction = d.normalized();
        const HitSegments small = intersect(map, ray, 2.0);
        const HitSegments large = intersect(map, ray, 6.0);
        if (static_cast<int>(large.size()) == max_hits(6.0, map.voxel_size())) {
            continue; // cap binds
        }
        REQUIRE(large.size() >= small.size());
        for (size_t i = 0; i < small.size(); ++i) {
            CHECK(small[i].code == large[i].code);
            CHECK(small[i].t_entry == large[i].t_entry);
        }
    }
}

TEST_CASE("stratified sampling") {
    Ray ray;
    ray.origin = Vec3::Zero();
    ray.direction = Vec3(0, 0, 1);
    SUBCASE("one segment of length 0.2 with step 0.05 gives 4 samples in quarters") {
        const HitSegments segs{HitSegment{0, 0.2, 0.4}};
        Rng rng(67);
        const RaySamples s = sample_points(segs, ray, 0.05, 64, rng);
        REQUIRE(s.depths.size() == 4);
        for (int i = 0; i < 4; ++i) {
            CHECK(s.depths[i] >= 0.2 + 0.05 * i - 1e-12);
            CHECK(s.depths[i] <= 0.2 + 0.05 * (i + 1) + 1e-12);
        }
        for (size_t i = 1; i < s.depths.size(); ++i) {
            CHECK(s.depths[i] > s.depths[i - 1]);
        }
    }
    SUBCASE("empty segments give empty samples") {
        Rng rng(67);
        CHECK(sample_points(HitSegments{}, ray, 0.05, 64, rng).depths.empty());
    }
    SUBCASE("seeded rng is bit-identical across runs") {
        const HitSegments segs{HitSegment{0, 0.1, 0.9}, HitSegment{1, 1.0, 1.7}};
        Rng r1(71), r2(71);
        const RaySamples a = sample_points(segs, ray, 0.02, 64, r1);
        const RaySamples b = sample_points(segs, ray, 0.02, 64, r2);
        CHECK(a.depths == b.depths);
    }
    SUBCASE("cap drops the farthest samples") {
        const HitSegments segs{HitSegment{0, 0.0, 5.0}};
        Rng rng(73);
        const RaySamples s = sample_points(segs, ray, 0.02, 16, rng);
        CHECK(s.depths.size() == 16);
        CHECK(s.depths.back() < 0.35); // only the nearest stratum survives
    }
    SUBCASE("trailing partial stratum kept only beyond half a step") {
        Rng rng(79);
        const RaySamples a = sample_points(HitSegments{HitSegment{0, 0.0, 0.126}}, ray, 0.05,
                                           64, rng);
        CHECK(a.depths.size() == 3); // 2 full + 0.026 > 0.025 partial
        const RaySamples b = sample_points(HitSegments{HitSegment{0, 0.0, 0.124}}, ray, 0.05,
                                           64, rng);
        CHECK(b.depths.size() == 2); // 0.024 < 0.025 partial dropped
    }
}

TEST_CASE("samples always land inside allocated voxels") {
    Rng rng(83);
    VoxelMap map(cfg_depth6());
    std::vector<Vec3> pts;
    for (int i = 0; i < 60; ++i) {
        pts.emplace_back(rng.uniform(0, 2.4), rng.uniform(0, 2.4), rng.uniform(0, 2.4));
    }
    map.allocate_from_points(pts);
    int total = 0;
    for (int r = 0; r < 300; ++r) {
        Ray ray;
        ray.origin = Vec3(rng.uniform(0, 2.4), rng.uniform(0, 2.4), rng.uniform(0, 2.4));
        Vec3 d(rng.normal(), rng.normal(), rng.normal());
        if (d.norm() < 1e-9) {
            continue;
        }
        ray.direction = d.normalized();
        const auto segs = intersect(map, ray, 8.0);
        const auto samples = sample_points(segs, ray, 0.02, 64, rng);
        for (const Vec3& p : samples.points) {
            auto code = map.try_code_of(map.voxel_of(p));
            REQUIRE(code.has_value());
            CHECK(map.allocated(*code));
            ++total;
        }
    }
    CHECK(total > 300);
}

} // TEST_SUITE
