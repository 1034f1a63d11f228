#include "voxslam/evalkit.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace voxslam {

// ---------------------------------------------------------------------------
// ATE

AteResult ate(const Trajectory& est, const Trajectory& gt, bool align) {
    if (est.size() != gt.size() || est.size() == 0) {
        throw Error("ate: trajectory lengths differ or are empty");
    }
    const auto n = static_cast<Eigen::Index>(est.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(est.timestamps[i] - gt.timestamps[i]) > 1e-6) {
            throw Error("ate: timestamp mismatch at row " + std::to_string(i));
        }
    }
    Eigen::MatrixXd src(3, n), dst(3, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        src.col(i) = est.poses[i].translation();
        dst.col(i) = gt.poses[i].translation();
    }
    if (align) {
        const Eigen::Matrix4d T = Eigen::umeyama(src, dst, false);
        src = (T.topLeftCorner<3, 3>() * src).colwise() + Eigen::Vector3d(T.topRightCorner<3, 1>());
    }
    std::vector<double> res(n);
    double sq = 0, sum = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        res[i] = (src.col(i) - dst.col(i)).norm();
        sq += res[i] * res[i];
        sum += res[i];
    }
    std::sort(res.begin(), res.end());
    AteResult out;
    out.rmse = std::sqrt(sq / n);
    out.mean = sum / n;
    out.median = n % 2 == 1 ? res[n / 2] : 0.5 * (res[n / 2 - 1] + res[n / 2]);
    return out;
}

// ---------------------------------------------------------------------------
// Chamfer (grid-hash exact nearest neighbor)

namespace {

struct PointGrid {
    double cell;
    std::unordered_map<uint64_t, std::vector<int>> bins;
    std::span<const Vec3> points;

    static uint64_t key(const Eigen::Vector3i& c) {
        return pack_vertex_key(VertexKey{c.x(), c.y(), c.z()});
    }

    Eigen::Vector3i cell_of(const Vec3& p) const {
        return Eigen::Vector3i(static_cast<int>(std::floor(p.x() / cell)),
                               static_cast<int>(std::floor(p.y() / cell)),
                               static_cast<int>(std::floor(p.z() / cell)));
    }

    PointGrid(std::span<const Vec3> pts, double cell_size) : cell(cell_size), points(pts) {
        for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
            bins[key(cell_of(pts[i]))].push_back(i);
        }
    }

    // Exact nearest distance via expanding Chebyshev shells.
    double nearest(const Vec3& p) const {
        const Eigen::Vector3i c = cell_of(p);
        double best = std::numeric_limits<double>::infinity();
        for (int r = 0;; ++r) {
            if (best <= (r - 1) * cell) {
                break;
            }
            bool any_bin = false;
            for (int dx = -r; dx <= r; ++dx) {
                for (int dy = -r; dy <= r; ++dy) {
                    for (int dz = -r; dz <= r; ++dz) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) {
                            continue;
                        }
                        auto it = bins.find(key(c + Eigen::Vector3i(dx, dy, dz)));
                        if (it == bins.end()) {
                            continue;
                        }
                        any_bin = true;
                        for (int i : it->second) {
                            best = std::min(best, (points[i] - p).norm());
                        }
                    }
                }
            }
            // Safety stop once the shell radius clearly exceeds the data
            // extent and nothing was found.
            if (!any_bin && r > 2 && best == std::numeric_limits<double>::infinity() &&
                r * cell > 1e6) {
                break;
            }
        }
        return best;
    }
};

} // namespace

ChamferResult chamfer_metrics(std::span<const Vec3> recon, std::span<const Vec3> gt,
                              double threshold) {
    if (recon.empty() || gt.empty()) {
        throw Error("chamfer_metrics: point sets must be non-empty");
    }
    ChamferResult out;
    const double cell = std::max(threshold, 1e-3);
    {
        PointGrid gt_grid(gt, cell);
        double acc = 0;
        for (const Vec3& p : recon) {
            acc += gt_grid.nearest(p);
        }
        out.accuracy = acc / static_cast<double>(recon.size());
    }
    {
        PointGrid recon_grid(recon, cell);
        double comp = 0;
        int64_t within = 0;
        for (const Vec3& p : gt) {
            const double d = recon_grid.nearest(p);
            comp += d;
            within += d < threshold ? 1 : 0;
        }
        out.completion = comp / static_cast<double>(gt.size());
        out.completion_ratio = static_cast<double>(within) / static_cast<double>(gt.size());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Mesh extraction: Freudenthal (6-tet) subdivision of lattice cells. Tet
// edges lie on lattice segments shared between adjacent cells, so crossings
// deduplicate cleanly and the surface is crack-free.

double TriangleMesh::area() const {
    double a = 0;
    for (const auto& t : triangles) {
        a += 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
    }
    return a;
}

namespace {

struct EdgeKeyHash {
    size_t operator()(const std::pair<uint64_t, uint64_t>& e) const {
        return std::hash<uint64_t>()(e.first * 0x9e3779b97f4a7c15ull ^ e.second);
    }
};

struct Mesher {
    double cell;
    TriangleMesh mesh;
    std::unordered_map<uint64_t, double> values; // packed lattice point -> sdf
    std::unordered_map<std::pair<uint64_t, uint64_t>, int, EdgeKeyHash> edge_vertex;

    static uint64_t point_key(const Eigen::Vector3i& p) {
        return pack_vertex_key(VertexKey{p.x(), p.y(), p.z()});
    }

    double value_at(const Eigen::Vector3i& p) const { return values.at(point_key(p)); }

    Vec3 world(const Eigen::Vector3i& p) const { return p.cast<double>() * cell; }

    int crossing_vertex(const Eigen::Vector3i& a, const Eigen::Vector3i& b) {
        uint64_t ka = point_key(a), kb = point_key(b);
        if (ka > kb) {
            std::swap(ka, kb);
        }
        const auto ek = std::make_pair(ka, kb);
        auto it = edge_vertex.find(ek);
        if (it != edge_vertex.end()) {
            return it->second;
        }
        const double sa = value_at(a), sb = value_at(b);
        const double t = sa / (sa - sb);
        const Vec3 v = world(a) + t * (world(b) - world(a));
        const int idx = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(v);
        edge_vertex.emplace(ek, idx);
        return idx;
    }

    void emit(int a, int b, int c) {
        const Vec3& va = mesh.vertices[a];
        const double area2 =
            (mesh.vertices[b] - va).cross(mesh.vertices[c] - va).norm();
        if (area2 > 2e-12) { // drop zero-area (< 1e-12) triangles
            mesh.triangles.push_back({a, b, c});
        }
    }

    void march_tet(const std::array<Eigen::Vector3i, 4>& t) {
        int neg_mask = 0;
        for (int i = 0; i < 4; ++i) {
            neg_mask |= (value_at(t[i]) < 0.0) << i;
        }
        if (neg_mask == 0 || neg_mask == 0xf) {
            return;
        }
        int idx[4];
        const int count = [&] {
            int n = 0;
            for (int i = 0; i < 4; ++i) {
                if (neg_mask & (1 << i)) {
                    idx[n++] = i;
                }
            }
            for (int i = 0; i < 4; ++i) {
                if (!(neg_mask & (1 << i))) {
                    idx[n++] = i;
                }
            }
            return __builtin_popcount(static_cast<unsigned>(neg_mask));
        }();
        if (count == 1 || count == 3) {
            // idx[0] (count==1) or idx[3] (count==3) is the lone vertex.
            const int lone = count == 1 ? idx[0] : idx[3];
            int others[3], n = 0;
            for (int i = 0; i < 4; ++i) {
                if (i != lone) {
                    others[n++] = i;
                }
            }
            emit(crossing_vertex(t[lone], t[others[0]]),
                 crossing_vertex(t[lone], t[others[1]]),
                 crossing_vertex(t[lone], t[others[2]]));
        } else { // two negative, two positive
            const int a = idx[0], b = idx[1];  // negative
            const int c = idx[2], dd = idx[3]; // positive
            const int v0 = crossing_vertex(t[a], t[c]);
            const int v1 = crossing_vertex(t[a], t[dd]);
            const int v2 = crossing_vertex(t[b], t[dd]);
            const int v3 = crossing_vertex(t[b], t[c]);
            emit(v0, v1, v2);
            emit(v0, v2, v3);
        }
    }

    void march_cell(const Eigen::Vector3i& base) {
        static constexpr int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                            {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
        for (const auto& perm : perms) {
            std::array<Eigen::Vector3i, 4> tet;
            tet[0] = base;
            Eigen::Vector3i cur = base;
            for (int i = 0; i < 3; ++i) {
                cur[perm[i]] += 1;
                tet[i + 1] = cur;
            }
            march_tet(tet);
        }
    }
};

} // namespace

TriangleMesh extract_mesh(const VoxelMap& map, const DecoderParams& decoder,
                          int samples_per_voxel_axis, double outside_sdf) {
    if (map.empty()) {
        throw Error("extract_mesh: map is empty");
    }
    const int k = samples_per_voxel_axis;
    if (k < 1) {
        throw Error("extract_mesh: samples_per_voxel_axis must be >= 1");
    }
    const double cell = map.voxel_size() / k;
    const auto codes = map.sorted_codes();

    // Unique lattice points over all allocated voxels' sub-lattices.
    std::unordered_set<uint64_t> point_set;
    std::vector<Eigen::Vector3i> cells;
    for (MortonCode code : codes) {
        const Eigen::Vector3i v = map.voxel_of_code(code);
        for (int a = 0; a < k; ++a) {
            for (int b = 0; b < k; ++b) {
                for (int c = 0; c < k; ++c) {
                    cells.emplace_back(v.x() * k + a, v.y() * k + b, v.z() * k + c);
                }
            }
        }
        for (int a = 0; a <= k; ++a) {
            for (int b = 0; b <= k; ++b) {
                for (int c = 0; c <= k; ++c) {
                    point_set.insert(Mesher::point_key(
                        Eigen::Vector3i(v.x() * k + a, v.y() * k + b, v.z() * k + c)));
                }
            }
        }
    }
    std::vector<uint64_t> points(point_set.begin(), point_set.end());
    std::sort(points.begin(), points.end());

    // Decode the SDF at each lattice point. The containing voxel is chosen
    // integrally (a point on a face may belong to either adjacent voxel;
    // shared embeddings make the blend identical from both sides).
    Mesher mesher;
    mesher.cell = cell;
    const Eigen::Index dim = map.embedding_dim();
    const size_t batch = 16384;
    for (size_t lo = 0; lo < points.size(); lo += batch) {
        const size_t hi = std::min(points.size(), lo + batch);
        Eigen::MatrixXd X = Eigen::MatrixXd::Zero(dim, static_cast<Eigen::Index>(hi - lo));
        std::vector<char> inside(hi - lo, 0);
        for (size_t i = lo; i < hi; ++i) {
            const VertexKey pk = unpack_vertex_key(points[i]);
            const Eigen::Vector3i p(static_cast<int>(pk.x), static_cast<int>(pk.y),
                                    static_cast<int>(pk.z));
            // Candidate voxels containing this lattice point.
            Eigen::Vector3i chosen;
            bool found = false;
            for (int m = 0; m < 8 && !found; ++m) {
                Eigen::Vector3i v;
                bool valid = true;
                for (int a = 0; a < 3; ++a) {
                    const int fd = (p[a] >= 0 ? p[a] / k : -((-p[a] + k - 1) / k)); // floor div
                    int va = fd;
                    if (m & (1 << a)) {
                        if (p[a] != fd * k) {
                            valid = false;
                            break;
                        }
                        va = fd - 1;
                    }
                    v[a] = va;
                }
                if (!valid) {
                    continue;
                }
                if (auto code = map.try_code_of(v); code && map.allocated(*code)) {
                    chosen = v;
                    found = true;
                }
            }
            if (!found) {
                continue;
            }
            inside[i - lo] = 1;
            const auto keys = map.corner_keys(chosen);
            Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
            const Vec3 u((p.x() - chosen.x() * k) / static_cast<double>(k),
                         (p.y() - chosen.y() * k) / static_cast<double>(k),
                         (p.z() - chosen.z() * k) / static_cast<double>(k));
            for (int c8 = 0; c8 < 8; ++c8) {
                const double wx = (c8 & 1) ? u.x() : 1.0 - u.x();
                const double wy = ((c8 >> 1) & 1) ? u.y() : 1.0 - u.y();
                const double wz = ((c8 >> 2) & 1) ? u.z() : 1.0 - u.z();
                e += (wx * wy * wz) * map.embedding(keys[c8]);
            }
            X.col(static_cast<Eigen::Index>(i - lo)) = e;
        }
        Eigen::RowVectorXd sdf;
        decode_batch(decoder, X, nullptr, &sdf);
        for (size_t i = lo; i < hi; ++i) {
            mesher.values[points[i]] = inside[i - lo] ? sdf[static_cast<Eigen::Index>(i - lo)]
                                                      : outside_sdf;
        }
    }

    for (const Eigen::Vector3i& c : cells) {
        mesher.march_cell(c);
    }
    return std::move(mesher.mesh);
}

TriangleMesh extract_mesh_from_function(const std::function<double(const Vec3&)>& sdf,
                                        const Vec3& lo, const Vec3& hi, double cell_size) {
    Mesher mesher;
    mesher.cell = cell_size;
    Eigen::Vector3i ilo, ihi;
    for (int a = 0; a < 3; ++a) {
        ilo[a] = static_cast<int>(std::floor(lo[a] / cell_size));
        ihi[a] = static_cast<int>(std::ceil(hi[a] / cell_size));
    }
    for (int x = ilo.x(); x <= ihi.x(); ++x) {
        for (int y = ilo.y(); y <= ihi.y(); ++y) {
            for (int z = ilo.z(); z <= ihi.z(); ++z) {
                const Eigen::Vector3i p(x, y, z);
                mesher.values[Mesher::point_key(p)] = sdf(mesher.world(p));
            }
        }
    }
    for (int x = ilo.x(); x < ihi.x(); ++x) {
        for (int y = ilo.y(); y < ihi.y(); ++y) {
            for (int z = ilo.z(); z < ihi.z(); ++z) {
                mesher.march_cell(Eigen::Vector3i(x, y, z));
            }
        }
    }
    return std::move(mesher.mesh);
}

TriangleMesh extract_mesh_analytic(const SceneSpec& scene, const Vec3& lo, const Vec3& hi,
                                   double cell_size) {
    return extract_mesh_from_function(
        [&scene](const Vec3& p) { return scene_sdf(scene, p).distance; }, lo, hi, cell_size);
}

std::vector<Vec3> sample_mesh_points(const TriangleMesh& mesh, double points_per_m2, Rng& rng) {
    std::vector<Vec3> out;
    if (mesh.triangles.empty()) {
        return out;
    }
    std::vector<double> cum(mesh.triangles.size());
    double total = 0;
    for (size_t i = 0; i < mesh.triangles.size(); ++i) {
        const auto& t = mesh.triangles[i];
        total += 0.5 * (mesh.vertices[t[1]] - mesh.vertices[t[0]])
                           .cross(mesh.vertices[t[2]] - mesh.vertices[t[0]])
                           .norm();
        cum[i] = total;
    }
    const auto count = static_cast<int64_t>(std::ceil(total * points_per_m2));
    out.reserve(count);
    for (int64_t i = 0; i < count; ++i) {
        const double r = rng.uniform() * total;
        const size_t ti =
            std::lower_bound(cum.begin(), cum.end(), r) - cum.begin();
        const auto& t = mesh.triangles[std::min(ti, mesh.triangles.size() - 1)];
        double u = rng.uniform(), v = rng.uniform();
        if (u + v > 1.0) {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        out.push_back(mesh.vertices[t[0]] + u * (mesh.vertices[t[1]] - mesh.vertices[t[0]]) +
                      v * (mesh.vertices[t[2]] - mesh.vertices[t[0]]));
    }
    return out;
}

void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
    std::ofstream os(path);
    if (!os) {
        throw DatasetError("write_obj: cannot open " + path.string());
    }
    os.precision(9);
    for (const Vec3& v : mesh.vertices) {
        os << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    }
    for (const auto& t : mesh.triangles) {
        os << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    }
    if (!os) {
        throw DatasetError("write_obj: write failed for " + path.string());
    }
}

TriangleMesh read_obj(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw DatasetError("read_obj: cannot open " + path.string());
    }
    TriangleMesh mesh;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 v;
            ls >> v.x() >> v.y() >> v.z();
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::array<int, 3> t;
            ls >> t[0] >> t[1] >> t[2];
            for (int& i : t) {
                --i;
            }
            mesh.triangles.push_back(t);
        }
    }
    return mesh;
}

// ---------------------------------------------------------------------------
// SDF field oracle

SdfFieldError eval_sdf_field_fn(const VoxelMap& map,
                                const std::function<double(const Vec3&)>& predicted,
                                const SceneSpec& scene, double band, int64_t count, Rng& rng) {
    if (map.empty()) {
        throw Error("eval_sdf_field: map is empty");
    }
    const auto codes = map.sorted_codes();
    std::vector<double> errors;
    errors.reserve(count);
    const int64_t max_attempts = std::max<int64_t>(1000, 200 * count);
    for (int64_t attempt = 0; attempt < max_attempts &&
                              static_cast<int64_t>(errors.size()) < count;
         ++attempt) {
        const MortonCode code = codes[rng.uniform_index(codes.size())];
        const auto [lo, hi] = map.voxel_bounds(code);
        const Vec3 p(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()),
                     rng.uniform(lo.z(), hi.z()));
        const double analytic = scene_sdf(scene, p).distance;
        if (std::abs(analytic) > band) {
            continue;
        }
        errors.push_back(std::abs(predicted(p) - analytic));
    }
    if (static_cast<int64_t>(errors.size()) < 100) {
        throw InsufficientSamplesError("eval_sdf_field: found only " +
                                       std::to_string(errors.size()) +
                                       " in-band points (need 100)");
    }
    SdfFieldError out;
    out.samples = static_cast<int64_t>(errors.size());
    double sum = 0;
    for (double e : errors) {
        sum += e;
    }
    out.mae = sum / static_cast<double>(errors.size());
    std::sort(errors.begin(), errors.end());
    const size_t i90 = static_cast<size_t>(std::ceil(0.9 * errors.size())) - 1;
    out.p90 = errors[std::min(i90, errors.size() - 1)];
    return out;
}

SdfFieldError eval_sdf_field(const VoxelMap& map, const DecoderParams& decoder,
                             const SceneSpec& scene, double band, int64_t count, Rng& rng) {
    return eval_sdf_field_fn(
        map,
        [&](const Vec3& p) {
            const Eigen::VectorXd e = map.trilerp(p);
            return decode(decoder, e).second;
        },
        scene, band, count, rng);
}

} // namespace voxslam
