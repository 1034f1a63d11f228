#include "voxslam/trajectory.hpp"

#include <fstream>
#include <sstream>

#include "voxslam/errors.hpp"

namespace voxslam {

void Trajectory::push_back(double t, const Transform& T) {
    if (!timestamps.empty() && t <= timestamps.back()) {
        throw Error("trajectory: timestamps must be strictly increasing");
    }
    timestamps.push_back(t);
    poses.push_back(T);
}

void write_trajectory(const std::filesystem::path& path, const Trajectory& traj) {
    std::ofstream os(path);
    if (!os) {
        throw DatasetError("trajectory: cannot open " + path.string() + " for writing");
    }
    os.precision(17);
    for (size_t i = 0; i < traj.size(); ++i) {
        Eigen::Quaterniond q(traj.poses[i].rotation());
        q.normalize();
        const Vec3& t = traj.poses[i].translation();
        os << traj.timestamps[i] << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.x()
           << ' ' << q.y() << ' ' << q.z() << ' ' << q.w() << '\n';
    }
    if (!os) {
        throw DatasetError("trajectory: write failed for " + path.string());
    }
}

Trajectory read_trajectory(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw DatasetError("trajectory: cannot open " + path.string());
    }
    Trajectory traj;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::istringstream ls(line);
        double t, tx, ty, tz, qx, qy, qz, qw;
        if (!(ls >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
            throw DatasetError("trajectory: malformed line " + std::to_string(lineno) + " in " +
                               path.string());
        }
        Eigen::Quaterniond q(qw, qx, qy, qz);
        if (q.norm() == 0.0) {
            throw DatasetError("trajectory: zero quaternion at line " + std::to_string(lineno) +
                               " in " + path.string());
        }
        q.normalize();
        traj.push_back(t, Transform(q.toRotationMatrix(), Vec3(tx, ty, tz)));
    }
    return traj;
}

} // namespace voxslam
