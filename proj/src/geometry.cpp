#include "voxslam/geometry.hpp"

#include <cmath>

namespace voxslam {

namespace {
constexpr double kSmallAngle = 1e-8;
}

Transform se3_exp(const Twist& xi) {
    const double theta = xi.phi.norm();
    const Mat3 Phi = skew(xi.phi);
    const Mat3 Phi2 = Phi * Phi;
    Mat3 R, V;
    if (theta < kSmallAngle) {
        R = Mat3::Identity() + Phi + 0.5 * Phi2;
        V = Mat3::Identity() + 0.5 * Phi + (1.0 / 6.0) * Phi2;
    } else {
        const double t2 = theta * theta;
        const double s = std::sin(theta);
        const double c = std::cos(theta);
        R = Mat3::Identity() + (s / theta) * Phi + ((1.0 - c) / t2) * Phi2;
        V = Mat3::Identity() + ((1.0 - c) / t2) * Phi + ((theta - s) / (t2 * theta)) * Phi2;
    }
    return Transform(R, V * xi.rho);
}

Transform apply_increment(const Twist& xi, const Transform& T) {
    return se3_exp(xi).compose(T);
}

Intrinsics::Intrinsics(double fx_, double fy_, double cx_, double cy_, int w, int h)
    : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(w), height(h) {
    if (!(fx > 0) || !(fy > 0)) {
        throw Error("intrinsics: focal lengths must be positive");
    }
    if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height)) {
        throw Error("intrinsics: principal point outside image");
    }
}

Vec3 backproject(double u, double v, double d, const Intrinsics& K) {
    if (!(d > 0) || !std::isfinite(d)) {
        throw InvalidDepthError("backproject: depth must be positive and finite");
    }
    return Vec3((u - K.cx) * d / K.fx, (v - K.cy) * d / K.fy, d);
}

PixelDepth project(const Vec3& p, const Intrinsics& K) {
    if (!(p.z() > 0)) {
        throw BehindCameraError("project: point is behind the camera");
    }
    return PixelDepth{K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy, p.z()};
}

} // namespace voxslam
