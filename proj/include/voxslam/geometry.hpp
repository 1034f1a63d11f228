#pragma once

#include <Eigen/Dense>

#include "voxslam/errors.hpp"

namespace voxslam {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// se(3) element: translational part rho, rotational part phi.
struct Twist {
    Vec3 rho = Vec3::Zero();
    Vec3 phi = Vec3::Zero();

    Twist() = default;
    Twist(const Vec3& r, const Vec3& p) : rho(r), phi(p) {}

    static Twist from_vec(const Vec6& v) { return Twist(v.head<3>(), v.tail<3>()); }
    Vec6 vec() const {
        Vec6 v;
        v << rho, phi;
        return v;
    }
    double norm() const { return vec().norm(); }
};

// Rigid body transform (camera-to-world throughout the pipeline). Rotations
// are stored as matrices; composition re-orthonormalizes periodically so that
// chains of up to 1e4 stay orthonormal within 1e-9.
class Transform {
  public:
    Transform() : R_(Mat3::Identity()), t_(Vec3::Zero()) {}
    Transform(const Mat3& R, const Vec3& t) : R_(R), t_(t) {}

    static Transform identity() { return Transform(); }

    const Mat3& rotation() const { return R_; }
    const Vec3& translation() const { return t_; }

    Vec3 apply(const Vec3& p) const { return R_ * p + t_; }

    // this * rhs
    Transform compose(const Transform& rhs) const {
        Transform out(R_ * rhs.R_, R_ * rhs.t_ + t_);
        out.chain_ = std::max(chain_, rhs.chain_) + 1;
        if (out.chain_ >= kRenormInterval) {
            out.orthonormalize();
        }
        return out;
    }

    Transform inverse() const {
        Mat3 Rt = R_.transpose();
        return Transform(Rt, -(Rt * t_));
    }

    void orthonormalize() {
        Eigen::Quaterniond q(R_);
        q.normalize();
        R_ = q.toRotationMatrix();
        chain_ = 0;
    }

    bool approx_equal(const Transform& o, double tol) const {
        return (R_ - o.R_).cwiseAbs().maxCoeff() <= tol && (t_ - o.t_).cwiseAbs().maxCoeff() <= tol;
    }

  private:
    static constexpr int kRenormInterval = 64;
    Mat3 R_;
    Vec3 t_;
    int chain_ = 0;
};

inline Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

// Exponential map se(3) -> SE(3). Rodrigues for the rotation, left Jacobian
// for the translation; second-order series below the small-angle threshold.
Transform se3_exp(const Twist& xi);

// Left-multiplicative pose update: exp(xi) * T.
Transform apply_increment(const Twist& xi, const Transform& T);

struct Intrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;

    Intrinsics() = default;
    Intrinsics(double fx_, double fy_, double cx_, double cy_, int w, int h);
};

// Pixel + depth -> camera-frame point. Throws InvalidDepthError for d <= 0.
Vec3 backproject(double u, double v, double d, const Intrinsics& K);

struct PixelDepth {
    double u, v, d;
};

// Camera-frame point -> pixel + depth. Throws BehindCameraError for z <= 0.
PixelDepth project(const Vec3& p_cam, const Intrinsics& K);

} // namespace voxslam
