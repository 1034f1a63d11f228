#pragma once

#include <Eigen/Dense>

namespace voxslam {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected first/second moment state. Kept separate from the parameter
// storage so sparse (per-vertex) and dense uses share one implementation.
struct AdamState {
    Eigen::VectorXd m, v;
    int64_t t = 0;

    explicit AdamState(Eigen::Index dim = 0)
        : m(Eigen::VectorXd::Zero(dim)), v(Eigen::VectorXd::Zero(dim)) {}

    void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad,
              const AdamConfig& cfg) {
        ++t;
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
        v = cfg.beta2 * v.array().matrix() + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        params.array() -=
            cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
    }

    // The step that would be applied without touching external storage;
    // used for pose twists where the increment feeds the exponential map.
    Eigen::VectorXd step_direction(const Eigen::Ref<const Eigen::VectorXd>& grad,
                                   const AdamConfig& cfg) {
        Eigen::VectorXd delta = Eigen::VectorXd::Zero(grad.size());
        step(delta, grad, cfg);
        return delta;
    }
};

} // namespace voxslam
