#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

#include "csve/core/error.hpp"

namespace csve::nn {

/// Adam with bias correction.
struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    std::int64_t step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    AdamState(Eigen::Index n, double learning_rate)
        : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)), lr(learning_rate) {}

    void apply(Eigen::VectorXd& params, const Eigen::VectorXd& grads) {
        if (params.size() != m.size() || grads.size() != m.size())
            throw InputError("AdamState: parameter/gradient size mismatch");
        ++step;
        m = beta1 * m + (1.0 - beta1) * grads;
        v = beta2 * v + (1.0 - beta2) * grads.cwiseAbs2();
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
};

}  // namespace csve::nn
