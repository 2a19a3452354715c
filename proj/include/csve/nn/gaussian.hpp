#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "csve/core/error.hpp"

namespace csve::nn {

inline constexpr double kLogStdMin = -10.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kSquashEps = 1e-6;

inline Eigen::MatrixXd clamp_log_std(const Eigen::MatrixXd& log_std) {
    return log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

/// Diagonal Gaussian with mean and log standard deviation; log_std is kept in [-10, 2].
struct DiagGaussianHead {
    Eigen::VectorXd mean;
    Eigen::VectorXd log_std;

    DiagGaussianHead(Eigen::VectorXd mu, Eigen::VectorXd ls) : mean(std::move(mu)), log_std(clamp_log_std(ls)) {
        if (mean.size() != log_std.size()) throw InputError("DiagGaussianHead: mean/log_std size mismatch");
    }

    void clamp() { log_std = clamp_log_std(log_std); }
};

/// Column-wise log N(x; mean, exp(log_std)^2) for batched (dim x batch) arguments.
inline Eigen::VectorXd gaussian_log_prob(const Eigen::MatrixXd& mean, const Eigen::MatrixXd& log_std,
                                         const Eigen::MatrixXd& x) {
    if (mean.rows() != x.rows() || mean.cols() != x.cols() || log_std.rows() != x.rows() || log_std.cols() != x.cols())
        throw InputError("gaussian_log_prob: shape mismatch");
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    const Eigen::ArrayXXd z = (x - mean).array() * (-log_std.array()).exp();
    return (-0.5 * z.square() - log_std.array() - half_log_2pi).colwise().sum().transpose().matrix();
}

inline double gaussian_log_prob(const DiagGaussianHead& head, const Eigen::VectorXd& x) {
    return gaussian_log_prob(Eigen::MatrixXd(head.mean), Eigen::MatrixXd(head.log_std), Eigen::MatrixXd(x))[0];
}

/// Gradients of the column-wise log density with respect to mean and log_std.
struct GaussianGrad {
    Eigen::MatrixXd mean;
    Eigen::MatrixXd log_std;
};

inline GaussianGrad gaussian_log_prob_grad(const Eigen::MatrixXd& mean, const Eigen::MatrixXd& log_std,
                                           const Eigen::MatrixXd& x) {
    const Eigen::ArrayXXd inv_var = (-2.0 * log_std.array()).exp();
    const Eigen::ArrayXXd diff = (x - mean).array();
    return {(diff * inv_var).matrix(), (diff.square() * inv_var - 1.0).matrix()};
}

inline GaussianGrad gaussian_log_prob_grad(const DiagGaussianHead& head, const Eigen::VectorXd& x) {
    return gaussian_log_prob_grad(Eigen::MatrixXd(head.mean), Eigen::MatrixXd(head.log_std), Eigen::MatrixXd(x));
}

/// Reparameterized sample mean + exp(log_std) * noise.
inline Eigen::MatrixXd gaussian_sample(const Eigen::MatrixXd& mean, const Eigen::MatrixXd& log_std,
                                       const Eigen::MatrixXd& noise) {
    return mean + (log_std.array().exp() * noise.array()).matrix();
}

inline Eigen::VectorXd gaussian_sample(const DiagGaussianHead& head, const Eigen::VectorXd& noise) {
    if (noise.size() != head.mean.size()) throw InputError("gaussian_sample: noise size mismatch");
    return gaussian_sample(Eigen::MatrixXd(head.mean), Eigen::MatrixXd(head.log_std), Eigen::MatrixXd(noise)).col(0);
}

// ---- tanh-squashed policy variant ---------------------------------------

/// Pre-image atanh(a) with a clipped into the open interval.
inline Eigen::MatrixXd squash_preimage(const Eigen::MatrixXd& action) {
    const double edge = 1.0 - kSquashEps;
    return action.cwiseMax(-edge).cwiseMin(edge).array().atanh().matrix();
}

/// log pi(a) for a = tanh(u), u ~ N(mean, exp(log_std)^2):
///   log N(atanh(a)) - sum_i log(1 - a_i^2 + eps)
inline Eigen::VectorXd squashed_log_prob(const Eigen::MatrixXd& mean, const Eigen::MatrixXd& log_std,
                                         const Eigen::MatrixXd& action) {
    const Eigen::MatrixXd u = squash_preimage(action);
    const Eigen::MatrixXd a = u.array().tanh().matrix();
    const Eigen::VectorXd correction = (1.0 - a.array().square() + kSquashEps).log().colwise().sum().transpose().matrix();
    return gaussian_log_prob(mean, log_std, u) - correction;
}

/// The squash correction is parameter free, so the gradients are those of the Gaussian at atanh(a).
inline GaussianGrad squashed_log_prob_grad(const Eigen::MatrixXd& mean, const Eigen::MatrixXd& log_std,
                                           const Eigen::MatrixXd& action) {
    return gaussian_log_prob_grad(mean, log_std, squash_preimage(action));
}

}  // namespace csve::nn
