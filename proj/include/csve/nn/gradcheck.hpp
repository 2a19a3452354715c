#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace csve::nn {

/// Relative error |a - n| / max(|a|, |n|, floor) between an analytic derivative and its
/// numerical estimate.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Largest relative error between `analytic` and central differences of the scalar function
/// `loss` around `point`, perturbing each coordinate by +-h.
template <typename Loss>
double max_gradient_error(Loss&& loss, const Eigen::VectorXd& point, const Eigen::VectorXd& analytic,
                          double h = 1e-5, double floor = 1e-6) {
    Eigen::VectorXd x = point;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = loss(x);
        x[i] = saved - h;
        const double down = loss(x);
        x[i] = saved;
        worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h), floor));
    }
    return worst;
}

}  // namespace csve::nn
