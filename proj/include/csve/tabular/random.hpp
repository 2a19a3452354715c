#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "csve/core/random.hpp"
#include "csve/tabular/mdp.hpp"

namespace csve::tabular {

/// Random MDP: Dirichlet(1) transition rows and initial distribution, rewards uniform in [-1,1].
inline TabularMdp random_mdp(std::size_t num_states, std::size_t num_actions, double discount, Rng& rng) {
    const auto S = static_cast<Eigen::Index>(num_states);
    std::vector<Eigen::MatrixXd> P(num_actions, Eigen::MatrixXd(S, S));
    for (std::size_t a = 0; a < num_actions; ++a)
        for (Eigen::Index s = 0; s < S; ++s) P[a].row(s) = dirichlet(rng, S).transpose();
    Eigen::MatrixXd R(S, static_cast<Eigen::Index>(num_actions));
    for (Eigen::Index s = 0; s < S; ++s)
        for (Eigen::Index a = 0; a < R.cols(); ++a) R(s, a) = uniform(rng, -1.0, 1.0);
    Eigen::VectorXd rho = dirichlet(rng, S);
    return TabularMdp(std::move(P), std::move(R), std::move(rho), discount, 1.0);
}

inline TabularMdp random_mdp(std::size_t num_states, std::size_t num_actions, double discount,
                             std::uint64_t seed) {
    Rng rng = make_rng(seed);
    return random_mdp(num_states, num_actions, discount, rng);
}

/// Policy with Dirichlet(1) rows.
inline PolicyTable random_policy(std::size_t num_states, std::size_t num_actions, Rng& rng) {
    Eigen::MatrixXd p(static_cast<Eigen::Index>(num_states), static_cast<Eigen::Index>(num_actions));
    for (Eigen::Index s = 0; s < p.rows(); ++s) p.row(s) = dirichlet(rng, p.cols()).transpose();
    return PolicyTable(std::move(p));
}

inline StateDistribution random_distribution(std::size_t num_states, Rng& rng,
                                             DistributionKind kind = DistributionKind::custom) {
    return normalized_distribution(dirichlet(rng, static_cast<Eigen::Index>(num_states)), kind);
}

/// Random distribution restricted to the given support mask.
inline StateDistribution random_distribution_on(const std::vector<bool>& support, Rng& rng,
                                                DistributionKind kind = DistributionKind::custom) {
    Eigen::VectorXd w = dirichlet(rng, static_cast<Eigen::Index>(support.size()));
    for (std::size_t s = 0; s < support.size(); ++s)
        if (!support[s]) w[static_cast<Eigen::Index>(s)] = 0.0;
    return normalized_distribution(std::move(w), kind);
}

}  // namespace csve::tabular
