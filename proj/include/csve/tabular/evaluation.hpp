#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "csve/core/error.hpp"
#include "csve/tabular/dataset.hpp"
#include "csve/tabular/mdp.hpp"

namespace csve::tabular {

inline constexpr double kEvaluationResidualTolerance = 1e-10;

/// Solves (I - gamma P^pi) V = r^pi with a partial-pivot LU factorization.
inline ValueTable exact_policy_evaluation(const TabularMdp& mdp, const PolicyTable& policy) {
    require_compatible(mdp, policy);
    const auto S = static_cast<Eigen::Index>(mdp.num_states());
    const Eigen::MatrixXd system =
        Eigen::MatrixXd::Identity(S, S) - mdp.discount() * policy_transition(mdp, policy);
    const Eigen::VectorXd rhs = policy_reward(mdp, policy);
    const Eigen::VectorXd v = system.partialPivLu().solve(rhs);
    const double residual = (system * v - rhs).lpNorm<Eigen::Infinity>();
    if (!(residual <= kEvaluationResidualTolerance))
        throw NumericError("exact_policy_evaluation: residual " + std::to_string(residual) + " above tolerance");
    return ValueTable(v);
}

/// Returns (I - gamma P^pi)^{-1} x, the discounted accumulation of a per-state signal.
inline Eigen::VectorXd discounted_accumulate(const TabularMdp& mdp, const PolicyTable& policy,
                                             const Eigen::VectorXd& per_state) {
    const auto S = static_cast<Eigen::Index>(mdp.num_states());
    const Eigen::MatrixXd system =
        Eigen::MatrixXd::Identity(S, S) - mdp.discount() * policy_transition(mdp, policy);
    const Eigen::VectorXd x = system.partialPivLu().solve(per_state);
    const double scale = std::max(1.0, per_state.lpNorm<Eigen::Infinity>());
    if (!((system * x - per_state).lpNorm<Eigen::Infinity>() <= kEvaluationResidualTolerance * scale))
        throw NumericError("discounted_accumulate: residual above tolerance");
    return x;
}

/// d^pi = (1 - gamma) rho^T (I - gamma P^pi)^{-1}, optionally from a start distribution other than rho.
inline StateDistribution discounted_state_occupancy(const TabularMdp& mdp, const PolicyTable& policy,
                                                    const Eigen::VectorXd& start) {
    require_compatible(mdp, policy);
    const auto S = static_cast<Eigen::Index>(mdp.num_states());
    const Eigen::MatrixXd system =
        Eigen::MatrixXd::Identity(S, S) - mdp.discount() * policy_transition(mdp, policy).transpose();
    Eigen::VectorXd d = (1.0 - mdp.discount()) * system.partialPivLu().solve(start);
    if (!(std::abs(d.sum() - 1.0) <= kEvaluationResidualTolerance))
        throw NumericError("discounted_state_occupancy: mass " + std::to_string(d.sum()) + " differs from 1");
    return normalized_distribution(std::move(d), DistributionKind::discounted_occupancy);
}

inline StateDistribution discounted_state_occupancy(const TabularMdp& mdp, const PolicyTable& policy) {
    return discounted_state_occupancy(mdp, policy, mdp.initial_dist());
}

/// Stationary distribution of the policy's state chain: d^T P^pi = d^T.
///
/// A state distribution invariant under P^pi is its own discounted occupancy for every gamma,
/// which is the regime where expectation-level lower bounds transfer through (I - gamma P^pi)^{-1}.
inline StateDistribution stationary_distribution(const TabularMdp& mdp, const PolicyTable& policy) {
    require_compatible(mdp, policy);
    const auto S = static_cast<Eigen::Index>(mdp.num_states());
    const Eigen::MatrixXd P = policy_transition(mdp, policy);
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(S, S) - P.transpose();
    system.row(S - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(S);
    rhs[S - 1] = 1.0;
    const auto lu = system.fullPivLu();
    Eigen::VectorXd d;
    if (lu.rank() == S) {
        d = lu.solve(rhs);
    } else {
        // Several closed classes: Cesaro limit of the lazy chain started from rho.
        const Eigen::MatrixXd lazy = 0.5 * (Eigen::MatrixXd::Identity(S, S) + P);
        d = mdp.initial_dist();
        for (int i = 0; i < 100000; ++i) {
            Eigen::VectorXd next = lazy.transpose() * d;
            const double change = (next - d).lpNorm<1>();
            d = std::move(next);
            if (change < 1e-15) break;
        }
    }
    Eigen::VectorXd weights = d.cwiseMax(0.0);
    weights = weights.unaryExpr([](double x) { return x < 1e-15 ? 0.0 : x; });
    return normalized_distribution(std::move(weights), DistributionKind::custom);
}

/// Empirical MDP: mean rewards and next-state frequencies per visited pair; unvisited pairs get
/// a zero reward and a uniform next-state row so the result stays a valid MDP.
inline TabularMdp empirical_mdp(const TabularDataset& data, const TabularMdp& templ) {
    if (data.num_states() != templ.num_states() || data.num_actions() != templ.num_actions())
        throw InputError("empirical_mdp: dataset dimensions differ from template");
    const auto S = static_cast<Eigen::Index>(templ.num_states());
    const auto A = templ.num_actions();
    std::vector<Eigen::MatrixXd> P(A, Eigen::MatrixXd::Zero(S, S));
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(S, static_cast<Eigen::Index>(A));
    for (const auto& t : data.transitions()) {
        P[t.action](static_cast<Eigen::Index>(t.state), static_cast<Eigen::Index>(t.next_state)) += 1.0;
        R(static_cast<Eigen::Index>(t.state), static_cast<Eigen::Index>(t.action)) += t.reward;
    }
    for (std::size_t a = 0; a < A; ++a) {
        for (Eigen::Index s = 0; s < S; ++s) {
            const auto n = data.count(static_cast<std::size_t>(s), a);
            if (n == 0) {
                P[a].row(s).setConstant(1.0 / static_cast<double>(S));
            } else {
                P[a].row(s) /= static_cast<double>(n);
                R(s, static_cast<Eigen::Index>(a)) /= static_cast<double>(n);
            }
        }
    }
    const double r_max = std::max(templ.r_max(), R.cwiseAbs().maxCoeff());
    return TabularMdp(std::move(P), std::move(R), templ.initial_dist(), templ.discount(), r_max);
}

/// d_u(s) = |D(s)| / |D|
inline StateDistribution dataset_state_marginal(const TabularDataset& data) {
    if (data.empty()) throw InputError("dataset_state_marginal: empty dataset");
    Eigen::VectorXd d(static_cast<Eigen::Index>(data.num_states()));
    for (std::size_t s = 0; s < data.num_states(); ++s)
        d[static_cast<Eigen::Index>(s)] = static_cast<double>(data.count(s)) / static_cast<double>(data.size());
    return normalized_distribution(std::move(d), DistributionKind::empirical_marginal);
}

/// E_{a~pi(.|s)} [ c_rt R_max / ((1 - gamma) sqrt(max(|D(s,a)|, floor))) ]
inline double sampling_error_bound(const TabularDataset& data, const SamplingErrorModel& sem,
                                   const TabularMdp& mdp, const PolicyTable& policy, std::size_t state) {
    double total = 0.0;
    for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
        const double p = policy(state, a);
        if (p == 0.0) continue;
        total += p * sem.c_rt * mdp.r_max() /
                 ((1.0 - mdp.discount()) * std::sqrt(sem.effective_count(data.count(state, a))));
    }
    return total;
}

inline Eigen::VectorXd sampling_error_bounds(const TabularDataset& data, const SamplingErrorModel& sem,
                                             const TabularMdp& mdp, const PolicyTable& policy) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(mdp.num_states()));
    for (std::size_t s = 0; s < mdp.num_states(); ++s)
        out[static_cast<Eigen::Index>(s)] = sampling_error_bound(data, sem, mdp, policy, s);
    return out;
}

/// Optimal Q* by value iteration to a sup-norm Bellman residual below tol.
inline QTable optimal_q_values(const TabularMdp& mdp, double tol = 1e-12, std::size_t max_iters = 1000000) {
    const auto S = static_cast<Eigen::Index>(mdp.num_states());
    const auto A = static_cast<Eigen::Index>(mdp.num_actions());
    Eigen::VectorXd v = Eigen::VectorXd::Zero(S);
    Eigen::MatrixXd q(S, A);
    for (std::size_t it = 0; it < max_iters; ++it) {
        for (Eigen::Index a = 0; a < A; ++a)
            q.col(a) = mdp.reward().col(a) + mdp.discount() * mdp.transition(static_cast<std::size_t>(a)) * v;
        Eigen::VectorXd next = q.rowwise().maxCoeff();
        const double change = (next - v).lpNorm<Eigen::Infinity>();
        v = std::move(next);
        if (change <= tol) return QTable(q);
    }
    throw ConvergenceError("optimal_q_values: value iteration did not converge", max_iters);
}

/// Greedy deterministic policy; ties broken toward the lowest action index.
inline PolicyTable greedy_policy(const Eigen::MatrixXd& q) {
    std::vector<std::size_t> actions(static_cast<std::size_t>(q.rows()));
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        Eigen::Index best = 0;
        q.row(s).maxCoeff(&best);
        actions[static_cast<std::size_t>(s)] = static_cast<std::size_t>(best);
    }
    return PolicyTable::deterministic(actions, static_cast<std::size_t>(q.cols()));
}

/// J(pi, M) = E_{s~rho}[V^pi(s)]
inline double policy_return(const TabularMdp& mdp, const PolicyTable& policy) {
    return mdp.initial_dist().dot(exact_policy_evaluation(mdp, policy).values());
}

}  // namespace csve::tabular
