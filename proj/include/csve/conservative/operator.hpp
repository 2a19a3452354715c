#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "csve/core/error.hpp"
#include "csve/tabular/evaluation.hpp"
#include "csve/tabular/mdp.hpp"

namespace csve::conservative {

using tabular::PolicyTable;
using tabular::QTable;
using tabular::StateDistribution;
using tabular::TabularMdp;
using tabular::ValueTable;

/// Penalty weight alpha, OOD sampling distribution d, and data distribution d_u.
struct CsvePenaltyConfig {
    double alpha;
    StateDistribution d;
    StateDistribution d_u;

    void validate() const {
        if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw InputError("CsvePenaltyConfig: alpha must be >= 0");
        if (d.size() != d_u.size()) throw InputError("CsvePenaltyConfig: d and d_u sizes differ");
        if (!d.support_within(d_u)) throw InputError("CsvePenaltyConfig: supp(d) not contained in supp(d_u)");
    }
};

/// Per-state density-ratio term d(s)/d_u(s) - 1. States outside supp(d_u) contribute nothing.
inline Eigen::VectorXd density_ratio_gap(const StateDistribution& d, const StateDistribution& d_u) {
    Eigen::VectorXd g(static_cast<Eigen::Index>(d.size()));
    for (std::size_t s = 0; s < d.size(); ++s) {
        if (d_u[s] > 0.0) {
            g[static_cast<Eigen::Index>(s)] = d[s] / d_u[s] - 1.0;
        } else {
            if (d[s] > 0.0) throw InputError("density_ratio_gap: d has mass outside supp(d_u)");
            g[static_cast<Eigen::Index>(s)] = 0.0;
        }
    }
    return g;
}

/// Empirical backup (B^pi V)(s) = E_{a~pi} [ r(s,a) + gamma sum_s' P(s'|s,a) V(s') ] on the given MDP.
inline Eigen::VectorXd bellman_backup(const Eigen::VectorXd& v, const PolicyTable& policy, const TabularMdp& mdp) {
    tabular::require_compatible(mdp, policy);
    if (static_cast<std::size_t>(v.size()) != mdp.num_states()) throw InputError("bellman_backup: value size mismatch");
    return tabular::policy_reward(mdp, policy) + mdp.discount() * (tabular::policy_transition(mdp, policy) * v);
}

/// One step of the conservative state-value iteration:
///   V'(s) = (B^pi V)(s) - alpha [d(s)/d_u(s) - 1]
inline ValueTable csve_operator(const ValueTable& v, const PolicyTable& policy, const TabularMdp& empirical,
                                const CsvePenaltyConfig& penalty) {
    penalty.validate();
    if (penalty.d.size() != empirical.num_states()) throw InputError("csve_operator: distribution size mismatch");
    return ValueTable(bellman_backup(v.values(), policy, empirical) -
                      penalty.alpha * density_ratio_gap(penalty.d, penalty.d_u));
}

/// The penalized least-squares objective minimized at every step, for a candidate value x:
///   1/2 E_{s~d_u}[(B^pi V(s) - x(s))^2] + alpha (E_{s~d}[x(s)] - E_{s~d_u}[x(s)])
/// It is separable across states; state_term gives the contribution of a single state.
class CsveObjective {
public:
    CsveObjective(const ValueTable& v, const PolicyTable& policy, const TabularMdp& empirical,
                  const CsvePenaltyConfig& penalty)
        : backup_(bellman_backup(v.values(), policy, empirical)), penalty_(penalty) {
        penalty_.validate();
    }

    double state_term(std::size_t s, double x) const {
        const double du = penalty_.d_u[s];
        const double diff = backup_[static_cast<Eigen::Index>(s)] - x;
        return 0.5 * du * diff * diff + penalty_.alpha * (penalty_.d[s] * x - du * x);
    }

    double operator()(const Eigen::VectorXd& x) const {
        double total = 0.0;
        for (std::size_t s = 0; s < penalty_.d.size(); ++s) total += state_term(s, x[static_cast<Eigen::Index>(s)]);
        return total;
    }

    const Eigen::VectorXd& backup() const { return backup_; }
    const CsvePenaltyConfig& penalty() const { return penalty_; }

private:
    Eigen::VectorXd backup_;
    CsvePenaltyConfig penalty_;
};

/// Minimizes the penalized objective state by state, working only from objective evaluations.
///
/// Each per-state term is a convex quadratic in x, so a three-point parabola fit recovers its
/// vertex; a second fit centred on the first estimate removes most of the rounding error.
/// States outside supp(d_u) have a flat objective and keep the plain backup value.
inline ValueTable csve_objective_argmin(const ValueTable& v, const PolicyTable& policy, const TabularMdp& empirical,
                                       const CsvePenaltyConfig& penalty) {
    const CsveObjective objective(v, policy, empirical, penalty);
    Eigen::VectorXd x = objective.backup();
    for (std::size_t s = 0; s < penalty.d.size(); ++s) {
        if (!(penalty.d_u[s] > 0.0)) continue;
        double centre = x[static_cast<Eigen::Index>(s)];
        for (int pass = 0; pass < 2; ++pass) {
            constexpr double h = 1.0;
            const double lo = objective.state_term(s, centre - h);
            const double mid = objective.state_term(s, centre);
            const double hi = objective.state_term(s, centre + h);
            const double curvature = hi - 2.0 * mid + lo;
            if (!(curvature > 0.0)) throw NumericError("csve_objective_argmin: objective not strictly convex");
            centre -= h * (hi - lo) / (2.0 * curvature);
        }
        x[static_cast<Eigen::Index>(s)] = centre;
    }
    return ValueTable(std::move(x));
}

struct FixedPointResult {
    ValueTable values;
    std::size_t iterations;
    double residual;
};

/// Picard iteration of csve_operator until ||T V - V||_inf <= tol.
inline FixedPointResult csve_fixed_point(const PolicyTable& policy, const TabularMdp& empirical,
                                         const CsvePenaltyConfig& penalty, double tol = 1e-10,
                                         std::size_t max_iters = 100000,
                                         const ValueTable* initial = nullptr) {
    if (!(tol > 0.0)) throw InputError("csve_fixed_point: tol must be positive");
    penalty.validate();
    const Eigen::VectorXd reward = tabular::policy_reward(empirical, policy);
    const Eigen::MatrixXd P = tabular::policy_transition(empirical, policy);
    const Eigen::VectorXd shift = reward - penalty.alpha * density_ratio_gap(penalty.d, penalty.d_u);
    Eigen::VectorXd v = initial ? initial->values()
                                : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(empirical.num_states()));
    for (std::size_t it = 0; it <= max_iters; ++it) {
        Eigen::VectorXd next = shift + empirical.discount() * (P * v);
        const double residual = (next - v).lpNorm<Eigen::Infinity>();
        if (residual <= tol) return {ValueTable(std::move(v)), it, residual};
        v = std::move(next);
    }
    throw ConvergenceError("csve_fixed_point: no convergence", max_iters);
}

/// Upper bound on Picard iterations for a contraction with modulus gamma starting at residual r0:
///   ceil(log(tol (1 - gamma) / r0) / log gamma) + 1
inline std::size_t picard_iteration_bound(double gamma, double initial_residual, double tol) {
    if (initial_residual <= tol) return 0;
    return static_cast<std::size_t>(std::ceil(std::log(tol * (1.0 - gamma) / initial_residual) / std::log(gamma))) + 1;
}

/// Tabular conservative Q-learning step in closed form:
///   Q'(s,a) = r(s,a) + gamma E_{s'} E_{a'~pi} Q(s',a') - alpha (mu(a|s)/pi_beta(a|s) - 1)
/// Pairs with pi_beta(a|s) = 0 (and therefore mu(a|s) = 0) carry no penalty.
inline QTable cql_q_operator(const QTable& q, const PolicyTable& policy, const PolicyTable& mu,
                             const PolicyTable& behavior, const TabularMdp& empirical, double alpha) {
    tabular::require_compatible(empirical, policy);
    tabular::require_compatible(empirical, mu);
    tabular::require_compatible(empirical, behavior);
    if (!(alpha >= 0.0)) throw InputError("cql_q_operator: alpha must be >= 0");
    const auto S = static_cast<Eigen::Index>(empirical.num_states());
    const auto A = static_cast<Eigen::Index>(empirical.num_actions());
    const Eigen::VectorXd next_value = q.values().cwiseProduct(policy.probs()).rowwise().sum();
    Eigen::MatrixXd out(S, A);
    for (Eigen::Index a = 0; a < A; ++a) {
        out.col(a) = empirical.reward().col(a) +
                     empirical.discount() * empirical.transition(static_cast<std::size_t>(a)) * next_value;
        for (Eigen::Index s = 0; s < S; ++s) {
            const double beta = behavior.probs()(s, a);
            const double m = mu.probs()(s, a);
            if (beta > 0.0) {
                out(s, a) -= alpha * (m / beta - 1.0);
            } else if (m > 0.0) {
                throw InputError("cql_q_operator: mu puts mass on an action the behavior policy never takes");
            }
        }
    }
    return QTable(std::move(out));
}

inline QTable cql_fixed_point(const PolicyTable& policy, const PolicyTable& mu, const PolicyTable& behavior,
                              const TabularMdp& empirical, double alpha, double tol = 1e-10,
                              std::size_t max_iters = 100000) {
    QTable q = QTable::zeros(empirical.num_states(), empirical.num_actions());
    for (std::size_t it = 0; it < max_iters; ++it) {
        QTable next = cql_q_operator(q, policy, mu, behavior, empirical, alpha);
        const double residual = (next.values() - q.values()).lpNorm<Eigen::Infinity>();
        q = std::move(next);
        if (residual <= tol) return q;
    }
    throw ConvergenceError("cql_fixed_point: no convergence", max_iters);
}

/// J(pi, M_hat) - alpha/(1-gamma) E_{s ~ d^pi_{M_hat}} [d(s)/d_u(s) - 1]
inline double penalized_objective(const PolicyTable& policy, const TabularMdp& empirical,
                                  const CsvePenaltyConfig& penalty) {
    penalty.validate();
    const double ret = tabular::policy_return(empirical, policy);
    if (penalty.alpha == 0.0) return ret;
    const auto occupancy = tabular::discounted_state_occupancy(empirical, policy);
    const double expected_gap = occupancy.probs().dot(density_ratio_gap(penalty.d, penalty.d_u));
    return ret - penalty.alpha / (1.0 - empirical.discount()) * expected_gap;
}

/// Q-values of the penalized MDP (reward r(s,a) - alpha g(s)) under a value estimate.
inline Eigen::MatrixXd penalized_q_values(const Eigen::VectorXd& v, const TabularMdp& empirical,
                                          const CsvePenaltyConfig& penalty) {
    const Eigen::VectorXd g = penalty.alpha * density_ratio_gap(penalty.d, penalty.d_u);
    Eigen::MatrixXd q(v.size(), static_cast<Eigen::Index>(empirical.num_actions()));
    for (std::size_t a = 0; a < empirical.num_actions(); ++a)
        q.col(static_cast<Eigen::Index>(a)) =
            empirical.reward().col(static_cast<Eigen::Index>(a)) - g + empirical.discount() * empirical.transition(a) * v;
    return q;
}

/// Policy iteration on the conservative fixed point: evaluate by a direct solve, act greedily
/// on the penalized Q-values, repeat until no action improves by more than improvement_tol.
/// `allowed` optionally masks actions per state (S x A, nonzero = allowed).
inline PolicyTable csve_greedy_policy(const TabularMdp& empirical, const CsvePenaltyConfig& penalty,
                                      const Eigen::MatrixXd* allowed = nullptr, double improvement_tol = 1e-12) {
    const auto S = empirical.num_states();
    const auto A = empirical.num_actions();
    std::vector<std::size_t> actions(S, 0);
    for (std::size_t s = 0; s < S && allowed; ++s) {
        std::size_t a = 0;
        while (a < A && (*allowed)(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) == 0.0) ++a;
        if (a == A) throw InputError("csve_greedy_policy: state with no allowed action");
        actions[s] = a;
    }
    for (std::size_t round = 0; round < 10000; ++round) {
        const auto policy = PolicyTable::deterministic(actions, A);
        const Eigen::VectorXd shift = tabular::policy_reward(empirical, policy) -
                                      penalty.alpha * density_ratio_gap(penalty.d, penalty.d_u);
        const Eigen::MatrixXd q =
            penalized_q_values(tabular::discounted_accumulate(empirical, policy, shift), empirical, penalty);
        bool changed = false;
        for (std::size_t s = 0; s < S; ++s) {
            const auto si = static_cast<Eigen::Index>(s);
            std::size_t best = actions[s];
            for (std::size_t a = 0; a < A; ++a) {
                if (allowed && (*allowed)(si, static_cast<Eigen::Index>(a)) == 0.0) continue;
                if (q(si, static_cast<Eigen::Index>(a)) > q(si, static_cast<Eigen::Index>(best)) + improvement_tol) best = a;
            }
            if (best != actions[s]) {
                actions[s] = best;
                changed = true;
            }
        }
        if (!changed) return policy;
    }
    throw ConvergenceError("csve_greedy_policy: policy iteration did not stabilize", 10000);
}

}  // namespace csve::conservative
