#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "csve/conservative/operator.hpp"
#include "csve/tabular/dataset.hpp"
#include "csve/tabular/evaluation.hpp"

namespace csve::conservative {

using tabular::SamplingErrorModel;
using tabular::TabularDataset;

inline constexpr double kReportTolerance = 1e-9;

/// Outcome of one executable check. For upper-bound style statements holds <=> lhs <= rhs + 1e-9.
struct TheoremReport {
    bool holds = false;
    double lhs = 0.0;
    double rhs = 0.0;
    double alpha_threshold = std::numeric_limits<double>::quiet_NaN();
    std::optional<std::size_t> witness;
    bool precondition_met = true;
    std::string note;
};

/// E_{s~d}[d(s)/d_u(s) - 1]
inline double expected_ratio_gap(const CsvePenaltyConfig& penalty) {
    return penalty.d.probs().dot(density_ratio_gap(penalty.d, penalty.d_u));
}

/// alpha >= E_{s~d} E_{a~pi}[c_rt R_max / ((1-gamma) sqrt|D(s,a)|)] / E_{s~d}[d(s)/d_u(s) - 1]
inline double alpha_threshold_theorem1(const TabularMdp& mdp, const PolicyTable& policy,
                                       const CsvePenaltyConfig& penalty, const TabularDataset& data,
                                       const SamplingErrorModel& sem) {
    penalty.validate();
    const double denominator = expected_ratio_gap(penalty);
    if (!(denominator > 0.0))
        throw InputError("alpha_threshold_theorem1: E_d[d/d_u - 1] is not positive (d equals d_u)");
    const double numerator = penalty.d.probs().dot(tabular::sampling_error_bounds(data, sem, mdp, policy));
    return numerator / denominator;
}

/// E_d[V_hat] <= E_d[V] where V_hat is the conservative fixed point on the empirical MDP and V
/// the exact value on the true MDP.
inline TheoremReport certify_theorem1(const TabularMdp& mdp, const TabularMdp& empirical, const PolicyTable& policy,
                                      const CsvePenaltyConfig& penalty, const TabularDataset& data,
                                      const SamplingErrorModel& sem) {
    TheoremReport report;
    try {
        report.alpha_threshold = alpha_threshold_theorem1(mdp, policy, penalty, data, sem);
        report.precondition_met = penalty.alpha >= report.alpha_threshold;
        if (!report.precondition_met) report.note = "alpha below threshold";
    } catch (const InputError& e) {
        report.precondition_met = false;
        report.note = e.what();
    }
    const auto v_hat = csve_fixed_point(policy, empirical, penalty, 1e-12).values;
    const auto v_true = tabular::exact_policy_evaluation(mdp, policy);
    report.lhs = penalty.d.probs().dot(v_hat.values());
    report.rhs = penalty.d.probs().dot(v_true.values());
    report.holds = report.lhs <= report.rhs + kReportTolerance;
    Eigen::Index worst = 0;
    (v_hat.values() - v_true.values()).maxCoeff(&worst);
    report.witness = static_cast<std::size_t>(worst);
    return report;
}

/// E_{d_u}[V_hat] <= E_{d_u}[V] + E_{d_u}[(I - gamma P^pi)^{-1} err] with err the per-state
/// sampling-error bound.
inline TheoremReport certify_theorem2(const TabularMdp& mdp, const TabularMdp& empirical, const PolicyTable& policy,
                                      const CsvePenaltyConfig& penalty, const TabularDataset& data,
                                      const SamplingErrorModel& sem) {
    TheoremReport report;
    const auto v_hat = csve_fixed_point(policy, empirical, penalty, 1e-12).values;
    const auto v_true = tabular::exact_policy_evaluation(mdp, policy);
    const Eigen::VectorXd err = tabular::sampling_error_bounds(data, sem, mdp, policy);
    const Eigen::VectorXd accumulated = tabular::discounted_accumulate(mdp, policy, err);
    report.lhs = penalty.d_u.probs().dot(v_hat.values());
    report.rhs = penalty.d_u.probs().dot(v_true.values()) + penalty.d_u.probs().dot(accumulated);
    report.holds = report.lhs <= report.rhs + kReportTolerance;
    return report;
}

/// Iterate pair used by the gap-expansion check.
struct GapExpansionTrace {
    Eigen::VectorXd penalized;    // V_hat^k
    Eigen::VectorXd unpenalized;  // V^k
};

/// Runs k steps from a shared start: V_hat^{j+1} = B V_hat^j - alpha g and V^{j+1} = B V^j, both
/// with the empirical backup.
inline GapExpansionTrace gap_expansion_iterates(const PolicyTable& policy, const TabularMdp& empirical,
                                                const CsvePenaltyConfig& penalty, std::size_t k,
                                                const Eigen::VectorXd& start) {
    GapExpansionTrace trace{start, start};
    const Eigen::VectorXd g = penalty.alpha * density_ratio_gap(penalty.d, penalty.d_u);
    for (std::size_t j = 0; j < k; ++j) {
        trace.penalized = bellman_backup(trace.penalized, policy, empirical) - g;
        trace.unpenalized = bellman_backup(trace.unpenalized, policy, empirical);
    }
    return trace;
}

/// The penalty weight above which step k+1 widens the d_u-vs-d value gap:
///   (E_d[gamma P^pi (V_hat^k - V^k)] - E_{d_u}[gamma P^pi (V_hat^k - V^k)]) / E_d[d/d_u - 1]
inline double alpha_threshold_theorem3(const PolicyTable& policy, const TabularMdp& empirical,
                                       const CsvePenaltyConfig& penalty, const GapExpansionTrace& trace) {
    const double denominator = expected_ratio_gap(penalty);
    if (!(denominator > 0.0))
        throw InputError("alpha_threshold_theorem3: E_d[d/d_u - 1] is not positive (d equals d_u)");
    const Eigen::VectorXd propagated =
        empirical.discount() * (tabular::policy_transition(empirical, policy) * (trace.penalized - trace.unpenalized));
    return (penalty.d.probs().dot(propagated) - penalty.d_u.probs().dot(propagated)) / denominator;
}

/// E_{d_u}[V_hat^{k+1}] - E_d[V_hat^{k+1}] > E_{d_u}[V^{k+1}] - E_d[V^{k+1}].
///
/// The first k penalized iterates use history_alpha (penalty.alpha when absent); step k+1 uses
/// penalty.alpha, which is the weight compared against the threshold.
/// lhs holds the penalized gap, rhs the unpenalized one; holds <=> lhs > rhs - 1e-9.
inline TheoremReport certify_theorem3(const PolicyTable& policy, const TabularMdp& empirical,
                                      const CsvePenaltyConfig& penalty, std::size_t k,
                                      std::optional<double> history_alpha = std::nullopt,
                                      const Eigen::VectorXd* start = nullptr) {
    penalty.validate();
    TheoremReport report;
    CsvePenaltyConfig history = penalty;
    if (history_alpha) history.alpha = *history_alpha;
    history.validate();
    const Eigen::VectorXd v0 =
        start ? *start : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(empirical.num_states()));
    const auto trace = gap_expansion_iterates(policy, empirical, history, k, v0);
    try {
        report.alpha_threshold = alpha_threshold_theorem3(policy, empirical, penalty, trace);
        report.precondition_met = penalty.alpha > report.alpha_threshold;
        if (!report.precondition_met) report.note = "alpha not above threshold";
    } catch (const InputError& e) {
        report.precondition_met = false;
        report.note = std::string("degenerate: ") + e.what();
        report.holds = false;
        return report;
    }
    const auto next = gap_expansion_iterates(policy, empirical, penalty, 1, trace.penalized).penalized;
    const Eigen::VectorXd next_plain = bellman_backup(trace.unpenalized, policy, empirical);
    const auto& d = penalty.d.probs();
    const auto& du = penalty.d_u.probs();
    report.lhs = du.dot(next) - d.dot(next);
    report.rhs = du.dot(next_plain) - d.dot(next_plain);
    report.holds = report.lhs > report.rhs - kReportTolerance;
    report.witness = k;
    return report;
}

/// Lemma check: v(rho, f) = E_{s~rho}[(rho(s) - d(s)) / d_f(s)] >= 0 with d_f = f d + (1 - f) rho.
/// Terms with rho(s) > 0 and d_f(s) = 0 are +infinity; they are noted and make v infinite.
inline TheoremReport certify_interpolation_lemma(const StateDistribution& rho, const StateDistribution& d, double f) {
    if (!(f >= 0.0 && f <= 1.0)) throw InputError("certify_interpolation_lemma: f must lie in [0,1]");
    if (rho.size() != d.size()) throw InputError("certify_interpolation_lemma: size mismatch");
    TheoremReport report;
    double v = 0.0;
    std::size_t infinite_terms = 0;
    for (std::size_t s = 0; s < rho.size(); ++s) {
        if (!(rho[s] > 0.0)) continue;
        const double df = f * d[s] + (1.0 - f) * rho[s];
        if (!(df > 0.0)) {
            ++infinite_terms;
            continue;
        }
        v += rho[s] * (rho[s] - d[s]) / df;
    }
    if (infinite_terms > 0) {
        v = std::numeric_limits<double>::infinity();
        report.note = std::to_string(infinite_terms) + " state(s) with rho > 0 and d_f = 0";
    }
    // Stored as -v <= 0 so the shared lhs <= rhs + tol convention applies.
    report.lhs = -v;
    report.rhs = 0.0;
    report.holds = v >= -1e-12;
    return report;
}

/// Compares the exhaustive argmax of the penalized objective over deterministic policies with the
/// greedy policy of the conservative fixed point. lhs = best enumerated objective, rhs = objective
/// of the greedy policy.
inline TheoremReport certify_theorem4(const TabularMdp& empirical, const CsvePenaltyConfig& penalty,
                                      double tie_tolerance = 1e-9) {
    const auto S = empirical.num_states();
    const auto A = empirical.num_actions();
    double total = 1.0;
    for (std::size_t s = 0; s < S; ++s) total *= static_cast<double>(A);
    if (total > 1e6) throw InputError("certify_theorem4: policy space too large to enumerate");
    std::vector<std::size_t> actions(S, 0), best_actions;
    double best = -std::numeric_limits<double>::infinity();
    for (;;) {
        const double value = penalized_objective(PolicyTable::deterministic(actions, A), empirical, penalty);
        if (value > best) {
            best = value;
            best_actions = actions;
        }
        std::size_t i = 0;
        while (i < S && ++actions[i] == A) actions[i++] = 0;
        if (i == S) break;
    }
    const auto greedy = csve_greedy_policy(empirical, penalty);
    TheoremReport report;
    report.lhs = best;
    report.rhs = penalized_objective(greedy, empirical, penalty);
    bool identical = true;
    for (std::size_t s = 0; s < S; ++s)
        if (greedy(s, best_actions[s]) != 1.0) {
            identical = false;
            report.witness = s;
        }
    report.holds = report.lhs <= report.rhs + tie_tolerance;
    report.note = identical ? "argmax policy identical" : "argmax differs only on value ties";
    if (!report.holds) report.note = "greedy policy is suboptimal for the penalized objective";
    return report;
}

/// Safe-improvement decomposition: zeta = sampling_term - improvement_term.
struct ZetaBreakdown {
    double sampling_term = 0.0;
    double improvement_term = 0.0;
    double zeta = 0.0;
    double return_star_true = 0.0;
    double return_beta_true = 0.0;
    bool inequality_holds = false;
};

/// sampling_term = 2 (C_r/(1-gamma) + gamma R_max C_T/(1-gamma)^2)
///                 * E_{s ~ d^{pi*}_{M_hat}} [ sqrt|A| / sqrt|D(s)| * sqrt(E_{a~pi*}[pi*(a|s)/pi_beta(a|s)]) ]
/// improvement_term = J(pi*, M_hat) - J(pi_beta, M_hat); the check is J(pi*, M) >= J(pi_beta, M) - zeta.
inline ZetaBreakdown zeta_safe_improvement(const TabularMdp& mdp, const TabularMdp& empirical,
                                           const TabularDataset& data, const PolicyTable& pi_star,
                                           const PolicyTable& pi_beta, const SamplingErrorModel& sem) {
    tabular::require_compatible(empirical, pi_star);
    tabular::require_compatible(empirical, pi_beta);
    const auto S = empirical.num_states();
    const auto A = empirical.num_actions();
    const double gamma = empirical.discount();
    const auto occupancy = tabular::discounted_state_occupancy(empirical, pi_star);
    double expectation = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
        double ratio = 0.0;
        for (std::size_t a = 0; a < A; ++a) {
            const double p = pi_star(s, a);
            if (p == 0.0) continue;
            if (!(pi_beta(s, a) > 0.0))
                throw InputError("zeta_safe_improvement: pi* takes an action with zero behavior probability at state " +
                                 std::to_string(s));
            ratio += p * p / pi_beta(s, a);
        }
        const double c = std::sqrt(static_cast<double>(A)) / std::sqrt(sem.effective_count(data.count(s)));
        expectation += occupancy[s] * c * std::sqrt(ratio);
    }
    ZetaBreakdown out;
    out.sampling_term = 2.0 * (sem.c_r / (1.0 - gamma) + gamma * mdp.r_max() * sem.c_p / ((1.0 - gamma) * (1.0 - gamma))) *
                        expectation;
    out.improvement_term = tabular::policy_return(empirical, pi_star) - tabular::policy_return(empirical, pi_beta);
    out.zeta = out.sampling_term - out.improvement_term;
    out.return_star_true = tabular::policy_return(mdp, pi_star);
    out.return_beta_true = tabular::policy_return(mdp, pi_beta);
    out.inequality_holds = out.return_star_true >= out.return_beta_true - out.zeta - kReportTolerance;
    return out;
}

}  // namespace csve::conservative
