#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "csve/core/error.hpp"

namespace csve::tabular {

inline constexpr double kProbabilityTolerance = 1e-12;

namespace detail {

inline void require_probability_vector(const Eigen::VectorXd& p, const std::string& what) {
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (!(p[i] >= 0.0 && p[i] <= 1.0))
            throw InputError(what + ": entry " + std::to_string(i) + " outside [0,1]");
    }
    if (std::abs(p.sum() - 1.0) > kProbabilityTolerance)
        throw InputError(what + ": entries sum to " + std::to_string(p.sum()) + ", expected 1");
}

inline void require_finite(const Eigen::MatrixXd& m, const std::string& what) {
    if (!m.allFinite()) throw InputError(what + ": non-finite entry");
}

}  // namespace detail

/// Finite MDP (S, A, P, r, rho, gamma) with reward bound R_max.
///
/// Transitions are stored one S x S row-stochastic matrix per action, so that
/// transition(a)(s, s') = P(s' | s, a).
class TabularMdp {
public:
    TabularMdp(std::vector<Eigen::MatrixXd> transition, Eigen::MatrixXd reward,
               Eigen::VectorXd initial_dist, double discount, double r_max)
        : transition_(std::move(transition)),
          reward_(std::move(reward)),
          initial_(std::move(initial_dist)),
          discount_(discount),
          r_max_(r_max) {
        validate();
    }

    std::size_t num_states() const { return static_cast<std::size_t>(initial_.size()); }
    std::size_t num_actions() const { return transition_.size(); }

    const Eigen::MatrixXd& transition(std::size_t action) const { return transition_.at(action); }
    double transition(std::size_t s, std::size_t a, std::size_t next) const {
        return transition_[a](static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(next));
    }
    const Eigen::MatrixXd& reward() const { return reward_; }
    double reward(std::size_t s, std::size_t a) const {
        return reward_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
    }
    const Eigen::VectorXd& initial_dist() const { return initial_; }
    double discount() const { return discount_; }
    double r_max() const { return r_max_; }

private:
    void validate() const {
        const auto S = initial_.size();
        if (S <= 0) throw InputError("TabularMdp: need at least one state");
        if (transition_.empty()) throw InputError("TabularMdp: need at least one action");
        if (!(discount_ > 0.0 && discount_ < 1.0))
            throw InputError("TabularMdp: discount must lie in (0,1)");
        if (!(r_max_ >= 0.0) || !std::isfinite(r_max_))
            throw InputError("TabularMdp: r_max must be a finite nonnegative number");
        const auto A = static_cast<Eigen::Index>(transition_.size());
        if (reward_.rows() != S || reward_.cols() != A)
            throw InputError("TabularMdp: reward table must be S x A");
        detail::require_finite(reward_, "TabularMdp reward");
        if ((reward_.array().abs() > r_max_).any())
            throw InputError("TabularMdp: |reward| exceeds r_max");
        detail::require_probability_vector(initial_, "TabularMdp initial_dist");
        for (Eigen::Index a = 0; a < A; ++a) {
            const auto& P = transition_[static_cast<std::size_t>(a)];
            if (P.rows() != S || P.cols() != S)
                throw InputError("TabularMdp: transition matrices must be S x S");
            for (Eigen::Index s = 0; s < S; ++s)
                detail::require_probability_vector(
                    P.row(s).transpose(),
                    "TabularMdp transition[" + std::to_string(s) + "][" + std::to_string(a) + "]");
        }
    }

    std::vector<Eigen::MatrixXd> transition_;
    Eigen::MatrixXd reward_;
    Eigen::VectorXd initial_;
    double discount_;
    double r_max_;
};

/// Stochastic policy pi(a|s) stored as an S x A row-stochastic table.
class PolicyTable {
public:
    explicit PolicyTable(Eigen::MatrixXd probs) : probs_(std::move(probs)) {
        if (probs_.rows() == 0 || probs_.cols() == 0) throw InputError("PolicyTable: empty table");
        for (Eigen::Index s = 0; s < probs_.rows(); ++s)
            detail::require_probability_vector(probs_.row(s).transpose(),
                                               "PolicyTable row " + std::to_string(s));
    }

    static PolicyTable uniform(std::size_t states, std::size_t actions) {
        return PolicyTable(Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(states),
                                                     static_cast<Eigen::Index>(actions),
                                                     1.0 / static_cast<double>(actions)));
    }

    static PolicyTable deterministic(const std::vector<std::size_t>& actions, std::size_t num_actions) {
        Eigen::MatrixXd p = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(actions.size()),
                                                  static_cast<Eigen::Index>(num_actions));
        for (std::size_t s = 0; s < actions.size(); ++s) {
            if (actions[s] >= num_actions) throw InputError("PolicyTable: action out of range");
            p(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(actions[s])) = 1.0;
        }
        return PolicyTable(std::move(p));
    }

    std::size_t num_states() const { return static_cast<std::size_t>(probs_.rows()); }
    std::size_t num_actions() const { return static_cast<std::size_t>(probs_.cols()); }
    const Eigen::MatrixXd& probs() const { return probs_; }
    double operator()(std::size_t s, std::size_t a) const {
        return probs_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
    }

private:
    Eigen::MatrixXd probs_;
};

/// State-value function over a finite state space.
class ValueTable {
public:
    explicit ValueTable(Eigen::VectorXd values) : values_(std::move(values)) {
        if (!values_.allFinite()) throw NumericError("ValueTable: non-finite value");
    }
    static ValueTable zeros(std::size_t states) {
        return ValueTable(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(states)));
    }
    const Eigen::VectorXd& values() const { return values_; }
    double operator[](std::size_t s) const { return values_[static_cast<Eigen::Index>(s)]; }
    std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

private:
    Eigen::VectorXd values_;
};

/// State-action value function, S x A.
class QTable {
public:
    explicit QTable(Eigen::MatrixXd values) : values_(std::move(values)) {
        if (!values_.allFinite()) throw NumericError("QTable: non-finite value");
    }
    static QTable zeros(std::size_t states, std::size_t actions) {
        return QTable(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(states),
                                            static_cast<Eigen::Index>(actions)));
    }
    const Eigen::MatrixXd& values() const { return values_; }
    double operator()(std::size_t s, std::size_t a) const {
        return values_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
    }

private:
    Eigen::MatrixXd values_;
};

enum class DistributionKind { empirical_marginal, discounted_occupancy, model_next_state, custom };

inline const char* to_string(DistributionKind kind) {
    switch (kind) {
        case DistributionKind::empirical_marginal: return "empirical_marginal";
        case DistributionKind::discounted_occupancy: return "discounted_occupancy";
        case DistributionKind::model_next_state: return "model_next_state";
        case DistributionKind::custom: return "custom";
    }
    return "custom";
}

/// Probability vector over states tagged with where it came from.
class StateDistribution {
public:
    StateDistribution(Eigen::VectorXd probs, DistributionKind kind)
        : probs_(std::move(probs)), kind_(kind) {
        detail::require_probability_vector(probs_, "StateDistribution");
    }
    const Eigen::VectorXd& probs() const { return probs_; }
    double operator[](std::size_t s) const { return probs_[static_cast<Eigen::Index>(s)]; }
    std::size_t size() const { return static_cast<std::size_t>(probs_.size()); }
    DistributionKind kind() const { return kind_; }

    /// Indices with strictly positive mass.
    std::vector<std::size_t> support() const {
        std::vector<std::size_t> out;
        for (Eigen::Index i = 0; i < probs_.size(); ++i)
            if (probs_[i] > 0.0) out.push_back(static_cast<std::size_t>(i));
        return out;
    }

    bool support_within(const StateDistribution& other) const {
        if (other.size() != size()) return false;
        for (Eigen::Index i = 0; i < probs_.size(); ++i)
            if (probs_[i] > 0.0 && !(other.probs_[i] > 0.0)) return false;
        return true;
    }

private:
    Eigen::VectorXd probs_;
    DistributionKind kind_;
};

/// Normalizes a nonnegative weight vector into a distribution, clearing rounding residue.
inline StateDistribution normalized_distribution(Eigen::VectorXd weights, DistributionKind kind) {
    weights = weights.cwiseMax(0.0);
    const double total = weights.sum();
    if (!(total > 0.0)) throw InputError("normalized_distribution: zero total mass");
    weights /= total;
    return StateDistribution(std::move(weights), kind);
}

/// r^pi(s) = sum_a pi(a|s) r(s,a)
inline Eigen::VectorXd policy_reward(const TabularMdp& mdp, const PolicyTable& policy) {
    return mdp.reward().cwiseProduct(policy.probs()).rowwise().sum();
}

/// P^pi(s,s') = sum_a pi(a|s) P(s'|s,a)
inline Eigen::MatrixXd policy_transition(const TabularMdp& mdp, const PolicyTable& policy) {
    const auto S = static_cast<Eigen::Index>(mdp.num_states());
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S, S);
    for (std::size_t a = 0; a < mdp.num_actions(); ++a)
        P.noalias() += policy.probs().col(static_cast<Eigen::Index>(a)).asDiagonal() * mdp.transition(a);
    return P;
}

inline void require_compatible(const TabularMdp& mdp, const PolicyTable& policy) {
    if (policy.num_states() != mdp.num_states() || policy.num_actions() != mdp.num_actions())
        throw InputError("policy shape does not match MDP");
}

// ---- JSON ---------------------------------------------------------------

inline nlohmann::json to_json(const TabularMdp& mdp) {
    const auto S = mdp.num_states();
    const auto A = mdp.num_actions();
    nlohmann::json transition = nlohmann::json::array();
    nlohmann::json reward = nlohmann::json::array();
    for (std::size_t s = 0; s < S; ++s) {
        nlohmann::json per_action = nlohmann::json::array();
        nlohmann::json rrow = nlohmann::json::array();
        for (std::size_t a = 0; a < A; ++a) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t n = 0; n < S; ++n) row.push_back(mdp.transition(s, a, n));
            per_action.push_back(std::move(row));
            rrow.push_back(mdp.reward(s, a));
        }
        transition.push_back(std::move(per_action));
        reward.push_back(std::move(rrow));
    }
    nlohmann::json initial = nlohmann::json::array();
    for (Eigen::Index s = 0; s < mdp.initial_dist().size(); ++s) initial.push_back(mdp.initial_dist()[s]);
    return {{"num_states", S},         {"num_actions", A},       {"discount", mdp.discount()},
            {"r_max", mdp.r_max()},    {"transition", transition}, {"reward", reward},
            {"initial_dist", initial}};
}

inline TabularMdp mdp_from_json(const nlohmann::json& j) {
    try {
        const auto S = j.at("num_states").get<std::size_t>();
        const auto A = j.at("num_actions").get<std::size_t>();
        const auto& tr = j.at("transition");
        const auto& rw = j.at("reward");
        const auto& init = j.at("initial_dist");
        if (tr.size() != S || rw.size() != S || init.size() != S)
            throw InputError("TabularMdp JSON: outer dimensions disagree with num_states");
        std::vector<Eigen::MatrixXd> P(A, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(S),
                                                                static_cast<Eigen::Index>(S)));
        Eigen::MatrixXd R(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(A));
        Eigen::VectorXd rho(static_cast<Eigen::Index>(S));
        for (std::size_t s = 0; s < S; ++s) {
            if (tr[s].size() != A || rw[s].size() != A)
                throw InputError("TabularMdp JSON: action dimension mismatch");
            for (std::size_t a = 0; a < A; ++a) {
                if (tr[s][a].size() != S) throw InputError("TabularMdp JSON: next-state dimension mismatch");
                for (std::size_t n = 0; n < S; ++n)
                    P[a](static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(n)) = tr[s][a][n].get<double>();
                R(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = rw[s][a].get<double>();
            }
            rho[static_cast<Eigen::Index>(s)] = init[s].get<double>();
        }
        return TabularMdp(std::move(P), std::move(R), std::move(rho), j.at("discount").get<double>(),
                          j.at("r_max").get<double>());
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("TabularMdp JSON: ") + e.what());
    }
}

}  // namespace csve::tabular
