#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "csve/core/error.hpp"
#include "csve/core/random.hpp"
#include "csve/tabular/mdp.hpp"

namespace csve::tabular {

struct TabularTransition {
    std::size_t state;
    std::size_t action;
    double reward;
    std::size_t next_state;
};

/// Offline dataset over index-encoded states and actions, with per-pair visit counts.
class TabularDataset {
public:
    TabularDataset(std::size_t num_states, std::size_t num_actions, std::vector<TabularTransition> transitions)
        : num_states_(num_states),
          num_actions_(num_actions),
          transitions_(std::move(transitions)),
          count_sa_(num_states * num_actions, 0),
          count_s_(num_states, 0) {
        if (num_states == 0 || num_actions == 0) throw InputError("TabularDataset: empty state or action space");
        for (const auto& t : transitions_) {
            if (t.state >= num_states || t.next_state >= num_states || t.action >= num_actions)
                throw InputError("TabularDataset: transition index out of range");
            if (!std::isfinite(t.reward)) throw InputError("TabularDataset: non-finite reward");
            ++count_sa_[t.state * num_actions + t.action];
            ++count_s_[t.state];
        }
    }

    std::size_t num_states() const { return num_states_; }
    std::size_t num_actions() const { return num_actions_; }
    std::size_t size() const { return transitions_.size(); }
    bool empty() const { return transitions_.empty(); }
    const std::vector<TabularTransition>& transitions() const { return transitions_; }

    std::size_t count(std::size_t s, std::size_t a) const { return count_sa_.at(s * num_actions_ + a); }
    std::size_t count(std::size_t s) const { return count_s_.at(s); }

    /// (s,a) pairs with no samples.
    std::vector<std::pair<std::size_t, std::size_t>> unvisited_pairs() const {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (std::size_t s = 0; s < num_states_; ++s)
            for (std::size_t a = 0; a < num_actions_; ++a)
                if (count(s, a) == 0) out.emplace_back(s, a);
        return out;
    }

private:
    std::size_t num_states_;
    std::size_t num_actions_;
    std::vector<TabularTransition> transitions_;
    std::vector<std::size_t> count_sa_;
    std::vector<std::size_t> count_s_;
};

/// Concentration constants bounding reward and transition estimation error per 1/sqrt(|D(s,a)|).
struct SamplingErrorModel {
    double c_r = 0.0;
    double c_p = 0.0;
    double c_rt = 0.0;
    double delta = 0.05;
    double unvisited_count_floor = 0.01;

    void validate() const {
        if (!(c_r >= 0.0) || !(c_p >= 0.0) || !(c_rt >= 0.0))
            throw InputError("SamplingErrorModel: constants must be nonnegative");
        if (c_rt < c_r) throw InputError("SamplingErrorModel: c_rt must dominate c_r");
        if (!(delta > 0.0 && delta < 1.0)) throw InputError("SamplingErrorModel: delta must lie in (0,1)");
        if (!(unvisited_count_floor > 0.0))
            throw InputError("SamplingErrorModel: unvisited_count_floor must be positive");
    }

    /// max(|D(s,a)|, floor)
    double effective_count(std::size_t count) const {
        return std::max(static_cast<double>(count), unvisited_count_floor);
    }
};

/// Fits the constants by inverting concentration tails at level delta, union-bounded over
/// the 2|S||A| reward and transition events.
///
/// Rewards in [-R_max, R_max] use Hoeffding: c_r = R_max sqrt(2 ln(2/delta')).
/// Transition rows use the L1 deviation bound: c_p = sqrt(2 (|S| ln 2 + ln(1/delta'))).
/// The combined backup constant satisfies c_rt R_max/(1-gamma) = c_r + 2 gamma c_p R_max/(1-gamma).
inline SamplingErrorModel calibrate_sampling_error(std::size_t num_states, std::size_t num_actions, double r_max,
                                                   double discount, double delta, double unvisited_floor = 0.01) {
    if (!(delta > 0.0 && delta < 1.0)) throw InputError("calibrate_sampling_error: delta must lie in (0,1)");
    if (!(r_max > 0.0)) throw InputError("calibrate_sampling_error: r_max must be positive");
    const double events = 2.0 * static_cast<double>(num_states * num_actions);
    const double delta_each = delta / events;
    SamplingErrorModel sem;
    sem.delta = delta;
    sem.unvisited_count_floor = unvisited_floor;
    sem.c_r = r_max * std::sqrt(2.0 * std::log(2.0 / delta_each));
    sem.c_p = std::sqrt(2.0 * (static_cast<double>(num_states) * std::log(2.0) + std::log(1.0 / delta_each)));
    sem.c_rt = sem.c_r * (1.0 - discount) / r_max + 2.0 * discount * sem.c_p;
    sem.c_rt = std::max(sem.c_rt, sem.c_r);
    return sem;
}

/// Draws n i.i.d. transitions with s ~ state_weights, a ~ behavior(.|s), s' ~ P(.|s,a), r = r(s,a).
inline TabularDataset sample_dataset(const TabularMdp& mdp, const Eigen::VectorXd& state_weights,
                                     const PolicyTable& behavior, std::size_t n, Rng& rng) {
    require_compatible(mdp, behavior);
    std::vector<TabularTransition> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = sample_categorical(rng, state_weights);
        const auto a = sample_categorical(rng, behavior.probs().row(static_cast<Eigen::Index>(s)));
        const auto next = sample_categorical(rng, mdp.transition(a).row(static_cast<Eigen::Index>(s)));
        out.push_back({s, a, mdp.reward(s, a), next});
    }
    return TabularDataset(mdp.num_states(), mdp.num_actions(), std::move(out));
}

/// Empirical behavior policy count(s,a)/count(s); uniform at unvisited states.
inline PolicyTable empirical_behavior_policy(const TabularDataset& data) {
    const auto S = static_cast<Eigen::Index>(data.num_states());
    const auto A = static_cast<Eigen::Index>(data.num_actions());
    Eigen::MatrixXd p(S, A);
    for (Eigen::Index s = 0; s < S; ++s) {
        const auto ns = data.count(static_cast<std::size_t>(s));
        for (Eigen::Index a = 0; a < A; ++a) {
            p(s, a) = ns == 0 ? 1.0 / static_cast<double>(A)
                              : static_cast<double>(data.count(static_cast<std::size_t>(s), static_cast<std::size_t>(a))) /
                                    static_cast<double>(ns);
        }
        p.row(s) /= p.row(s).sum();
    }
    return PolicyTable(std::move(p));
}

}  // namespace csve::tabular
