#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "csve/env/env.hpp"
#include "csve/tabular/evaluation.hpp"

namespace csve::env {

using Policy = std::function<Eigen::VectorXd(const Eigen::VectorXd&, Rng&)>;

enum class Tier { random, medium, expert };

inline Tier tier_from_string(const std::string& s) {
    if (s == "random") return Tier::random;
    if (s == "medium") return Tier::medium;
    if (s == "expert") return Tier::expert;
    throw InputError("unknown policy tier '" + s + "'");
}

inline const char* to_string(Tier t) {
    switch (t) {
        case Tier::random: return "random";
        case Tier::medium: return "medium";
        case Tier::expert: return "expert";
    }
    return "?";
}

/// Probability of replacing the expert action by a uniform one, per tier.
inline double tier_noise(const Environment& env, Tier tier) {
    const bool grid = env.spec().name == "gridworld";
    switch (tier) {
        case Tier::random: return 1.0;
        case Tier::medium: return grid ? 0.4 : 0.5;
        case Tier::expert: return grid ? 0.05 : 0.0;
    }
    return 1.0;
}

inline constexpr double kGridworldDiscount = Gridworld::kDiscount;

inline Eigen::VectorXd uniform_action(const EnvSpec& spec, Rng& rng) {
    Eigen::VectorXd a(static_cast<Eigen::Index>(spec.action_dim));
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = uniform(rng, spec.action_low[i], spec.action_high[i]);
    return a;
}

/// PD controller toward the origin, saturated at the action bound.
inline Eigen::VectorXd pointmass_expert_action(const Eigen::VectorXd& s) {
    constexpr double kp = 4.0, kd = 4.0;
    const Eigen::Vector2d a = -kp * s.head<2>() - kd * s.tail<2>();
    return a.cwiseMax(-1.0).cwiseMin(1.0);
}

/// Energy pumping far from upright, PD stabilization near it.
inline Eigen::VectorXd pendulum_expert_action(const Eigen::VectorXd& s) {
    const double th = Pendulum::angle(s);
    const double th_dot = s[2];
    double u;
    if (std::cos(th) > 0.85) {
        u = -(10.0 * th + 2.0 * th_dot);
    } else {
        const double energy = 0.5 * th_dot * th_dot + 1.5 * Pendulum::kGravity * std::cos(th);
        const double target = 1.5 * Pendulum::kGravity;
        u = (target - energy) * (th_dot >= 0.0 ? 1.0 : -1.0);
    }
    return Eigen::VectorXd::Constant(1, std::clamp(u, -Pendulum::kMaxTorque, Pendulum::kMaxTorque));
}

/// Greedy action of the exact optimal Q for the gridworld's tabular model.
class GridworldExpert {
public:
    explicit GridworldExpert(const Gridworld& env, double discount = kGridworldDiscount)
        : actions_(Gridworld::num_states()) {
        const auto q = tabular::optimal_q_values(env.tabular_model(discount));
        for (std::size_t s = 0; s < actions_.size(); ++s) {
            Eigen::Index best = 0;
            q.values().row(static_cast<Eigen::Index>(s)).maxCoeff(&best);
            actions_[s] = static_cast<std::size_t>(best);
        }
    }
    std::size_t action(std::size_t s) const { return actions_.at(s); }
    const std::vector<std::size_t>& actions() const { return actions_; }

private:
    std::vector<std::size_t> actions_;
};

/// Builds a fresh policy at the start of each episode.
using EpisodePolicy = std::function<Policy(Rng&)>;

/// Expert blended with uniform actions at mixing probability `noise`.
///   gridworld: mixed per step, i.e. epsilon-greedy on Q*.
///   continuous envs: mixed per episode; each episode follows the expert or the uniform policy.
class NoisyExpert {
public:
    explicit NoisyExpert(const Environment& env) : spec_(env.spec()) {
        if (spec_.name == "gridworld") grid_ = std::make_shared<GridworldExpert>(dynamic_cast<const Gridworld&>(env));
        else if (spec_.name == "pointmass2d") expert_ = pointmass_expert_action;
        else if (spec_.name == "pendulum") expert_ = pendulum_expert_action;
        else throw InputError("scripted policy: no scripted expert for '" + spec_.name + "'");
    }

    Policy episode(double noise, Rng& rng) const {
        if (!(noise >= 0.0 && noise <= 1.0)) throw InputError("scripted policy: noise must lie in [0,1]");
        if (grid_) {
            auto grid = grid_;
            return [grid, noise](const Eigen::VectorXd& s, Rng& r) {
                const auto a = uniform(r) < noise ? uniform_index(r, Gridworld::kNumActions)
                                                  : grid->action(Gridworld::state_index(s));
                return Gridworld::encode_action(a);
            };
        }
        if (noise > 0.0 && uniform(rng) < noise) {
            auto spec = spec_;
            return [spec](const Eigen::VectorXd&, Rng& r) { return uniform_action(spec, r); };
        }
        auto expert = expert_;
        return [expert](const Eigen::VectorXd& s, Rng&) { return expert(s); };
    }

private:
    EnvSpec spec_;
    std::shared_ptr<GridworldExpert> grid_;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> expert_;
};

inline EpisodePolicy mixture_policy(const Environment& env, double noise) {
    if (!(noise >= 0.0 && noise <= 1.0)) throw InputError("scripted policy: noise must lie in [0,1]");
    auto expert = std::make_shared<NoisyExpert>(env);
    return [expert, noise](Rng& rng) { return expert->episode(noise, rng); };
}

inline EpisodePolicy scripted_policy(const Environment& env, Tier tier) {
    return mixture_policy(env, tier_noise(env, tier));
}

/// Same policy every episode.
inline EpisodePolicy stationary(Policy policy) {
    return [policy = std::move(policy)](Rng&) { return policy; };
}

}  // namespace csve::env
