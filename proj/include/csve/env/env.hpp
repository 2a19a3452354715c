#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "csve/core/error.hpp"
#include "csve/core/random.hpp"
#include "csve/tabular/mdp.hpp"

namespace csve::env {

struct EnvSpec {
    std::string name;
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    Eigen::VectorXd action_low;
    Eigen::VectorXd action_high;
    std::size_t horizon = 1;
    double reward_scale = 1.0;
    double return_discount = 1.0;  // discount applied when reporting episode returns

    void validate() const {
        if (state_dim == 0 || action_dim == 0) throw InputError("EnvSpec: dimensions must be positive");
        if (horizon == 0) throw InputError("EnvSpec: horizon must be at least 1");
        if (!(return_discount > 0.0 && return_discount <= 1.0)) throw InputError("EnvSpec: return_discount must lie in (0,1]");
        if (action_low.size() != static_cast<Eigen::Index>(action_dim) ||
            action_high.size() != static_cast<Eigen::Index>(action_dim))
            throw InputError("EnvSpec: action bounds must match action_dim");
        if (!action_low.allFinite() || !action_high.allFinite() || (action_low.array() > action_high.array()).any())
            throw InputError("EnvSpec: action bounds must be finite and ordered");
    }
};

struct StepResult {
    Eigen::VectorXd next_state;
    double reward = 0.0;
    bool done = false;
    bool clipped = false;
};

/// Environments are stateless: the caller owns the state vector and the RNG.
class Environment {
public:
    virtual ~Environment() = default;
    virtual const EnvSpec& spec() const = 0;
    virtual Eigen::VectorXd reset(Rng& rng) const = 0;
    virtual StepResult step(const Eigen::VectorXd& state, const Eigen::VectorXd& action, Rng& rng) const = 0;

    /// Clips an action into the box; reports whether clipping changed it.
    Eigen::VectorXd clip_action(const Eigen::VectorXd& action, bool& clipped) const {
        const auto& s = spec();
        if (action.size() != static_cast<Eigen::Index>(s.action_dim)) throw InputError(s.name + ": action size mismatch");
        if (!action.allFinite()) throw InputError(s.name + ": non-finite action");
        Eigen::VectorXd out = action.cwiseMax(s.action_low).cwiseMin(s.action_high);
        clipped = out != action;
        return out;
    }

protected:
    void check_state(const Eigen::VectorXd& state) const {
        if (state.size() != static_cast<Eigen::Index>(spec().state_dim) || !state.allFinite())
            throw InputError(spec().name + ": invalid state");
    }
};

// ---- gridworld ----------------------------------------------------------

/// 8 x 8 grid, start (0,0), goal (7,7). Moving into the goal pays 1 and ends the episode; every
/// other step pays 0. With probability `slip` the chosen move is replaced by a uniformly random one.
///
/// The continuous interface encodes a move as a 2-vector; the dominant axis and its sign pick the
/// direction. Canonical encodings use magnitude 0.8 so they stay inside the squashed policy range.
class Gridworld final : public Environment {
public:
    static constexpr std::size_t kSide = 8;
    static constexpr std::size_t kNumActions = 4;  // right, up, left, down
    static constexpr double kActionMagnitude = 0.8;
    static constexpr double kDiscount = 0.95;  // reported returns are discounted at this rate

    explicit Gridworld(double slip = 0.1, std::size_t horizon = 100) : slip_(slip) {
        if (!(slip >= 0.0 && slip <= 1.0)) throw InputError("Gridworld: slip must lie in [0,1]");
        spec_ = {"gridworld", 2, 2, Eigen::VectorXd::Constant(2, -1.0), Eigen::VectorXd::Constant(2, 1.0), horizon, 1.0, kDiscount};
        spec_.validate();
    }

    const EnvSpec& spec() const override { return spec_; }
    double slip() const { return slip_; }

    static std::size_t num_states() { return kSide * kSide; }
    static std::size_t goal_index() { return index(kSide - 1, kSide - 1); }
    static std::size_t index(std::size_t x, std::size_t y) { return x + kSide * y; }

    static std::size_t state_index(const Eigen::VectorXd& state) {
        const auto x = std::lround(state[0]);
        const auto y = std::lround(state[1]);
        if (x < 0 || y < 0 || x >= static_cast<long>(kSide) || y >= static_cast<long>(kSide))
            throw InputError("gridworld: state outside the grid");
        return index(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
    }

    static Eigen::VectorXd state_vector(std::size_t index) {
        return Eigen::Vector2d(static_cast<double>(index % kSide), static_cast<double>(index / kSide));
    }

    static std::size_t decode_action(const Eigen::VectorXd& action) {
        if (std::abs(action[0]) >= std::abs(action[1])) return action[0] >= 0.0 ? 0 : 2;
        return action[1] >= 0.0 ? 1 : 3;
    }

    static Eigen::VectorXd encode_action(std::size_t a) {
        static const std::array<Eigen::Vector2d, 4> table{
            Eigen::Vector2d(kActionMagnitude, 0.0), Eigen::Vector2d(0.0, kActionMagnitude),
            Eigen::Vector2d(-kActionMagnitude, 0.0), Eigen::Vector2d(0.0, -kActionMagnitude)};
        return table.at(a);
    }

    /// Deterministic move; walls keep the agent in place.
    static std::size_t move(std::size_t s, std::size_t a) {
        long x = static_cast<long>(s % kSide), y = static_cast<long>(s / kSide);
        static constexpr long dx[4] = {1, 0, -1, 0};
        static constexpr long dy[4] = {0, 1, 0, -1};
        x = std::clamp(x + dx[a], 0L, static_cast<long>(kSide) - 1);
        y = std::clamp(y + dy[a], 0L, static_cast<long>(kSide) - 1);
        return index(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
    }

    Eigen::VectorXd reset(Rng&) const override { return state_vector(index(0, 0)); }

    StepResult step(const Eigen::VectorXd& state, const Eigen::VectorXd& action, Rng& rng) const override {
        check_state(state);
        StepResult out;
        const auto clipped_action = clip_action(action, out.clipped);
        const auto s = state_index(state);
        if (s == goal_index()) throw InputError("gridworld: stepping from the terminal goal state");
        auto a = decode_action(clipped_action);
        if (uniform(rng) < slip_) a = uniform_index(rng, kNumActions);
        const auto next = move(s, a);
        out.next_state = state_vector(next);
        out.reward = next == goal_index() ? 1.0 : 0.0;
        out.done = next == goal_index();
        return out;
    }

    /// Exact tabular model: r(s,a) = P(reach goal | s,a); the goal is absorbing with zero reward.
    tabular::TabularMdp tabular_model(double discount) const {
        const auto S = static_cast<Eigen::Index>(num_states());
        std::vector<Eigen::MatrixXd> P(kNumActions, Eigen::MatrixXd::Zero(S, S));
        Eigen::MatrixXd R = Eigen::MatrixXd::Zero(S, static_cast<Eigen::Index>(kNumActions));
        for (std::size_t s = 0; s < num_states(); ++s) {
            for (std::size_t a = 0; a < kNumActions; ++a) {
                auto& row = P[a];
                const auto si = static_cast<Eigen::Index>(s);
                if (s == goal_index()) {
                    row(si, si) = 1.0;
                    continue;
                }
                row(si, static_cast<Eigen::Index>(move(s, a))) += 1.0 - slip_;
                for (std::size_t b = 0; b < kNumActions; ++b)
                    row(si, static_cast<Eigen::Index>(move(s, b))) += slip_ / static_cast<double>(kNumActions);
                R(si, static_cast<Eigen::Index>(a)) = row(si, static_cast<Eigen::Index>(goal_index()));
            }
        }
        Eigen::VectorXd rho = Eigen::VectorXd::Zero(S);
        rho[static_cast<Eigen::Index>(index(0, 0))] = 1.0;
        return tabular::TabularMdp(std::move(P), std::move(R), std::move(rho), discount, 1.0);
    }

private:
    double slip_;
    EnvSpec spec_;
};

// ---- point mass -----------------------------------------------------------

/// Planar double integrator, state (px, py, vx, vy), action = acceleration in [-1,1]^2, dt = 0.05.
/// Reward -||p - goal|| - 0.01 ||a||^2 with goal at the origin; the episode ends within radius
/// 0.05 of the goal. Positions are confined to [-2,2] (velocity zeroed on contact) and speeds to
/// [-2,2] per axis. Starts uniform in [-1,1]^2 at rest.
class PointMass2d final : public Environment {
public:
    static constexpr double kDt = 0.05;
    static constexpr double kGoalRadius = 0.05;
    static constexpr double kBound = 2.0;
    static constexpr double kMaxSpeed = 2.0;

    explicit PointMass2d(std::size_t horizon = 200) {
        spec_ = {"pointmass2d", 4, 2, Eigen::VectorXd::Constant(2, -1.0), Eigen::VectorXd::Constant(2, 1.0), horizon, 1.0};
        spec_.validate();
    }

    const EnvSpec& spec() const override { return spec_; }

    Eigen::VectorXd reset(Rng& rng) const override {
        Eigen::VectorXd s = Eigen::VectorXd::Zero(4);
        s[0] = uniform(rng, -1.0, 1.0);
        s[1] = uniform(rng, -1.0, 1.0);
        return s;
    }

    StepResult step(const Eigen::VectorXd& state, const Eigen::VectorXd& action, Rng&) const override {
        check_state(state);
        StepResult out;
        const Eigen::VectorXd a = clip_action(action, out.clipped);
        const Eigen::Vector2d p = state.head<2>();
        const Eigen::Vector2d v = state.tail<2>();
        out.reward = -p.norm() - 0.01 * a.squaredNorm();
        Eigen::Vector2d p2 = p + v * kDt + 0.5 * a * kDt * kDt;
        Eigen::Vector2d v2 = (v + a * kDt).cwiseMax(-kMaxSpeed).cwiseMin(kMaxSpeed);
        for (int i = 0; i < 2; ++i) {
            if (std::abs(p2[i]) > kBound) {
                p2[i] = std::clamp(p2[i], -kBound, kBound);
                v2[i] = 0.0;
            }
        }
        out.next_state.resize(4);
        out.next_state << p2, v2;
        out.done = p2.norm() <= kGoalRadius;
        return out;
    }

private:
    EnvSpec spec_;
};

// ---- pendulum -------------------------------------------------------------

/// Underactuated swing-up: observation (cos th, sin th, th_dot), torque in [-2,2], g = 10,
/// m = l = 1, dt = 0.05, th_dot clipped to [-8,8]. th = 0 is upright.
/// Reward -(th^2 + 0.1 th_dot^2 + 0.001 u^2) with th wrapped to [-pi, pi).
class Pendulum final : public Environment {
public:
    static constexpr double kDt = 0.05;
    static constexpr double kGravity = 10.0;
    static constexpr double kMaxSpeed = 8.0;
    static constexpr double kMaxTorque = 2.0;

    explicit Pendulum(std::size_t horizon = 200) {
        spec_ = {"pendulum", 3, 1, Eigen::VectorXd::Constant(1, -kMaxTorque), Eigen::VectorXd::Constant(1, kMaxTorque),
                 horizon, 1.0};
        spec_.validate();
    }

    const EnvSpec& spec() const override { return spec_; }

    static double wrap(double th) {
        return std::fmod(std::fmod(th + std::numbers::pi, 2.0 * std::numbers::pi) + 2.0 * std::numbers::pi,
                         2.0 * std::numbers::pi) -
               std::numbers::pi;
    }

    static Eigen::VectorXd observe(double th, double th_dot) { return Eigen::Vector3d(std::cos(th), std::sin(th), th_dot); }
    static double angle(const Eigen::VectorXd& s) { return std::atan2(s[1], s[0]); }

    Eigen::VectorXd reset(Rng& rng) const override {
        return observe(uniform(rng, -std::numbers::pi, std::numbers::pi), uniform(rng, -1.0, 1.0));
    }

    StepResult step(const Eigen::VectorXd& state, const Eigen::VectorXd& action, Rng&) const override {
        check_state(state);
        StepResult out;
        const double u = clip_action(action, out.clipped)[0];
        const double th = angle(state);
        const double th_dot = state[2];
        out.reward = -(wrap(th) * wrap(th) + 0.1 * th_dot * th_dot + 0.001 * u * u);
        double new_dot = th_dot + (3.0 * kGravity / 2.0 * std::sin(th) + 3.0 * u) * kDt;
        new_dot = std::clamp(new_dot, -kMaxSpeed, kMaxSpeed);
        out.next_state = observe(th + new_dot * kDt, new_dot);
        return out;
    }

private:
    EnvSpec spec_;
};

inline const std::vector<std::string>& builtin_env_names() {
    static const std::vector<std::string> names{"gridworld", "pointmass2d", "pendulum"};
    return names;
}

inline std::unique_ptr<Environment> make_env(const std::string& name) {
    if (name == "gridworld") return std::make_unique<Gridworld>();
    if (name == "pointmass2d") return std::make_unique<PointMass2d>();
    if (name == "pendulum") return std::make_unique<Pendulum>();
    throw InputError("unknown environment '" + name + "'");
}

}  // namespace csve::env
