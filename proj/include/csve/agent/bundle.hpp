#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "csve/agent/hyperparams.hpp"
#include "csve/core/error.hpp"
#include "csve/core/random.hpp"
#include "csve/env/scripted.hpp"
#include "csve/model/ensemble.hpp"
#include "csve/nn/adam.hpp"
#include "csve/nn/checkpoint.hpp"
#include "csve/nn/gaussian.hpp"
#include "csve/nn/mlp.hpp"

namespace csve::agent {

/// Tanh-squashed Gaussian policy head evaluated on a batch.
struct PolicyHead {
    Eigen::MatrixXd mean;
    Eigen::MatrixXd log_std;        // clamped to [kLogStdMin, kLogStdMax]
    Eigen::MatrixXd log_std_live;   // 1 where the clamp is inactive, 0 otherwise
};

/// Networks, optimizers and the adaptive penalty weight.
///
/// Networks see standardized states (dataset statistics) and actions rescaled to [-1, 1];
/// a_env = action_center + action_half * a.
struct AgentBundle {
    nn::Mlp v_net;
    nn::Mlp q_net;
    nn::Mlp q_target;
    nn::Mlp policy;
    double alpha = 0.0;
    nn::AdamState v_opt;
    nn::AdamState q_opt;
    nn::AdamState pi_opt;
    model::Normalizer state_norm;
    Eigen::VectorXd action_center;
    Eigen::VectorXd action_half;
    std::size_t step = 0;

    std::size_t state_dim() const { return static_cast<std::size_t>(state_norm.mean.size()); }
    std::size_t action_dim() const { return static_cast<std::size_t>(action_center.size()); }

    Eigen::MatrixXd normalize_states(const Eigen::MatrixXd& S) const { return state_norm.normalize(S); }
    Eigen::MatrixXd scale_actions(const Eigen::MatrixXd& A) const {
        return ((A.colwise() - action_center).array().colwise() / action_half.array()).matrix();
    }
    Eigen::MatrixXd unscale_actions(const Eigen::MatrixXd& A) const {
        return ((A.array().colwise() * action_half.array()).matrix().colwise() + action_center);
    }

    PolicyHead policy_head(const Eigen::MatrixXd& Sn) const { return split_head(policy.forward(Sn)); }

    PolicyHead split_head(const Eigen::MatrixXd& raw) const {
        const auto d = static_cast<Eigen::Index>(action_dim());
        PolicyHead h;
        h.mean = raw.topRows(d);
        h.log_std = nn::clamp_log_std(raw.bottomRows(d));
        h.log_std_live = ((raw.bottomRows(d).array() >= nn::kLogStdMin) && (raw.bottomRows(d).array() <= nn::kLogStdMax))
                             .cast<double>()
                             .matrix();
        return h;
    }

    /// tanh(mean) in env units, the deterministic evaluation action.
    Eigen::MatrixXd deterministic_actions(const Eigen::MatrixXd& states) const {
        return unscale_actions(policy_head(normalize_states(states)).mean.array().tanh().matrix());
    }

    env::Policy as_env_policy() const {
        return [this](const Eigen::VectorXd& s, Rng&) -> Eigen::VectorXd { return deterministic_actions(Eigen::MatrixXd(s)).col(0); };
    }
};

inline Eigen::MatrixXd stack_rows(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
    Eigen::MatrixXd X(top.rows() + bottom.rows(), top.cols());
    X << top, bottom;
    return X;
}

/// Fresh bundle: random networks, q_target = q_net, alpha = alpha_init.
inline AgentBundle make_bundle(const model::Normalizer& state_norm, const Eigen::VectorXd& action_low,
                               const Eigen::VectorXd& action_high, const CsveHyperParams& hp, Rng& rng) {
    hp.validate();
    if (action_low.size() != action_high.size() || action_low.size() == 0 || !((action_high - action_low).array() > 0.0).all())
        throw InputError("make_bundle: invalid action bounds");
    AgentBundle b;
    b.state_norm = state_norm;
    b.action_center = 0.5 * (action_low + action_high);
    b.action_half = 0.5 * (action_high - action_low);
    const std::size_t ds = b.state_dim(), da = b.action_dim();
    auto sizes = [&](std::size_t in, std::size_t out) {
        std::vector<std::size_t> s{in};
        s.insert(s.end(), hp.hidden.begin(), hp.hidden.end());
        s.push_back(out);
        return s;
    };
    b.v_net = nn::Mlp(sizes(ds, 1), nn::Activation::relu, rng);
    b.q_net = nn::Mlp(sizes(ds + da, 1), nn::Activation::relu, rng);
    b.q_target = b.q_net;
    b.policy = nn::Mlp(sizes(ds, 2 * da), nn::Activation::relu, rng, 0.01);
    b.alpha = hp.alpha_init;
    b.v_opt = nn::AdamState(static_cast<Eigen::Index>(b.v_net.num_params()), hp.critic_lr);
    b.q_opt = nn::AdamState(static_cast<Eigen::Index>(b.q_net.num_params()), hp.critic_lr);
    b.pi_opt = nn::AdamState(static_cast<Eigen::Index>(b.policy.num_params()), hp.actor_lr);
    return b;
}

// ---- checkpoints: one nn blob per network plus manifest.json -------------------

inline void save_bundle(const std::filesystem::path& dir, const AgentBundle& b, const CsveHyperParams& hp,
                        const nlohmann::json& extra = nlohmann::json::object()) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    nn::save_mlp((dir / "v_net.bin").string(), b.v_net);
    nn::save_mlp((dir / "q_net.bin").string(), b.q_net);
    nn::save_mlp((dir / "q_target.bin").string(), b.q_target);
    nn::save_mlp((dir / "policy.bin").string(), b.policy);
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    nlohmann::json j{{"schema_version", 1},
                     {"step", b.step},
                     {"alpha", b.alpha},
                     {"hyperparams", to_json(hp)},
                     {"state_mean", vec(b.state_norm.mean)},
                     {"state_std", vec(b.state_norm.std)},
                     {"action_center", vec(b.action_center)},
                     {"action_half", vec(b.action_half)},
                     {"extra", extra}};
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << j.dump(2) << "\n";
}

struct LoadedBundle {
    AgentBundle bundle;
    CsveHyperParams hp;
    nlohmann::json extra;
};

inline LoadedBundle load_bundle(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("missing checkpoint manifest in " + dir.string());
    LoadedBundle out;
    try {
        const auto j = nlohmann::json::parse(in);
        auto vec = [&](const char* key) {
            const auto v = j.at(key).get<std::vector<double>>();
            return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
        };
        out.hp = hyperparams_from_json(j.at("hyperparams"));
        out.bundle.step = j.at("step").get<std::size_t>();
        out.bundle.alpha = j.at("alpha").get<double>();
        out.bundle.state_norm = {vec("state_mean"), vec("state_std")};
        out.bundle.action_center = vec("action_center");
        out.bundle.action_half = vec("action_half");
        out.extra = j.value("extra", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("manifest.json: ") + e.what());
    } catch (const ConfigError& e) {
        throw IoError(std::string("manifest.json: ") + e.what());
    }
    auto& b = out.bundle;
    b.v_net = nn::load_mlp((dir / "v_net.bin").string());
    b.q_net = nn::load_mlp((dir / "q_net.bin").string());
    b.q_target = nn::load_mlp((dir / "q_target.bin").string());
    b.policy = nn::load_mlp((dir / "policy.bin").string());
    const auto ds = b.state_dim(), da = b.action_dim();
    if (b.v_net.input_size() != ds || b.q_net.input_size() != ds + da || b.policy.input_size() != ds ||
        b.policy.output_size() != 2 * da || b.q_target.layer_sizes() != b.q_net.layer_sizes())
        throw IoError("checkpoint networks do not match the manifest dimensions");
    b.v_opt = nn::AdamState(static_cast<Eigen::Index>(b.v_net.num_params()), out.hp.critic_lr);
    b.q_opt = nn::AdamState(static_cast<Eigen::Index>(b.q_net.num_params()), out.hp.critic_lr);
    b.pi_opt = nn::AdamState(static_cast<Eigen::Index>(b.policy.num_params()), out.hp.actor_lr);
    return out;
}

}  // namespace csve::agent
