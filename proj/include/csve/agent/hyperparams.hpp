#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "csve/core/error.hpp"

namespace csve::agent {

enum class OodVariant { model_next_state, gaussian_noise };
enum class AlphaMode { adaptive, fixed };

inline const char* to_string(OodVariant v) { return v == OodVariant::model_next_state ? "model_next_state" : "gaussian_noise"; }
inline const char* to_string(AlphaMode m) { return m == AlphaMode::adaptive ? "adaptive" : "fixed"; }

inline OodVariant ood_variant_from_string(const std::string& s) {
    if (s == "model_next_state" || s == "model") return OodVariant::model_next_state;
    if (s == "gaussian_noise" || s == "noise") return OodVariant::gaussian_noise;
    throw ConfigError("unknown ood_variant '" + s + "'");
}

inline AlphaMode alpha_mode_from_string(const std::string& s) {
    if (s == "adaptive") return AlphaMode::adaptive;
    if (s == "fixed") return AlphaMode::fixed;
    throw ConfigError("unknown alpha_mode '" + s + "'");
}

/// Agent hyper-parameters. alpha, tau, beta, omega, gamma and the learning rates default to the
/// published settings; network width, batch size and step count default to desk-scale values.
struct CsveHyperParams {
    double alpha_init = 10.0;
    double tau = 10.0;
    double beta = 3.0;
    double lambda = 0.5;
    double omega = 0.005;
    double gamma = 0.99;
    double lr_alpha = 1e-3;
    AlphaMode alpha_mode = AlphaMode::adaptive;
    double actor_lr = 3e-4;
    double critic_lr = 1e-4;
    std::size_t n_action_samples = 10;
    std::size_t batch_size = 64;
    std::size_t total_steps = 50000;
    OodVariant ood_variant = OodVariant::model_next_state;
    double noise_variance = 0.1;  // sigma^2 of the gaussian_noise variant
    std::vector<std::size_t> hidden{64, 64};
    double weight_clip = 100.0;   // cap on exp(beta * advantage)
    std::size_t log_interval = 1000;
    std::size_t eval_interval = 1000;
    std::size_t n_eval = 10;

    void validate() const {
        auto finite = [](double x) { return std::isfinite(x); };
        if (!finite(alpha_init) || alpha_init < 0.0) throw ConfigError("alpha must be finite and >= 0");
        if (!finite(tau) || !(tau > 0.0)) throw ConfigError("tau must be > 0");
        if (!finite(beta) || !(beta > 0.0)) throw ConfigError("beta must be > 0");
        if (!finite(lambda) || lambda < 0.0) throw ConfigError("lambda must be >= 0");
        if (!(omega > 0.0 && omega < 1.0)) throw ConfigError("omega must lie in (0,1)");
        if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0,1)");
        if (!finite(lr_alpha) || lr_alpha < 0.0) throw ConfigError("lr_alpha must be >= 0");
        if (!finite(actor_lr) || !(actor_lr > 0.0) || !finite(critic_lr) || !(critic_lr > 0.0))
            throw ConfigError("learning rates must be > 0");
        if (n_action_samples == 0) throw ConfigError("n_action_samples must be >= 1");
        if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
        if (ood_variant == OodVariant::gaussian_noise && !(noise_variance > 0.0 && finite(noise_variance)))
            throw ConfigError("noise_variance must be > 0");
        if (!(weight_clip > 0.0)) throw ConfigError("weight_clip must be > 0");
        if (log_interval == 0 || eval_interval == 0) throw ConfigError("log and eval intervals must be >= 1");
        for (auto h : hidden)
            if (h == 0) throw ConfigError("hidden sizes must be positive");
    }

    /// The OOD penalty is skipped entirely when alpha is pinned at zero.
    bool penalty_active() const { return alpha_mode == AlphaMode::adaptive || alpha_init > 0.0; }
};

inline nlohmann::json to_json(const CsveHyperParams& hp) {
    return {{"alpha_init", hp.alpha_init},
            {"tau", hp.tau},
            {"beta", hp.beta},
            {"lambda", hp.lambda},
            {"omega", hp.omega},
            {"gamma", hp.gamma},
            {"lr_alpha", hp.lr_alpha},
            {"alpha_mode", to_string(hp.alpha_mode)},
            {"actor_lr", hp.actor_lr},
            {"critic_lr", hp.critic_lr},
            {"n_action_samples", hp.n_action_samples},
            {"batch_size", hp.batch_size},
            {"total_steps", hp.total_steps},
            {"ood_variant", to_string(hp.ood_variant)},
            {"noise_variance", hp.noise_variance},
            {"hidden", hp.hidden},
            {"weight_clip", hp.weight_clip},
            {"log_interval", hp.log_interval},
            {"eval_interval", hp.eval_interval},
            {"n_eval", hp.n_eval}};
}

inline CsveHyperParams hyperparams_from_json(const nlohmann::json& j) {
    CsveHyperParams hp;
    try {
        hp.alpha_init = j.at("alpha_init").get<double>();
        hp.tau = j.at("tau").get<double>();
        hp.beta = j.at("beta").get<double>();
        hp.lambda = j.at("lambda").get<double>();
        hp.omega = j.at("omega").get<double>();
        hp.gamma = j.at("gamma").get<double>();
        hp.lr_alpha = j.at("lr_alpha").get<double>();
        hp.alpha_mode = alpha_mode_from_string(j.at("alpha_mode").get<std::string>());
        hp.actor_lr = j.at("actor_lr").get<double>();
        hp.critic_lr = j.at("critic_lr").get<double>();
        hp.n_action_samples = j.at("n_action_samples").get<std::size_t>();
        hp.batch_size = j.at("batch_size").get<std::size_t>();
        hp.total_steps = j.at("total_steps").get<std::size_t>();
        hp.ood_variant = ood_variant_from_string(j.at("ood_variant").get<std::string>());
        hp.noise_variance = j.at("noise_variance").get<double>();
        hp.hidden = j.at("hidden").get<std::vector<std::size_t>>();
        hp.weight_clip = j.at("weight_clip").get<double>();
        hp.log_interval = j.at("log_interval").get<std::size_t>();
        hp.eval_interval = j.at("eval_interval").get<std::size_t>();
        hp.n_eval = j.at("n_eval").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("hyper-parameters: ") + e.what());
    }
    hp.validate();
    return hp;
}

}  // namespace csve::agent
