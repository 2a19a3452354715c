#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "csve/core/error.hpp"
#include "csve/core/random.hpp"
#include "csve/env/dataset.hpp"
#include "csve/nn/adam.hpp"
#include "csve/nn/checkpoint.hpp"
#include "csve/nn/mlp.hpp"

namespace csve::model {

inline constexpr double kStdFloor = 1e-6;

struct EnsembleConfig {
    std::size_t members = 5;
    std::vector<std::size_t> hidden{64, 64};
    nn::Activation activation = nn::Activation::tanh;
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    double holdout_fraction = 0.1;
    std::size_t patience = 5;         // evaluations without holdout improvement before stopping
    std::size_t eval_interval = 1000;  // gradient steps between holdout evaluations
    std::size_t max_steps = 30000;     // per member
    double min_log_std = -6.0;    // bounds on the predicted log std, in normalized units
    double max_log_std = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (members == 0) throw ConfigError("ensemble: members must be at least 1");
        if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw ConfigError("ensemble: holdout fraction must lie in (0,1)");
        if (!(learning_rate > 0.0)) throw ConfigError("ensemble: learning rate must be positive");
        if (batch_size == 0 || eval_interval == 0 || max_steps == 0 || patience == 0)
            throw ConfigError("ensemble: batch size, eval interval, max steps and patience must be positive");
        if (!(min_log_std < max_log_std)) throw ConfigError("ensemble: min_log_std must be below max_log_std");
        for (auto h : hidden)
            if (h == 0) throw ConfigError("ensemble: hidden sizes must be positive");
    }
};

/// Per-dimension affine standardization; std entries are floored at kStdFloor.
struct Normalizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;

    static Normalizer fit(const Eigen::MatrixXd& X) {
        if (X.cols() == 0) throw InputError("Normalizer: no samples");
        Normalizer n;
        n.mean = X.rowwise().mean();
        n.std = ((X.colwise() - n.mean).array().square().rowwise().mean()).sqrt().matrix().cwiseMax(kStdFloor);
        return n;
    }

    Eigen::MatrixXd normalize(const Eigen::MatrixXd& X) const {
        return ((X.colwise() - mean).array().colwise() / std.array()).matrix();
    }
    Eigen::MatrixXd denormalize(const Eigen::MatrixXd& Z) const {
        return ((Z.array().colwise() * std.array()).matrix().colwise() + mean);
    }
};

struct EpochRecord {
    std::size_t step = 0;
    double train_nll = 0.0;
    double holdout_nll = 0.0;
};

/// Normalized-space prediction of one member: mean and log std of (delta_s, r) per column.
struct MemberOutput {
    Eigen::MatrixXd mean;
    Eigen::MatrixXd log_std;
};

struct SampledTransitions {
    Eigen::MatrixXd next_states;
    Eigen::VectorXd rewards;
};

/// Ensemble-average mean prediction in raw units.
struct MeanPrediction {
    Eigen::MatrixXd next_states;
    Eigen::VectorXd rewards;
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

/// B Gaussian networks over (delta_s, r) given (s, a). Members only predict one step ahead.
class EnsembleDynamicsModel {
public:
    EnsembleDynamicsModel() = default;

    /// Fits normalization statistics on `data` and initializes members randomly (untrained).
    static EnsembleDynamicsModel initialize(const env::ContinuousTransitionDataset& data, const EnsembleConfig& config) {
        config.validate();
        if (data.size() == 0) throw InputError("ensemble: empty dataset");
        EnsembleDynamicsModel m;
        m.config_ = config;
        m.state_dim_ = data.state_dim();
        m.action_dim_ = data.action_dim();
        m.input_norm_ = Normalizer::fit(stack_inputs(data.states, data.actions));
        m.output_norm_ = Normalizer::fit(stack_targets(data));
        Rng rng = make_rng(config.seed, 0);
        for (std::size_t b = 0; b < config.members; ++b) m.members_.emplace_back(m.layer_sizes(), config.activation, rng);
        m.history_.assign(config.members, {});
        return m;
    }

    std::size_t num_members() const { return members_.size(); }
    std::size_t state_dim() const { return state_dim_; }
    std::size_t action_dim() const { return action_dim_; }
    std::size_t output_dim() const { return state_dim_ + 1; }
    bool trained() const { return trained_; }
    const EnsembleConfig& config() const { return config_; }
    const Normalizer& input_normalizer() const { return input_norm_; }
    const Normalizer& output_normalizer() const { return output_norm_; }
    const std::vector<nn::Mlp>& members() const { return members_; }
    std::vector<nn::Mlp>& members() { return members_; }
    const std::vector<std::vector<EpochRecord>>& history() const { return history_; }

    std::vector<std::size_t> layer_sizes() const {
        std::vector<std::size_t> sizes{state_dim_ + action_dim_};
        sizes.insert(sizes.end(), config_.hidden.begin(), config_.hidden.end());
        sizes.push_back(2 * output_dim());
        return sizes;
    }

    static Eigen::MatrixXd stack_inputs(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) {
        if (states.cols() != actions.cols()) throw InputError("ensemble: state and action batch sizes differ");
        Eigen::MatrixXd X(states.rows() + actions.rows(), states.cols());
        X << states, actions;
        return X;
    }

    static Eigen::MatrixXd stack_targets(const env::ContinuousTransitionDataset& d) {
        Eigen::MatrixXd Y(d.states.rows() + 1, d.states.cols());
        Y << d.next_states - d.states, d.rewards.transpose();
        return Y;
    }

    /// Maps a raw network head into (min_log_std, max_log_std) with a logistic squash.
    double bound_log_std(double raw) const {
        return config_.min_log_std + (config_.max_log_std - config_.min_log_std) * detail::sigmoid(raw);
    }
    double bound_log_std_derivative(double raw) const {
        const double g = detail::sigmoid(raw);
        return (config_.max_log_std - config_.min_log_std) * g * (1.0 - g);
    }

    MemberOutput predict_member(std::size_t b, const Eigen::MatrixXd& normalized_inputs) const {
        return split(members_.at(b).forward(normalized_inputs));
    }

    MemberOutput split(const Eigen::MatrixXd& raw) const {
        const auto d = static_cast<Eigen::Index>(output_dim());
        MemberOutput out{raw.topRows(d), raw.bottomRows(d)};
        out.log_std = out.log_std.unaryExpr([this](double x) { return bound_log_std(x); });
        return out;
    }

    /// Draws one member uniformly per column, samples its Gaussian and returns s + delta_s and r.
    SampledTransitions sample_next(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions, Rng& rng) const {
        require_trained();
        check_batch(states, actions);
        const Eigen::MatrixXd Xn = input_norm_.normalize(stack_inputs(states, actions));
        const auto d = static_cast<Eigen::Index>(output_dim());
        const Eigen::Index n = states.cols();
        std::vector<std::size_t> pick(static_cast<std::size_t>(n));
        Eigen::MatrixXd noise(d, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            pick[static_cast<std::size_t>(i)] = uniform_index(rng, members_.size());
            for (Eigen::Index k = 0; k < d; ++k) noise(k, i) = standard_normal(rng);
        }
        Eigen::MatrixXd Yn(d, n);
        for (std::size_t b = 0; b < members_.size(); ++b) {
            std::vector<Eigen::Index> cols;
            for (Eigen::Index i = 0; i < n; ++i)
                if (pick[static_cast<std::size_t>(i)] == b) cols.push_back(i);
            if (cols.empty()) continue;
            const MemberOutput o = predict_member(b, Xn(Eigen::all, cols));
            for (std::size_t c = 0; c < cols.size(); ++c) {
                const auto j = static_cast<Eigen::Index>(c);
                Yn.col(cols[c]) = o.mean.col(j) + (o.log_std.col(j).array().exp() * noise.col(cols[c]).array()).matrix();
            }
        }
        const Eigen::MatrixXd Y = output_norm_.denormalize(Yn);
        return {states + Y.topRows(static_cast<Eigen::Index>(state_dim_)), Y.row(d - 1).transpose()};
    }

    std::pair<Eigen::VectorXd, double> sample_next(const Eigen::VectorXd& state, const Eigen::VectorXd& action, Rng& rng) const {
        const auto out = sample_next(Eigen::MatrixXd(state), Eigen::MatrixXd(action), rng);
        return {out.next_states.col(0), out.rewards[0]};
    }

    /// Per-member means in raw units, one (state_dim + 1) x N matrix per member.
    std::vector<Eigen::MatrixXd> member_means(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const {
        check_batch(states, actions);
        const Eigen::MatrixXd Xn = input_norm_.normalize(stack_inputs(states, actions));
        std::vector<Eigen::MatrixXd> out;
        for (std::size_t b = 0; b < members_.size(); ++b) out.push_back(output_norm_.denormalize(predict_member(b, Xn).mean));
        return out;
    }

    MeanPrediction mean_prediction(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const {
        const auto means = member_means(states, actions);
        Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(means[0].rows(), means[0].cols());
        for (const auto& m : means) avg += m;
        avg /= static_cast<double>(means.size());
        const auto s = static_cast<Eigen::Index>(state_dim_);
        return {states + avg.topRows(s), avg.row(s).transpose()};
    }

    /// Ensemble-mean prediction together with the member tapes needed for action gradients.
    struct MeanLinearization {
        MeanPrediction prediction;
        std::vector<nn::Mlp::Tape> tapes;
    };

    MeanLinearization linearize(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const {
        check_batch(states, actions);
        const Eigen::MatrixXd Xn = input_norm_.normalize(stack_inputs(states, actions));
        const auto d = static_cast<Eigen::Index>(output_dim());
        MeanLinearization lin;
        lin.tapes.resize(members_.size());
        Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(d, states.cols());
        for (std::size_t b = 0; b < members_.size(); ++b) avg += members_[b].forward(Xn, lin.tapes[b]).topRows(d);
        avg = output_norm_.denormalize(avg / static_cast<double>(members_.size()));
        const auto s = static_cast<Eigen::Index>(state_dim_);
        lin.prediction = {states + avg.topRows(s), avg.row(s).transpose()};
        return lin;
    }

    /// Vector-Jacobian product of the ensemble-mean prediction with respect to the actions:
    /// returns sum_i <cot_next_i, d next_i / d a_i> + cot_r_i * d r_i / d a_i per column.
    /// Model parameters are not touched.
    Eigen::MatrixXd mean_action_vjp(const MeanLinearization& lin, const Eigen::MatrixXd& cot_next_states,
                                    const Eigen::VectorXd& cot_rewards) const {
        const auto d = static_cast<Eigen::Index>(output_dim());
        const auto n = lin.prediction.next_states.cols();
        if (lin.tapes.size() != members_.size()) throw InputError("ensemble: linearization does not match the model");
        if (cot_next_states.rows() != static_cast<Eigen::Index>(state_dim_) || cot_next_states.cols() != n || cot_rewards.size() != n)
            throw InputError("ensemble: cotangent shape mismatch");
        Eigen::MatrixXd cot_mean(d, n);
        cot_mean << cot_next_states, cot_rewards.transpose();
        cot_mean = (cot_mean.array().colwise() * output_norm_.std.array()).matrix() / static_cast<double>(members_.size());
        Eigen::MatrixXd cot = Eigen::MatrixXd::Zero(2 * d, n);
        cot.topRows(d) = cot_mean;
        Eigen::MatrixXd grad_in = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(state_dim_ + action_dim_), n);
        for (std::size_t b = 0; b < members_.size(); ++b) grad_in += members_[b].backward_input(lin.tapes[b], cot);
        const auto a = static_cast<Eigen::Index>(action_dim_);
        return (grad_in.bottomRows(a).array().colwise() / input_norm_.std.tail(a).array()).matrix();
    }

    Eigen::MatrixXd mean_action_vjp(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                                    const Eigen::MatrixXd& cot_next_states, const Eigen::VectorXd& cot_rewards) const {
        return mean_action_vjp(linearize(states, actions), cot_next_states, cot_rewards);
    }

    /// Mean Gaussian negative log-likelihood (summed over output dims) of normalized targets.
    double nll(std::size_t b, const Eigen::MatrixXd& Xn, const Eigen::MatrixXd& Yn) const {
        const auto o = predict_member(b, Xn);
        const double c = 0.5 * std::log(2.0 * std::numbers::pi);
        const Eigen::ArrayXXd z = (Yn - o.mean).array() * (-o.log_std.array()).exp();
        return (0.5 * z.square() + o.log_std.array() + c).sum() / static_cast<double>(Xn.cols());
    }

    /// Loss and parameter gradient of the mean NLL for member b.
    double nll_and_grad(std::size_t b, const Eigen::MatrixXd& Xn, const Eigen::MatrixXd& Yn, Eigen::VectorXd& grad) const {
        const auto& net = members_.at(b);
        nn::Mlp::Tape tape;
        const Eigen::MatrixXd raw = net.forward(Xn, tape);
        const auto d = static_cast<Eigen::Index>(output_dim());
        const double n = static_cast<double>(Xn.cols());
        const double c = 0.5 * std::log(2.0 * std::numbers::pi);
        Eigen::MatrixXd cot(2 * d, Xn.cols());
        double loss = 0.0;
        for (Eigen::Index i = 0; i < Xn.cols(); ++i) {
            for (Eigen::Index k = 0; k < d; ++k) {
                const double r = raw(d + k, i);
                const double ls = bound_log_std(r);
                const double inv_var = std::exp(-2.0 * ls);
                const double err = Yn(k, i) - raw(k, i);
                loss += 0.5 * err * err * inv_var + ls + c;
                cot(k, i) = -err * inv_var / n;
                cot(d + k, i) = (1.0 - err * err * inv_var) * bound_log_std_derivative(r) / n;
            }
        }
        net.backward(tape, cot, grad);
        return loss / n;
    }

    void mark_trained() { trained_ = true; }
    std::vector<std::vector<EpochRecord>>& mutable_history() { return history_; }

    // ---- persistence: model.json sidecar + members.bin (one nn blob per member) ----

    void save(const std::filesystem::path& dir) const {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
        nlohmann::json j;
        j["schema_version"] = 1;
        j["members"] = members_.size();
        j["state_dim"] = state_dim_;
        j["action_dim"] = action_dim_;
        j["hidden"] = config_.hidden;
        j["activation"] = nn::to_string(config_.activation);
        j["min_log_std"] = config_.min_log_std;
        j["max_log_std"] = config_.max_log_std;
        j["trained"] = trained_;
        auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
        j["input_mean"] = vec(input_norm_.mean);
        j["input_std"] = vec(input_norm_.std);
        j["output_mean"] = vec(output_norm_.mean);
        j["output_std"] = vec(output_norm_.std);
        nlohmann::json hist = nlohmann::json::array();
        for (const auto& member : history_) {
            nlohmann::json h = nlohmann::json::array();
            for (const auto& r : member) h.push_back({r.step, r.train_nll, r.holdout_nll});
            hist.push_back(h);
        }
        j["history"] = hist;
        std::ofstream meta(dir / "model.json");
        if (!meta) throw IoError("cannot write " + (dir / "model.json").string());
        meta << j.dump(2) << "\n";
        std::ofstream blob(dir / "members.bin", std::ios::binary);
        if (!blob) throw IoError("cannot write " + (dir / "members.bin").string());
        for (const auto& m : members_) nn::write_mlp(blob, m);
    }

    static EnsembleDynamicsModel load(const std::filesystem::path& dir) {
        std::ifstream meta(dir / "model.json");
        if (!meta) throw IoError("cannot open " + (dir / "model.json").string());
        EnsembleDynamicsModel m;
        try {
            const auto j = nlohmann::json::parse(meta);
            m.state_dim_ = j.at("state_dim").get<std::size_t>();
            m.action_dim_ = j.at("action_dim").get<std::size_t>();
            m.config_.members = j.at("members").get<std::size_t>();
            m.config_.hidden = j.at("hidden").get<std::vector<std::size_t>>();
            m.config_.activation = nn::activation_from_string(j.at("activation").get<std::string>());
            m.config_.min_log_std = j.at("min_log_std").get<double>();
            m.config_.max_log_std = j.at("max_log_std").get<double>();
            m.trained_ = j.at("trained").get<bool>();
            auto vec = [&](const char* key) {
                const auto v = j.at(key).get<std::vector<double>>();
                return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
            };
            m.input_norm_ = {vec("input_mean"), vec("input_std")};
            m.output_norm_ = {vec("output_mean"), vec("output_std")};
            for (const auto& h : j.at("history")) {
                std::vector<EpochRecord> member;
                for (const auto& r : h) member.push_back({r.at(0).get<std::size_t>(), r.at(1).get<double>(), r.at(2).get<double>()});
                m.history_.push_back(member);
            }
        } catch (const nlohmann::json::exception& e) {
            throw IoError(std::string("model.json: ") + e.what());
        } catch (const InputError& e) {
            throw IoError(std::string("model.json: ") + e.what());
        }
        if (m.input_norm_.mean.size() != static_cast<Eigen::Index>(m.state_dim_ + m.action_dim_) ||
            m.output_norm_.mean.size() != static_cast<Eigen::Index>(m.output_dim()) ||
            m.input_norm_.std.size() != m.input_norm_.mean.size() || m.output_norm_.std.size() != m.output_norm_.mean.size())
            throw IoError("model.json: normalization statistics have wrong sizes");
        std::ifstream blob(dir / "members.bin", std::ios::binary);
        if (!blob) throw IoError("cannot open " + (dir / "members.bin").string());
        for (std::size_t b = 0; b < m.config_.members; ++b) {
            m.members_.push_back(nn::read_mlp(blob));
            if (m.members_.back().layer_sizes() != m.layer_sizes()) throw IoError("members.bin: member shape mismatch");
        }
        if (m.history_.size() != m.members_.size()) m.history_.assign(m.members_.size(), {});
        return m;
    }

private:
    void require_trained() const {
        if (!trained_) throw InputError("ensemble: model is untrained");
    }
    void check_batch(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const {
        if (members_.empty()) throw InputError("ensemble: model has no members");
        if (states.rows() != static_cast<Eigen::Index>(state_dim_) || actions.rows() != static_cast<Eigen::Index>(action_dim_) ||
            states.cols() != actions.cols())
            throw InputError("ensemble: batch shape mismatch");
    }

    EnsembleConfig config_;
    std::size_t state_dim_ = 0;
    std::size_t action_dim_ = 0;
    Normalizer input_norm_;
    Normalizer output_norm_;
    std::vector<nn::Mlp> members_;
    std::vector<std::vector<EpochRecord>> history_;
    bool trained_ = false;
};

/// Random train/holdout split. Holdout gets round(fraction * n) transitions, at least one; a
/// single-transition dataset is used for both.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(std::size_t n, double fraction, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    if (n == 1) return {idx, idx};
    const auto h = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n))), 1, n - 1);
    return {std::vector<std::size_t>(idx.begin() + static_cast<long>(h), idx.end()),
            std::vector<std::size_t>(idx.begin(), idx.begin() + static_cast<long>(h))};
}

inline Eigen::MatrixXd gather(const Eigen::MatrixXd& M, const std::vector<std::size_t>& idx) {
    Eigen::MatrixXd out(M.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = M.col(static_cast<Eigen::Index>(idx[i]));
    return out;
}

/// Trains each member on its own bootstrap resample of the training split with Adam on the
/// Gaussian NLL. Holdout NLL is evaluated every eval_interval steps; a member stops after
/// `patience` evaluations without improvement and keeps its best parameters.
inline EnsembleDynamicsModel train_ensemble(const env::ContinuousTransitionDataset& data, const EnsembleConfig& config) {
    auto model = EnsembleDynamicsModel::initialize(data, config);
    Rng split_rng = make_rng(config.seed, 1);
    const auto [train_idx, holdout_idx] = holdout_split(data.size(), config.holdout_fraction, split_rng);
    const Eigen::MatrixXd X = model.input_normalizer().normalize(EnsembleDynamicsModel::stack_inputs(data.states, data.actions));
    const Eigen::MatrixXd Y = model.output_normalizer().normalize(EnsembleDynamicsModel::stack_targets(data));
    const Eigen::MatrixXd Xh = gather(X, holdout_idx), Yh = gather(Y, holdout_idx);
    std::size_t global_step = 0;
    for (std::size_t b = 0; b < model.num_members(); ++b) {
        Rng rng = make_rng(config.seed, 100 + b);
        std::vector<std::size_t> boot(train_idx.size());
        for (auto& i : boot) i = train_idx[uniform_index(rng, train_idx.size())];
        auto& net = model.members()[b];
        nn::AdamState adam(static_cast<Eigen::Index>(net.num_params()), config.learning_rate);
        double best = model.nll(b, Xh, Yh);
        Eigen::VectorXd best_params = net.params();
        std::size_t stale = 0, cursor = boot.size();
        double train_sum = 0.0;
        for (std::size_t step = 1; step <= config.max_steps && stale < config.patience; ++step) {
            if (cursor >= boot.size()) {
                std::shuffle(boot.begin(), boot.end(), rng);
                cursor = 0;
            }
            const std::size_t end = std::min(boot.size(), cursor + config.batch_size);
            const std::vector<std::size_t> batch(boot.begin() + static_cast<long>(cursor), boot.begin() + static_cast<long>(end));
            cursor = end;
            Eigen::VectorXd grad = net.zero_grad();
            const double loss = model.nll_and_grad(b, gather(X, batch), gather(Y, batch), grad);
            ++global_step;
            if (!std::isfinite(loss) || !grad.allFinite()) throw DivergenceError("ensemble training diverged", global_step);
            adam.apply(net.params(), grad);
            train_sum += loss;
            if (step % config.eval_interval != 0 && step != config.max_steps) continue;
            const double holdout = model.nll(b, Xh, Yh);
            if (!std::isfinite(holdout)) throw DivergenceError("ensemble holdout NLL is not finite", global_step);
            const std::size_t since = step % config.eval_interval == 0 ? config.eval_interval : step % config.eval_interval;
            model.mutable_history()[b].push_back({step, train_sum / static_cast<double>(since), holdout});
            train_sum = 0.0;
            if (holdout < best) {
                best = holdout;
                best_params = net.params();
                stale = 0;
            } else {
                ++stale;
            }
        }
        net.params() = best_params;
    }
    model.mark_trained();
    return model;
}

struct ModelErrorReport {
    double mean_l2 = 0.0;             // ||mean next state - true next state||, raw units
    double mean_l2_normalized = 0.0;  // ||mean (delta_s, r) - target|| in normalized output units
    double reward_mae = 0.0;
    std::vector<double> member_l2;    // per-member next-state error, raw units
    double disagreement = 0.0;        // std across members of predicted means, averaged over dims and samples
    std::size_t count = 0;
};

inline nlohmann::json to_json(const ModelErrorReport& r) {
    return {{"mean_l2", r.mean_l2},           {"mean_l2_normalized", r.mean_l2_normalized},
            {"reward_mae", r.reward_mae},     {"member_l2", r.member_l2},
            {"disagreement", r.disagreement}, {"count", r.count}};
}

inline ModelErrorReport model_error_report(const EnsembleDynamicsModel& model, const env::ContinuousTransitionDataset& data) {
    if (data.size() == 0) throw InputError("model_error_report: empty holdout");
    const auto means = model.member_means(data.states, data.actions);
    const Eigen::MatrixXd target = EnsembleDynamicsModel::stack_targets(data);
    const auto s = static_cast<Eigen::Index>(model.state_dim());
    const double n = static_cast<double>(data.size());
    Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(target.rows(), target.cols());
    for (const auto& m : means) avg += m;
    avg /= static_cast<double>(means.size());
    ModelErrorReport r;
    r.count = data.size();
    r.mean_l2 = (avg.topRows(s) - target.topRows(s)).colwise().norm().sum() / n;
    const auto& on = model.output_normalizer();
    r.mean_l2_normalized = (on.normalize(avg) - on.normalize(target)).colwise().norm().sum() / n;
    r.reward_mae = (avg.row(s) - target.row(s)).cwiseAbs().sum() / n;
    for (const auto& m : means) r.member_l2.push_back((m.topRows(s) - target.topRows(s)).colwise().norm().sum() / n);
    Eigen::MatrixXd var = Eigen::MatrixXd::Zero(avg.rows(), avg.cols());
    for (const auto& m : means) var += (m - avg).cwiseAbs2();
    var /= static_cast<double>(means.size());
    r.disagreement = var.cwiseSqrt().mean();
    return r;
}

}  // namespace csve::model
