#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "csve/agent/bundle.hpp"
#include "csve/agent/hyperparams.hpp"
#include "csve/core/error.hpp"
#include "csve/core/random.hpp"
#include "csve/env/dataset.hpp"
#include "csve/model/ensemble.hpp"
#include "csve/nn/gaussian.hpp"

namespace csve::agent {

/// Minibatch in env units; columns are transitions.
struct Batch {
    Eigen::MatrixXd states;
    Eigen::MatrixXd actions;
    Eigen::VectorXd rewards;
    Eigen::MatrixXd next_states;
    Eigen::VectorXd dones;

    Eigen::Index size() const { return states.cols(); }
};

inline Batch make_batch(const env::ContinuousTransitionDataset& data, const std::vector<std::size_t>& idx) {
    const auto n = static_cast<Eigen::Index>(idx.size());
    Batch b{Eigen::MatrixXd(data.states.rows(), n), Eigen::MatrixXd(data.actions.rows(), n), Eigen::VectorXd(n),
            Eigen::MatrixXd(data.states.rows(), n), Eigen::VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto c = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]);
        b.states.col(i) = data.states.col(c);
        b.actions.col(i) = data.actions.col(c);
        b.rewards[i] = data.rewards[c];
        b.next_states.col(i) = data.next_states.col(c);
        b.dones[i] = data.dones[c];
    }
    return b;
}

/// Independent random streams consumed by the losses.
struct LossStreams {
    Rng policy;   // action samples for E_{a~pi} estimates
    Rng ood;      // OOD next-state sampling
    Rng explore;  // reparameterized actions of the exploration bonus
};

inline LossStreams make_loss_streams(std::uint64_t seed) {
    return {make_rng(seed, 12), make_rng(seed, 13), make_rng(seed, 14)};
}

/// Gradient buffers for every network of the bundle; a loss fills only its own.
struct GradientSet {
    Eigen::VectorXd v;
    Eigen::VectorXd q;
    Eigen::VectorXd q_target;
    Eigen::VectorXd policy;
};

inline GradientSet zero_gradients(const AgentBundle& b) {
    return {b.v_net.zero_grad(), b.q_net.zero_grad(), b.q_target.zero_grad(), b.policy.zero_grad()};
}

struct LossResult {
    double value = 0.0;
    GradientSet grad;
    double gap = std::numeric_limits<double>::quiet_NaN();  // penalty gap, when a penalty is computed
};

inline Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = standard_normal(rng);
    return m;
}

/// tanh(mean + exp(log_std) * noise), the squashed reparameterized sample.
inline Eigen::MatrixXd squashed_sample(const Eigen::MatrixXd& mean, const Eigen::MatrixXd& log_std, const Eigen::MatrixXd& noise) {
    return nn::gaussian_sample(mean, log_std, noise).array().tanh().matrix();
}

inline Eigen::VectorXd column_block_mean(const Eigen::RowVectorXd& values, Eigen::Index n, Eigen::Index k) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    for (Eigen::Index j = 0; j < k; ++j) out += values.segment(j * n, n).transpose();
    return out / static_cast<double>(k);
}

namespace detail {

inline void require_finite(double value, const GradientSet& g, std::size_t step, const char* what) {
    if (!std::isfinite(value) || !g.v.allFinite() || !g.q.allFinite() || !g.policy.allFinite())
        throw DivergenceError(std::string(what) + " is not finite", step);
}

inline void require_model(const model::EnsembleDynamicsModel* m, const char* what) {
    if (m == nullptr || !m->trained()) throw InputError(std::string(what) + " needs a trained dynamics model");
}

}  // namespace detail

/// E_{a~pi}[Qbar(s, a)] per state by n_action_samples draws from the policy stream.
inline Eigen::VectorXd policy_expected_q(const AgentBundle& b, const nn::Mlp& q, const Eigen::MatrixXd& Sn,
                                         std::size_t samples, Rng& rng) {
    const Eigen::Index n = Sn.cols(), k = static_cast<Eigen::Index>(samples);
    const PolicyHead h = b.policy_head(Sn);
    const Eigen::MatrixXd noise = normal_matrix(static_cast<Eigen::Index>(b.action_dim()), n * k, rng);
    const Eigen::MatrixXd a = squashed_sample(h.mean.replicate(1, k), h.log_std.replicate(1, k), noise);
    return column_block_mean(q.forward(stack_rows(Sn.replicate(1, k), a)).row(0), n, k);
}

/// OOD states for the V penalty: s' ~ P_hat(s, a), a ~ pi, or s + N(0, sigma^2 I).
inline Eigen::MatrixXd ood_states(const AgentBundle& b, const Batch& batch, const model::EnsembleDynamicsModel* model,
                                  const CsveHyperParams& hp, Rng& rng) {
    if (hp.ood_variant == OodVariant::gaussian_noise)
        return batch.states + std::sqrt(hp.noise_variance) * normal_matrix(batch.states.rows(), batch.size(), rng);
    detail::require_model(model, "v_loss");
    const PolicyHead h = b.policy_head(b.normalize_states(batch.states));
    const Eigen::MatrixXd a = squashed_sample(h.mean, h.log_std, normal_matrix(h.mean.rows(), h.mean.cols(), rng));
    return model->sample_next(batch.states, b.unscale_actions(a), rng).next_states;
}

/// L_V = mean_i (E_{a~pi} Qbar(s_i, a) - V(s_i))^2 + alpha (mean V(s') - mean V(s)).
/// Gradients reach v_net only.
inline LossResult v_loss(const AgentBundle& b, const Batch& batch, const model::EnsembleDynamicsModel* model,
                         const CsveHyperParams& hp, LossStreams& streams) {
    LossResult out;
    out.grad = zero_gradients(b);
    const Eigen::MatrixXd Sn = b.normalize_states(batch.states);
    const double n = static_cast<double>(batch.size());
    const Eigen::VectorXd target = policy_expected_q(b, b.q_target, Sn, hp.n_action_samples, streams.policy);
    nn::Mlp::Tape tape;
    const Eigen::VectorXd v = b.v_net.forward(Sn, tape).row(0).transpose();
    const Eigen::VectorXd err = target - v;
    out.value = err.squaredNorm() / n;
    Eigen::MatrixXd cot = (-2.0 / n * err).transpose();
    if (hp.penalty_active()) {
        const Eigen::MatrixXd S_ood = ood_states(b, batch, model, hp, streams.ood);
        nn::Mlp::Tape tape_ood;
        const Eigen::VectorXd v_ood = b.v_net.forward(b.normalize_states(S_ood), tape_ood).row(0).transpose();
        out.gap = v_ood.mean() - v.mean();
        out.value += b.alpha * out.gap;
        cot.array() -= b.alpha / n;
        b.v_net.backward(tape_ood, Eigen::MatrixXd::Constant(1, batch.size(), b.alpha / n), out.grad.v);
    }
    b.v_net.backward(tape, cot, out.grad.v);
    detail::require_finite(out.value, out.grad, b.step, "v_loss");
    return out;
}

/// L_Q = mean_i (r_i + gamma (1 - done_i) V(s'_i) - Q(s_i, a_i))^2 with V held fixed.
inline LossResult q_loss(const AgentBundle& b, const Batch& batch, const CsveHyperParams& hp) {
    LossResult out;
    out.grad = zero_gradients(b);
    const double n = static_cast<double>(batch.size());
    const Eigen::VectorXd v_next = b.v_net.forward(b.normalize_states(batch.next_states)).row(0).transpose();
    const Eigen::VectorXd y = batch.rewards + hp.gamma * (1.0 - batch.dones.array()).matrix().cwiseProduct(v_next);
    nn::Mlp::Tape tape;
    const Eigen::VectorXd q =
        b.q_net.forward(stack_rows(b.normalize_states(batch.states), b.scale_actions(batch.actions)), tape).row(0).transpose();
    const Eigen::VectorXd err = y - q;
    out.value = err.squaredNorm() / n;
    b.q_net.backward(tape, (-2.0 / n * err).transpose(), out.grad.q);
    detail::require_finite(out.value, out.grad, b.step, "q_loss");
    return out;
}

/// Qbar <- (1 - omega) Qbar + omega Q.
inline void target_update(AgentBundle& b, const CsveHyperParams& hp) { nn::soft_update(b.q_target, b.q_net, hp.omega); }

/// Projected dual ascent alpha <- max(0, alpha + lr_alpha (gap - tau)); no-op in fixed mode.
inline double alpha_update(AgentBundle& b, double gap, const CsveHyperParams& hp) {
    if (hp.alpha_mode == AlphaMode::fixed || std::isnan(gap)) return b.alpha;
    b.alpha = std::max(0.0, b.alpha + hp.lr_alpha * (gap - hp.tau));
    return b.alpha;
}

enum class BonusKind { none, model_value, q_value };

namespace detail {

/// Weighted log-likelihood on dataset actions plus an optional reparameterized bonus.
inline LossResult actor_loss(const AgentBundle& b, const Batch& batch, const Eigen::VectorXd& advantage,
                             const CsveHyperParams& hp, BonusKind bonus, const model::EnsembleDynamicsModel* model,
                             Rng* explore) {
    LossResult out;
    out.grad = zero_gradients(b);
    const double n = static_cast<double>(batch.size());
    const Eigen::MatrixXd Sn = b.normalize_states(batch.states);
    const Eigen::MatrixXd An = b.scale_actions(batch.actions);
    nn::Mlp::Tape tape;
    const PolicyHead h = b.split_head(b.policy.forward(Sn, tape));
    const Eigen::VectorXd w = (hp.beta * advantage).array().exp().min(hp.weight_clip).matrix();
    const Eigen::VectorXd logp = nn::squashed_log_prob(h.mean, h.log_std, An);
    out.value = -w.dot(logp) / n;
    const nn::GaussianGrad g = nn::squashed_log_prob_grad(h.mean, h.log_std, An);
    Eigen::MatrixXd cot_mean = -(g.mean.array().rowwise() * w.transpose().array()).matrix() / n;
    Eigen::MatrixXd cot_ls = -(g.log_std.array().rowwise() * w.transpose().array()).matrix() / n;

    if (bonus != BonusKind::none && hp.lambda > 0.0) {
        const Eigen::MatrixXd noise = normal_matrix(h.mean.rows(), h.mean.cols(), *explore);
        const Eigen::MatrixXd a = squashed_sample(h.mean, h.log_std, noise);
        Eigen::MatrixXd grad_a;  // d loss / d a, a in [-1, 1] units
        if (bonus == BonusKind::model_value) {
            require_model(model, "explore_policy_loss");
            const Eigen::MatrixXd a_env = b.unscale_actions(a);
            const auto lin = model->linearize(batch.states, a_env);
            const auto& pred = lin.prediction;
            nn::Mlp::Tape vt;
            const Eigen::VectorXd v_next = b.v_net.forward(b.normalize_states(pred.next_states), vt).row(0).transpose();
            out.value -= hp.lambda * (pred.rewards + hp.gamma * v_next).sum() / n;
            const Eigen::MatrixXd dv_dsn = b.v_net.backward_input(vt, Eigen::MatrixXd::Constant(1, batch.size(), -hp.lambda * hp.gamma / n));
            const Eigen::MatrixXd cot_next = (dv_dsn.array().colwise() / b.state_norm.std.array()).matrix();
            const Eigen::VectorXd cot_r = Eigen::VectorXd::Constant(batch.size(), -hp.lambda / n);
            grad_a = (model->mean_action_vjp(lin, cot_next, cot_r).array().colwise() * b.action_half.array()).matrix();
        } else {
            nn::Mlp::Tape qt;
            const Eigen::VectorXd q = b.q_net.forward(stack_rows(Sn, a), qt).row(0).transpose();
            out.value -= hp.lambda * q.sum() / n;
            grad_a = b.q_net.backward_input(qt, Eigen::MatrixXd::Constant(1, batch.size(), -hp.lambda / n))
                         .bottomRows(static_cast<Eigen::Index>(b.action_dim()));
        }
        const Eigen::MatrixXd grad_u = grad_a.cwiseProduct((1.0 - a.array().square()).matrix());
        cot_mean += grad_u;
        cot_ls += grad_u.cwiseProduct((h.log_std.array().exp() * noise.array()).matrix());
    }
    cot_ls = cot_ls.cwiseProduct(h.log_std_live);
    Eigen::MatrixXd cot(2 * h.mean.rows(), h.mean.cols());
    cot << cot_mean, cot_ls;
    b.policy.backward(tape, cot, out.grad.policy);
    require_finite(out.value, out.grad, b.step, "policy loss");
    return out;
}

}  // namespace detail

/// Advantage Q(s, a) - V(s) under the current critics, treated as a constant.
inline Eigen::VectorXd csve_advantage(const AgentBundle& b, const Batch& batch) {
    const Eigen::MatrixXd Sn = b.normalize_states(batch.states);
    const Eigen::RowVectorXd q = b.q_net.forward(stack_rows(Sn, b.scale_actions(batch.actions))).row(0);
    const Eigen::RowVectorXd v = b.v_net.forward(Sn).row(0);
    return (q - v).transpose();
}

/// L_pi = -mean_i log pi(a_i | s_i) min(exp(beta A_i), weight_clip). Gradients reach the policy only.
inline LossResult awr_policy_loss(const AgentBundle& b, const Batch& batch, const CsveHyperParams& hp) {
    return detail::actor_loss(b, batch, csve_advantage(b, batch), hp, BonusKind::none, nullptr, nullptr);
}

/// L_pi - lambda * mean_i [r_hat(s_i, a~_i) + gamma V(s_hat'_i)] with a~ a reparameterized policy
/// sample and (s_hat', r_hat) the ensemble-mean prediction. lambda = 0 is exactly awr_policy_loss.
inline LossResult explore_policy_loss(const AgentBundle& b, const Batch& batch, const model::EnsembleDynamicsModel* model,
                                      const CsveHyperParams& hp, LossStreams& streams) {
    return detail::actor_loss(b, batch, csve_advantage(b, batch), hp, BonusKind::model_value, model, &streams.explore);
}

// ---- CQL-AWR baseline --------------------------------------------------------

/// alpha (mean_{s, a~pi} Q - mean_{(s,a) in D} Q) + 1/2 mean (Q(s,a) - r - gamma (1-done) E_{a'~pi} Qbar(s', a'))^2.
/// gap records the bracketed difference.
inline LossResult cql_critic_loss(const AgentBundle& b, const Batch& batch, const CsveHyperParams& hp, LossStreams& streams) {
    LossResult out;
    out.grad = zero_gradients(b);
    const double n = static_cast<double>(batch.size());
    const Eigen::Index k = static_cast<Eigen::Index>(hp.n_action_samples);
    const Eigen::MatrixXd Sn = b.normalize_states(batch.states);
    const Eigen::VectorXd next_q = policy_expected_q(b, b.q_target, b.normalize_states(batch.next_states), hp.n_action_samples, streams.policy);
    const Eigen::VectorXd y = batch.rewards + hp.gamma * (1.0 - batch.dones.array()).matrix().cwiseProduct(next_q);
    nn::Mlp::Tape tape;
    const Eigen::VectorXd q = b.q_net.forward(stack_rows(Sn, b.scale_actions(batch.actions)), tape).row(0).transpose();
    const Eigen::VectorXd err = q - y;

    const PolicyHead h = b.policy_head(Sn);
    const Eigen::MatrixXd noise = normal_matrix(static_cast<Eigen::Index>(b.action_dim()), batch.size() * k, streams.policy);
    const Eigen::MatrixXd a_pi = squashed_sample(h.mean.replicate(1, k), h.log_std.replicate(1, k), noise);
    nn::Mlp::Tape tape_pi;
    const Eigen::RowVectorXd q_pi = b.q_net.forward(stack_rows(Sn.replicate(1, k), a_pi), tape_pi).row(0);

    out.gap = q_pi.mean() - q.mean();
    out.value = b.alpha * out.gap + 0.5 * err.squaredNorm() / n;
    b.q_net.backward(tape, (err.array() / n - b.alpha / n).matrix().transpose(), out.grad.q);
    b.q_net.backward(tape_pi, Eigen::MatrixXd::Constant(1, batch.size() * k, b.alpha / (n * static_cast<double>(k))), out.grad.q);
    detail::require_finite(out.value, out.grad, b.step, "cql critic loss");
    return out;
}

/// AWR with A = Q(s, a) - E_{a~pi} Q(s, a) and the bonus -lambda mean Q(s, a~).
inline LossResult cql_actor_loss(const AgentBundle& b, const Batch& batch, const CsveHyperParams& hp, LossStreams& streams) {
    const Eigen::MatrixXd Sn = b.normalize_states(batch.states);
    const Eigen::VectorXd q = b.q_net.forward(stack_rows(Sn, b.scale_actions(batch.actions))).row(0).transpose();
    const Eigen::VectorXd baseline = policy_expected_q(b, b.q_net, Sn, hp.n_action_samples, streams.policy);
    return detail::actor_loss(b, batch, q - baseline, hp, BonusKind::q_value, nullptr, &streams.explore);
}

}  // namespace csve::agent
