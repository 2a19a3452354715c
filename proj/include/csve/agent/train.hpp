#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "csve/agent/bundle.hpp"
#include "csve/agent/hyperparams.hpp"
#include "csve/agent/losses.hpp"
#include "csve/core/error.hpp"
#include "csve/core/random.hpp"
#include "csve/env/dataset.hpp"
#include "csve/env/env.hpp"
#include "csve/model/ensemble.hpp"

namespace csve::agent {

inline constexpr int kMetricSchemaVersion = 1;

enum class Algorithm { csve, csve_noise, awac, cql_awr };

inline const char* to_string(Algorithm a) {
    switch (a) {
        case Algorithm::csve: return "csve";
        case Algorithm::csve_noise: return "csve_noise";
        case Algorithm::awac: return "awac";
        case Algorithm::cql_awr: return "cql_awr";
    }
    return "?";
}

inline Algorithm algorithm_from_string(const std::string& s) {
    if (s == "csve") return Algorithm::csve;
    if (s == "csve_noise" || s == "csve-noise") return Algorithm::csve_noise;
    if (s == "awac") return Algorithm::awac;
    if (s == "cql_awr" || s == "cql-awr") return Algorithm::cql_awr;
    throw ConfigError("unknown algorithm '" + s + "'");
}

// ---- metric log ----------------------------------------------------------------

/// One logged interval. Losses and v_gap are interval means; eval columns are NaN when no
/// evaluation ran at this step. For cql_awr, v_gap holds the Q-space penalty gap.
struct MetricRow {
    std::size_t step = 0;
    double loss_v = std::numeric_limits<double>::quiet_NaN();
    double loss_q = std::numeric_limits<double>::quiet_NaN();
    double loss_pi = std::numeric_limits<double>::quiet_NaN();
    double alpha = std::numeric_limits<double>::quiet_NaN();
    double v_gap = std::numeric_limits<double>::quiet_NaN();
    double eval_return_mean = std::numeric_limits<double>::quiet_NaN();
    double eval_return_std = std::numeric_limits<double>::quiet_NaN();
};

inline const char* metric_header() { return "step,loss_v,loss_q,loss_pi,alpha,v_gap,eval_return_mean,eval_return_std"; }

inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string format_row(const MetricRow& r) {
    std::string s = std::to_string(r.step);
    for (double x : {r.loss_v, r.loss_q, r.loss_pi, r.alpha, r.v_gap, r.eval_return_mean, r.eval_return_std})
        s += "," + format_double(x);
    return s;
}

/// CSV metric log: a schema_version line, the header, then one line per row.
class MetricWriter {
public:
    explicit MetricWriter(const std::filesystem::path& path) : out_(path) {
        if (!out_) throw IoError("cannot write metric log " + path.string());
        out_ << "schema_version," << kMetricSchemaVersion << "\n" << metric_header() << "\n";
        out_.flush();
    }
    void write(const MetricRow& r) {
        out_ << format_row(r) << "\n";
        out_.flush();
        if (!out_) throw IoError("metric log write failed");
    }

private:
    std::ofstream out_;
};

inline std::vector<MetricRow> read_metric_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read metric log " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("schema_version,", 0) != 0) throw IoError(path.string() + ": missing schema_version line");
    if (!std::getline(in, line) || line != metric_header()) throw IoError(path.string() + ": unexpected header");
    std::vector<MetricRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) cells.push_back(line.substr(start, pos - start));
        cells.push_back(line.substr(start));
        if (cells.size() != 8) throw IoError(path.string() + ": row has " + std::to_string(cells.size()) + " cells");
        try {
            MetricRow r;
            r.step = std::stoull(cells[0]);
            double* fields[] = {&r.loss_v, &r.loss_q, &r.loss_pi, &r.alpha, &r.v_gap, &r.eval_return_mean, &r.eval_return_std};
            for (std::size_t i = 0; i < 7; ++i) *fields[i] = std::stod(cells[i + 1]);
            rows.push_back(r);
        } catch (const std::exception&) {
            throw IoError(path.string() + ": malformed row '" + line + "'");
        }
    }
    return rows;
}

// ---- evaluation ------------------------------------------------------------------

struct EvalSummary {
    std::vector<double> returns;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation
};

/// Deterministic policy tanh(mean) rolled out for `episodes` episodes.
inline EvalSummary evaluate_policy(const AgentBundle& b, const env::Environment& env, std::size_t episodes, std::uint64_t seed) {
    if (b.state_dim() != env.spec().state_dim || b.action_dim() != env.spec().action_dim)
        throw InputError("evaluate_policy: agent does not match environment " + env.spec().name);
    EvalSummary s;
    s.returns = env::rollout_returns(env, env::stationary(b.as_env_policy()), episodes, seed);
    s.mean = env::mean(s.returns);
    if (s.returns.size() > 1) {
        double ss = 0.0;
        for (double r : s.returns) ss += (r - s.mean) * (r - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(s.returns.size() - 1));
    }
    return s;
}

// ---- training loop ---------------------------------------------------------------

struct TrainOptions {
    const env::Environment* eval_env = nullptr;  // periodic evaluation when set
    std::filesystem::path metrics_path;          // streamed CSV log when non-empty
    std::filesystem::path checkpoint_dir;        // checkpoint after every eval interval when non-empty
    std::function<void(const MetricRow&)> on_log;
};

struct TrainResult {
    AgentBundle bundle;
    std::vector<MetricRow> log;
    std::optional<EvalSummary> final_eval;
};

/// Random streams of one run. The same seed gives every algorithm the same initialization and
/// minibatch sequence.
struct TrainStreams {
    Rng init;
    Rng batch;
    LossStreams loss;
    std::uint64_t eval_seed;
};

inline TrainStreams make_train_streams(std::uint64_t seed) {
    return {make_rng(seed, 10), make_rng(seed, 11), make_loss_streams(seed), derive_seed(seed, 15)};
}

inline Batch sample_batch(const env::ContinuousTransitionDataset& data, std::size_t batch_size, Rng& rng) {
    std::vector<std::size_t> idx(batch_size);
    for (auto& i : idx) i = uniform_index(rng, data.size());
    return make_batch(data, idx);
}

/// Action box of the dataset's environment when it is a built-in one with matching dimensions,
/// otherwise the per-dimension range of the logged actions.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> action_bounds(const env::ContinuousTransitionDataset& data) {
    const auto& names = env::builtin_env_names();
    if (std::find(names.begin(), names.end(), data.meta.env) != names.end()) {
        const auto spec = env::make_env(data.meta.env)->spec();
        if (spec.action_dim == data.action_dim() && spec.state_dim == data.state_dim()) return {spec.action_low, spec.action_high};
    }
    Eigen::VectorXd lo = data.actions.rowwise().minCoeff(), hi = data.actions.rowwise().maxCoeff();
    for (Eigen::Index i = 0; i < lo.size(); ++i)
        if (!(hi[i] > lo[i])) {
            lo[i] -= 1.0;
            hi[i] += 1.0;
        }
    return {lo, hi};
}

inline AgentBundle make_bundle_for(const env::ContinuousTransitionDataset& data, const CsveHyperParams& hp, Rng& rng) {
    const auto [lo, hi] = action_bounds(data);
    return make_bundle(model::Normalizer::fit(data.states), lo, hi, hp, rng);
}

namespace detail {

struct IntervalMeans {
    double v = 0, q = 0, pi = 0, gap = 0;
    std::size_t n = 0, n_gap = 0;
    void add(double lv, double lq, double lpi, double g) {
        v += lv;
        q += lq;
        pi += lpi;
        if (!std::isnan(g)) {
            gap += g;
            ++n_gap;
        }
        ++n;
    }
    MetricRow row(std::size_t step, double alpha) const {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        const double d = static_cast<double>(n);
        return {step, n ? v / d : nan, n ? q / d : nan, n ? pi / d : nan, alpha, n_gap ? gap / static_cast<double>(n_gap) : nan, nan, nan};
    }
};

inline void apply(nn::Mlp& net, nn::AdamState& opt, const Eigen::VectorXd& grad, std::size_t step, const char* what) {
    opt.apply(net.params(), grad);
    if (!net.params().allFinite()) throw DivergenceError(std::string(what) + " parameters are not finite", step);
}

}  // namespace detail

/// Offline training for total_steps gradient steps.
///
/// csve: V -> alpha -> Q -> pi -> target per step. csve_noise: csve with Gaussian-noise OOD states.
/// awac: the same loop with the OOD penalty and the exploration bonus removed. cql_awr: CQL critic
/// with adaptive alpha, AWR actor with a Q bonus. On divergence the bundle as of the most recent
/// logged step is saved to checkpoint_dir (when set) before the error propagates.
inline TrainResult train(Algorithm algo, const env::ContinuousTransitionDataset& data, const model::EnsembleDynamicsModel* model,
                         const CsveHyperParams& hp, std::uint64_t seed, const TrainOptions& opts = {}) {
    hp.validate();
    data.validate();
    if (data.size() == 0) throw InputError("train: empty dataset");
    const bool csve_family = algo == Algorithm::csve || algo == Algorithm::csve_noise;
    if (csve_family && hp.lambda > 0.0) detail::require_model(model, "exploration bonus");
    if (algo == Algorithm::csve && hp.penalty_active() && hp.ood_variant == OodVariant::model_next_state)
        detail::require_model(model, "model_next_state OOD sampling");
    if (opts.eval_env != nullptr && opts.eval_env->spec().name != data.meta.env)
        throw InputError("train: eval env " + opts.eval_env->spec().name + " does not match dataset env " + data.meta.env);

    CsveHyperParams awac_hp = hp;
    awac_hp.alpha_mode = AlphaMode::fixed;
    awac_hp.alpha_init = 0.0;
    awac_hp.lambda = 0.0;
    CsveHyperParams noise_hp = hp;
    noise_hp.ood_variant = OodVariant::gaussian_noise;
    const CsveHyperParams& run_hp = algo == Algorithm::awac ? awac_hp : algo == Algorithm::csve_noise ? noise_hp : hp;

    TrainStreams rs = make_train_streams(seed);
    TrainResult res{make_bundle_for(data, run_hp, rs.init), {}, std::nullopt};
    AgentBundle& b = res.bundle;
    std::optional<MetricWriter> writer;
    if (!opts.metrics_path.empty()) writer.emplace(opts.metrics_path);
    const nlohmann::json extra{{"algorithm", to_string(algo)}, {"seed", seed}, {"env", data.meta.env}, {"tier", data.meta.tier}};

    detail::IntervalMeans interval;
    std::optional<AgentBundle> last_good;
    if (!opts.checkpoint_dir.empty()) last_good.emplace(b);
    try {
        for (std::size_t t = 1; t <= run_hp.total_steps; ++t) {
            b.step = t;
            const Batch batch = sample_batch(data, run_hp.batch_size, rs.batch);
            double lv = std::numeric_limits<double>::quiet_NaN(), lq, lpi, gap;
            if (algo == Algorithm::cql_awr) {
                const LossResult qr = cql_critic_loss(b, batch, run_hp, rs.loss);
                gap = qr.gap;
                detail::apply(b.q_net, b.q_opt, qr.grad.q, t, "q_net");
                alpha_update(b, gap, run_hp);
                const LossResult pr = cql_actor_loss(b, batch, run_hp, rs.loss);
                detail::apply(b.policy, b.pi_opt, pr.grad.policy, t, "policy");
                lq = qr.value;
                lpi = pr.value;
            } else {
                const LossResult vr = v_loss(b, batch, model, run_hp, rs.loss);
                detail::apply(b.v_net, b.v_opt, vr.grad.v, t, "v_net");
                gap = vr.gap;
                alpha_update(b, gap, run_hp);
                const LossResult qr = q_loss(b, batch, run_hp);
                detail::apply(b.q_net, b.q_opt, qr.grad.q, t, "q_net");
                const LossResult pr = explore_policy_loss(b, batch, model, run_hp, rs.loss);
                detail::apply(b.policy, b.pi_opt, pr.grad.policy, t, "policy");
                lv = vr.value;
                lq = qr.value;
                lpi = pr.value;
            }
            target_update(b, run_hp);
            interval.add(lv, lq, lpi, gap);

            const bool last = t == run_hp.total_steps;
            const bool log_now = t % run_hp.log_interval == 0 || last;
            const bool eval_now = t % run_hp.eval_interval == 0 || last;
            MetricRow row = interval.row(t, b.alpha);
            if (eval_now && opts.eval_env != nullptr) {
                const EvalSummary e = evaluate_policy(b, *opts.eval_env, run_hp.n_eval, rs.eval_seed);
                row.eval_return_mean = e.mean;
                row.eval_return_std = e.std;
                if (last) res.final_eval = e;
            }
            if (eval_now && !opts.checkpoint_dir.empty()) save_bundle(opts.checkpoint_dir, b, run_hp, extra);
            if (log_now || (eval_now && opts.eval_env != nullptr)) {
                res.log.push_back(row);
                if (writer) writer->write(row);
                if (opts.on_log) opts.on_log(row);
                interval = {};
                if (last_good) *last_good = b;
            }
        }
    } catch (const DivergenceError&) {
        if (last_good) save_bundle(opts.checkpoint_dir, *last_good, run_hp, extra);
        throw;
    }
    if (run_hp.total_steps == 0 && !opts.checkpoint_dir.empty()) save_bundle(opts.checkpoint_dir, b, run_hp, extra);
    return res;
}

inline TrainResult train_agent(const env::ContinuousTransitionDataset& data, const model::EnsembleDynamicsModel* model,
                               const CsveHyperParams& hp, std::uint64_t seed, const TrainOptions& opts = {}) {
    return train(Algorithm::csve, data, model, hp, seed, opts);
}

inline TrainResult awac_baseline(const env::ContinuousTransitionDataset& data, const CsveHyperParams& hp, std::uint64_t seed,
                                 const TrainOptions& opts = {}) {
    return train(Algorithm::awac, data, nullptr, hp, seed, opts);
}

inline TrainResult cql_awr_baseline(const env::ContinuousTransitionDataset& data, const CsveHyperParams& hp, std::uint64_t seed,
                                    const TrainOptions& opts = {}) {
    return train(Algorithm::cql_awr, data, nullptr, hp, seed, opts);
}

}  // namespace csve::agent
