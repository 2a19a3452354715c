#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "csve/agent/train.hpp"
#include "csve/model/ensemble.hpp"

namespace csve::harness {

inline constexpr int kSweepSchemaVersion = 1;

/// Axis name for varying the dynamics-model training length (ensemble max_steps per member).
inline constexpr const char* kModelStepsAxis = "model_steps";

/// Sets one hyper-parameter by its serialized name. Values are parsed as JSON when possible
/// (numbers, [64,64]) and taken as strings otherwise (adaptive, gaussian_noise). "64x64" is
/// accepted for hidden.
inline void set_hyperparam(agent::CsveHyperParams& hp, const std::string& key, const std::string& value) {
    nlohmann::json j = agent::to_json(hp);
    if (!j.contains(key)) throw ConfigError("unknown hyper-parameter '" + key + "'");
    nlohmann::json v;
    if (key == "hidden" && value.find('x') != std::string::npos) {
        v = nlohmann::json::array();
        std::size_t start = 0;
        for (;;) {
            const auto end = value.find('x', start);
            try {
                v.push_back(std::stoul(value.substr(start, end - start)));
            } catch (const std::exception&) {
                throw ConfigError("hidden: cannot parse '" + value + "'");
            }
            if (end == std::string::npos) break;
            start = end + 1;
        }
    } else {
        v = nlohmann::json::parse(value, nullptr, false);
        if (v.is_discarded()) v = value;
    }
    j[key] = v;
    hp = agent::hyperparams_from_json(j);
}

/// One sweep axis: a hyper-parameter name (or model_steps) and its values.
struct SweepAxis {
    std::string name;
    std::vector<std::string> values;
};

/// Parses "name=v1,v2,...".
inline SweepAxis parse_axis(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) throw ConfigError("grid axis must look like name=v1,v2: '" + spec + "'");
    SweepAxis axis{spec.substr(0, eq), {}};
    std::string rest = spec.substr(eq + 1);
    std::size_t start = 0;
    for (;;) {
        const auto end = rest.find(',', start);
        const auto v = rest.substr(start, end - start);
        if (v.empty()) throw ConfigError("empty value in grid axis '" + spec + "'");
        axis.values.push_back(v);
        if (end == std::string::npos) break;
        start = end + 1;
    }
    return axis;
}

struct SweepConfig {
    agent::Algorithm algorithm = agent::Algorithm::csve;
    agent::CsveHyperParams hp;
    std::vector<SweepAxis> axes;
    std::vector<std::uint64_t> seeds{1};
    std::size_t workers = 1;
    model::EnsembleConfig model;      // used when the algorithm needs a model and none is supplied
    std::size_t holdout_size = 5000;  // fresh transitions for the one-step model error
    std::filesystem::path out_dir;    // per-run metrics go to out_dir/run_<index>; empty disables
};

/// Cartesian product of the axes, first axis slowest. One empty point when there are no axes.
inline std::vector<std::vector<std::pair<std::string, std::string>>> grid_points(const std::vector<SweepAxis>& axes) {
    std::vector<std::vector<std::pair<std::string, std::string>>> points{{}};
    for (const auto& axis : axes) {
        if (axis.values.empty()) throw ConfigError("grid axis '" + axis.name + "' has no values");
        std::vector<std::vector<std::pair<std::string, std::string>>> next;
        for (const auto& p : points)
            for (const auto& v : axis.values) {
                next.push_back(p);
                next.back().emplace_back(axis.name, v);
            }
        points = std::move(next);
    }
    return points;
}

struct SweepRow {
    std::size_t run = 0;
    std::size_t point = 0;
    std::string params;  // name=value pairs joined by ';'
    std::uint64_t seed = 0;
    std::string status = "ok";  // ok | diverged | error
    std::string message;
    double final_return = std::numeric_limits<double>::quiet_NaN();
    double final_score = std::numeric_limits<double>::quiet_NaN();
    double loss_pi = std::numeric_limits<double>::quiet_NaN();  // last logged interval mean
    double alpha = std::numeric_limits<double>::quiet_NaN();
    double model_l2 = std::numeric_limits<double>::quiet_NaN();
};

struct PointSummary {
    std::size_t point = 0;
    std::string params;
    std::size_t runs = 0;
    std::size_t failures = 0;
    double mean_score = std::numeric_limits<double>::quiet_NaN();
    double mean_loss_pi = std::numeric_limits<double>::quiet_NaN();
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<PointSummary> points;
    double score_model_error_correlation = std::numeric_limits<double>::quiet_NaN();
};

/// Pearson correlation; NaN when fewer than two pairs or either side is constant.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const Eigen::Map<const Eigen::VectorXd> a(x.data(), static_cast<Eigen::Index>(x.size()));
    const Eigen::Map<const Eigen::VectorXd> b(y.data(), static_cast<Eigen::Index>(y.size()));
    const Eigen::VectorXd ca = a.array() - a.mean(), cb = b.array() - b.mean();
    const double denom = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
    return denom > 0.0 ? ca.dot(cb) / denom : std::numeric_limits<double>::quiet_NaN();
}

/// Runs fn(i) for i in [0, n) on `workers` threads.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    for (auto& t : pool) t.join();
}

inline bool needs_model(agent::Algorithm algo, const agent::CsveHyperParams& hp) {
    if (algo == agent::Algorithm::awac || algo == agent::Algorithm::cql_awr) return false;
    if (hp.lambda > 0.0) return true;
    return algo == agent::Algorithm::csve && hp.penalty_active() && hp.ood_variant == agent::OodVariant::model_next_state;
}

/// Trains one run per grid point x seed. Failed runs are recorded and the sweep continues.
/// A supplied model is shared by every run unless the grid varies model_steps, in which case one
/// ensemble is trained per distinct value. Scores use the dataset's anchors; the model error is the
/// mean one-step L2 error on a fresh dataset of the same env and tier (NaN for non-builtin envs).
inline SweepResult run_sweep(const env::ContinuousTransitionDataset& data, const SweepConfig& cfg,
                             const model::EnsembleDynamicsModel* model = nullptr) {
    cfg.hp.validate();
    if (cfg.seeds.empty()) throw ConfigError("sweep: no seeds");
    const auto points = grid_points(cfg.axes);

    std::vector<agent::CsveHyperParams> point_hp(points.size(), cfg.hp);
    std::vector<std::size_t> point_model(points.size(), 0);
    std::vector<std::size_t> model_steps;
    for (std::size_t p = 0; p < points.size(); ++p) {
        std::optional<std::size_t> steps;
        for (const auto& [k, v] : points[p]) {
            if (k == kModelStepsAxis) {
                try {
                    steps = std::stoul(v);
                } catch (const std::exception&) {
                    throw ConfigError("model_steps: cannot parse '" + v + "'");
                }
            } else {
                set_hyperparam(point_hp[p], k, v);
            }
        }
        const std::size_t s = steps.value_or(0);
        auto it = std::find(model_steps.begin(), model_steps.end(), s);
        point_model[p] = static_cast<std::size_t>(it - model_steps.begin());
        if (it == model_steps.end()) model_steps.push_back(s);
    }

    bool any_needs = false;
    for (const auto& hp : point_hp) any_needs = any_needs || needs_model(cfg.algorithm, hp);
    const bool builtin = std::find(env::builtin_env_names().begin(), env::builtin_env_names().end(), data.meta.env) !=
                         env::builtin_env_names().end();

    std::vector<std::optional<model::EnsembleDynamicsModel>> models(model_steps.size());
    std::vector<std::string> model_failures(model_steps.size());
    if (any_needs) {
        parallel_for(model_steps.size(), cfg.workers, [&](std::size_t i) {
            if (model_steps[i] == 0 && model != nullptr) return;
            model::EnsembleConfig mc = cfg.model;
            if (model_steps[i] > 0) mc.max_steps = model_steps[i];
            try {
                models[i] = model::train_ensemble(data, mc);
            } catch (const std::exception& e) {
                model_failures[i] = e.what();
            }
        });
    }
    auto model_for = [&](std::size_t p) -> const model::EnsembleDynamicsModel* {
        const auto i = point_model[p];
        if (models[i]) return &*models[i];
        return model_steps[i] == 0 ? model : nullptr;
    };
    std::vector<double> model_error(model_steps.size(), std::numeric_limits<double>::quiet_NaN());
    if (builtin) {
        const auto e = env::make_env(data.meta.env);
        const auto holdout = env::generate_dataset(*e, data.meta.tier.empty() ? "medium" : data.meta.tier, cfg.holdout_size,
                                                   derive_seed(data.meta.seed, 1000));
        for (std::size_t p = 0; p < points.size(); ++p)
            if (const auto* m = model_for(p); m != nullptr && m->trained())
                model_error[point_model[p]] = model::model_error_report(*m, holdout).mean_l2;
    }

    SweepResult res;
    res.rows.resize(points.size() * cfg.seeds.size());
    parallel_for(res.rows.size(), cfg.workers, [&](std::size_t r) {
        const std::size_t p = r / cfg.seeds.size();
        SweepRow& row = res.rows[r];
        row.run = r;
        row.point = p;
        row.seed = cfg.seeds[r % cfg.seeds.size()];
        for (const auto& [k, v] : points[p]) row.params += (row.params.empty() ? "" : ";") + k + "=" + v;
        row.model_l2 = model_error[point_model[p]];
        if (!model_failures[point_model[p]].empty()) {
            row.status = "error";
            row.message = "model training failed: " + model_failures[point_model[p]];
            return;
        }
        try {
            std::unique_ptr<env::Environment> eval_env = builtin ? env::make_env(data.meta.env) : nullptr;
            agent::TrainOptions opts;
            opts.eval_env = eval_env.get();
            if (!cfg.out_dir.empty()) {
                const auto dir = cfg.out_dir / ("run_" + std::to_string(r));
                std::filesystem::create_directories(dir);
                opts.metrics_path = dir / "metrics.csv";
            }
            const auto out = agent::train(cfg.algorithm, data, model_for(p), point_hp[p], row.seed, opts);
            if (!out.log.empty()) {
                row.loss_pi = out.log.back().loss_pi;
                row.alpha = out.log.back().alpha;
            }
            if (out.final_eval) {
                row.final_return = out.final_eval->mean;
                row.final_score = env::normalized_score(out.final_eval->mean, data.meta);
            }
        } catch (const DivergenceError& e) {
            row.status = "diverged";
            row.message = e.what();
        } catch (const std::exception& e) {
            row.status = "error";
            row.message = e.what();
        }
    });

    std::vector<double> errs, scores;
    for (std::size_t p = 0; p < points.size(); ++p) {
        PointSummary s{p, res.rows[p * cfg.seeds.size()].params};
        double score_sum = 0.0, loss_sum = 0.0;
        for (std::size_t k = 0; k < cfg.seeds.size(); ++k) {
            const auto& row = res.rows[p * cfg.seeds.size() + k];
            ++s.runs;
            if (row.status != "ok") {
                ++s.failures;
                continue;
            }
            score_sum += row.final_score;
            loss_sum += row.loss_pi;
            if (std::isfinite(row.model_l2) && std::isfinite(row.final_score)) {
                errs.push_back(row.model_l2);
                scores.push_back(row.final_score);
            }
        }
        const auto ok = static_cast<double>(s.runs - s.failures);
        if (ok > 0) {
            s.mean_score = score_sum / ok;
            s.mean_loss_pi = loss_sum / ok;
        }
        res.points.push_back(s);
    }
    res.score_model_error_correlation = pearson(errs, scores);
    return res;
}

inline void write_sweep_csv(std::ostream& out, const SweepResult& r) {
    auto num = [](double x) { return agent::format_double(x); };
    auto clean = [](std::string s) {
        for (auto& c : s)
            if (c == ',' || c == '\n') c = ' ';
        return s;
    };
    out << "schema_version," << kSweepSchemaVersion << "\n";
    out << "run,point,params,seed,status,final_return,final_score,loss_pi,alpha,model_l2,message\n";
    for (const auto& row : r.rows)
        out << row.run << "," << row.point << "," << row.params << "," << row.seed << "," << row.status << ","
            << num(row.final_return) << "," << num(row.final_score) << "," << num(row.loss_pi) << "," << num(row.alpha) << ","
            << num(row.model_l2) << "," << clean(row.message) << "\n";
}

inline void write_sweep_summary_csv(std::ostream& out, const SweepResult& r) {
    out << "schema_version," << kSweepSchemaVersion << "\n";
    out << "point,params,runs,failures,mean_score,mean_loss_pi\n";
    for (const auto& p : r.points)
        out << p.point << "," << p.params << "," << p.runs << "," << p.failures << "," << agent::format_double(p.mean_score) << ","
            << agent::format_double(p.mean_loss_pi) << "\n";
    out << "correlation,score_vs_model_l2," << agent::format_double(r.score_model_error_correlation) << ",,,\n";
}

}  // namespace csve::harness
