#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "csve/agent/train.hpp"
#include "csve/harness/sweep.hpp"
#include "csve/harness/theory.hpp"

namespace fs = std::filesystem;
using namespace csve;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

void require_dir(const fs::path& p, const char* what) {
    if (!fs::is_directory(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

bool is_builtin(const std::string& name) {
    const auto& names = env::builtin_env_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

void add_hp_options(CLI::App* app, agent::CsveHyperParams& hp, std::string& alpha_mode, std::string& ood) {
    app->add_option("--alpha", hp.alpha_init, "Initial penalty weight")->capture_default_str();
    app->add_option("--tau", hp.tau, "Gap budget for adaptive alpha")->capture_default_str();
    app->add_option("--beta", hp.beta, "Advantage temperature")->capture_default_str();
    app->add_option("--lambda", hp.lambda, "Exploration bonus weight")->capture_default_str();
    app->add_option("--omega", hp.omega, "Target smoothing factor")->capture_default_str();
    app->add_option("--gamma", hp.gamma, "Discount")->capture_default_str();
    app->add_option("--lr_alpha", hp.lr_alpha, "Alpha step size")->capture_default_str();
    app->add_option("--alpha_mode", alpha_mode, "adaptive or fixed")->capture_default_str();
    app->add_option("--actor_lr", hp.actor_lr)->capture_default_str();
    app->add_option("--critic_lr", hp.critic_lr)->capture_default_str();
    app->add_option("--n_action_samples", hp.n_action_samples, "Policy samples per expectation")->capture_default_str();
    app->add_option("--batch_size", hp.batch_size)->capture_default_str();
    app->add_option("--steps", hp.total_steps, "Gradient steps")->capture_default_str();
    app->add_option("--ood", ood, "model_next_state or gaussian_noise")->capture_default_str();
    app->add_option("--noise_variance", hp.noise_variance, "sigma^2 for gaussian_noise")->capture_default_str();
    app->add_option("--hidden", hp.hidden, "Hidden widths of every network")->capture_default_str();
    app->add_option("--weight_clip", hp.weight_clip)->capture_default_str();
    app->add_option("--log_interval", hp.log_interval)->capture_default_str();
    app->add_option("--eval_interval", hp.eval_interval)->capture_default_str();
    app->add_option("--n_eval", hp.n_eval, "Evaluation episodes")->capture_default_str();
}

void finish_hp(agent::CsveHyperParams& hp, const std::string& alpha_mode, const std::string& ood) {
    try {
        hp.alpha_mode = agent::alpha_mode_from_string(alpha_mode);
        hp.ood_variant = agent::ood_variant_from_string(ood);
    } catch (const InputError& e) {
        throw ConfigError(e.what());
    }
    hp.validate();
}

void add_model_options(CLI::App* app, model::EnsembleConfig& mc) {
    app->add_option("--members", mc.members, "Ensemble size")->capture_default_str();
    app->add_option("--model_hidden", mc.hidden)->capture_default_str();
    app->add_option("--model_lr", mc.learning_rate)->capture_default_str();
    app->add_option("--model_batch", mc.batch_size)->capture_default_str();
    app->add_option("--max_steps", mc.max_steps, "Gradient steps per member")->capture_default_str();
    app->add_option("--patience", mc.patience)->capture_default_str();
    app->add_option("--holdout_fraction", mc.holdout_fraction)->capture_default_str();
}

struct Anchors {
    double random_return;
    double expert_return;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CSVE offline RL laboratory"};
    app.set_config("--config", "", "INI file; [section] per subcommand, flags win");
    app.require_subcommand(1);

    // gen-data
    std::string g_env = "pointmass2d", g_tier = "medium";
    std::size_t g_size = 50000;
    std::uint64_t g_seed = 0;
    fs::path g_out;
    auto* gen = app.add_subcommand("gen-data", "Generate a scripted-behavior dataset");
    gen->add_option("--env", g_env)->capture_default_str();
    gen->add_option("--tier", g_tier)->capture_default_str();
    gen->add_option("--size", g_size)->capture_default_str();
    gen->add_option("--seed", g_seed)->capture_default_str();
    gen->add_option("--out", g_out, "Dataset directory")->required();

    // train-dynamics
    fs::path d_data, d_out;
    model::EnsembleConfig d_mc;
    auto* dyn = app.add_subcommand("train-dynamics", "Fit the ensemble dynamics model");
    dyn->add_option("--data", d_data, "Dataset directory")->required();
    dyn->add_option("--seed", d_mc.seed)->capture_default_str();
    dyn->add_option("--out", d_out, "Model directory")->required();
    add_model_options(dyn, d_mc);

    // train
    fs::path t_data, t_model, t_out;
    std::string t_algo = "csve", t_eval_env = "auto", t_alpha_mode = "adaptive", t_ood = "model_next_state";
    std::uint64_t t_seed = 0;
    agent::CsveHyperParams t_hp;
    auto* tr = app.add_subcommand("train", "Train an agent offline");
    tr->add_option("--data", t_data, "Dataset directory")->required();
    tr->add_option("--model", t_model, "Model directory (csve, or csve_noise with lambda > 0)");
    tr->add_option("--algo", t_algo, "csve, csve_noise, awac or cql_awr")->capture_default_str();
    tr->add_option("--eval_env", t_eval_env, "auto (dataset env), none, or an env name")->capture_default_str();
    tr->add_option("--seed", t_seed)->capture_default_str();
    tr->add_option("--out", t_out, "Run directory")->required();
    add_hp_options(tr, t_hp, t_alpha_mode, t_ood);

    // eval
    fs::path e_ckpt, e_data, e_out;
    std::string e_scripted, e_env;
    std::vector<std::uint64_t> e_seeds{0};
    std::size_t e_episodes = 10;
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint or a scripted policy");
    ev->add_option("--checkpoint", e_ckpt, "Agent checkpoint directory");
    ev->add_option("--scripted", e_scripted, "random, medium or expert scripted policy");
    ev->add_option("--env", e_env, "Env for --scripted (defaults to the checkpoint's env)");
    ev->add_option("--data", e_data, "Dataset directory supplying score anchors");
    ev->add_option("--seed", e_seeds, "Evaluation seeds")->capture_default_str();
    ev->add_option("--episodes", e_episodes)->capture_default_str();
    ev->add_option("--out", e_out, "Output CSV")->required();

    // verify-theory
    std::vector<std::string> v_checks;
    std::size_t v_count = 0;
    std::uint64_t v_seed = 0;
    fs::path v_out;
    auto* vt = app.add_subcommand("verify-theory", "Run seeded tabular certifications");
    vt->add_option("--check", v_checks, "Checks to run (default all)");
    vt->add_option("--count", v_count, "Instances per check (0 = default)")->capture_default_str();
    vt->add_option("--seed", v_seed, "First instance seed")->capture_default_str();
    vt->add_option("--out", v_out, "Output CSV")->required();

    // sweep
    fs::path s_data, s_model, s_out;
    std::string s_algo = "csve", s_alpha_mode = "adaptive", s_ood = "model_next_state";
    std::vector<std::string> s_grid;
    harness::SweepConfig s_cfg;
    auto* sw = app.add_subcommand("sweep", "Grid of training runs with aggregated scores");
    sw->add_option("--data", s_data, "Dataset directory")->required();
    sw->add_option("--model", s_model, "Model directory shared by runs without a model_steps axis");
    sw->add_option("--algo", s_algo)->capture_default_str();
    sw->add_option("--grid", s_grid, "Axis name=v1,v2 (hyper-parameter or model_steps); repeatable");
    sw->add_option("--seed", s_cfg.seeds, "Run seeds")->capture_default_str();
    sw->add_option("--workers", s_cfg.workers, "Parallel runs")->capture_default_str();
    sw->add_option("--model_seed", s_cfg.model.seed)->capture_default_str();
    sw->add_option("--out", s_out, "Sweep directory")->required();
    add_hp_options(sw, s_cfg.hp, s_alpha_mode, s_ood);
    add_model_options(sw, s_cfg.model);

    // --config is accepted anywhere on the line; it is read by the top-level app.
    std::vector<std::string> args(argv + 1, argv + argc), front;
    for (std::size_t i = 0; i < args.size();) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            front.insert(front.end(), {args[i], args[i + 1]});
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
        } else if (args[i].rfind("--config=", 0) == 0) {
            front.push_back(args[i]);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
        } else {
            ++i;
        }
    }
    args.insert(args.begin(), front.begin(), front.end());
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*gen) {
            const auto e = env::make_env(g_env);
            const auto ds = env::generate_dataset(*e, g_tier, g_size, g_seed);
            env::save_dataset(g_out, ds);
            std::cout << env::to_json(ds.meta).dump(2) << "\n";
            std::cout << "behavior normalized score " << env::normalized_score(ds.meta.behavior_return, ds.meta) << "\n";
        } else if (*dyn) {
            d_mc.validate();
            require_dir(d_data, "dataset");
            const auto ds = env::load_dataset(d_data);
            const auto m = model::train_ensemble(ds, d_mc);
            m.save(d_out);
            auto out = open_out(d_out / "nll_history.csv");
            out << "schema_version,1\nmember,step,train_nll,holdout_nll\n";
            for (std::size_t b = 0; b < m.history().size(); ++b)
                for (const auto& r : m.history()[b])
                    out << b << "," << r.step << "," << agent::format_double(r.train_nll) << "," << agent::format_double(r.holdout_nll)
                        << "\n";
            std::cout << "model saved to " << d_out.string() << "\n";
            if (is_builtin(ds.meta.env)) {
                const auto e = env::make_env(ds.meta.env);
                const auto holdout = env::generate_dataset(*e, ds.meta.tier, 5000, derive_seed(ds.meta.seed, 1000));
                std::cout << model::to_json(model::model_error_report(m, holdout)).dump(2) << "\n";
            }
        } else if (*tr) {
            finish_hp(t_hp, t_alpha_mode, t_ood);
            const auto algo = agent::algorithm_from_string(t_algo);
            require_dir(t_data, "dataset");
            const auto ds = env::load_dataset(t_data);
            std::optional<model::EnsembleDynamicsModel> m;
            if (!t_model.empty()) {
                require_dir(t_model, "model");
                m = model::EnsembleDynamicsModel::load(t_model);
            }
            std::unique_ptr<env::Environment> eval_env;
            if (t_eval_env == "auto") {
                if (is_builtin(ds.meta.env)) eval_env = env::make_env(ds.meta.env);
            } else if (t_eval_env != "none") {
                eval_env = env::make_env(t_eval_env);
            }
            agent::TrainOptions opts;
            opts.eval_env = eval_env.get();
            fs::create_directories(t_out);
            opts.metrics_path = t_out / "metrics.csv";
            opts.checkpoint_dir = t_out / "checkpoint";
            const auto res = agent::train(algo, ds, m ? &*m : nullptr, t_hp, t_seed, opts);
            auto out = open_out(t_out / "summary.csv");
            out << "schema_version,1\nalgorithm,seed,steps,final_return_mean,final_return_std,final_score,alpha\n";
            const double mean = res.final_eval ? res.final_eval->mean : std::numeric_limits<double>::quiet_NaN();
            const double sd = res.final_eval ? res.final_eval->std : std::numeric_limits<double>::quiet_NaN();
            const double score = res.final_eval ? env::normalized_score(mean, ds.meta) : std::numeric_limits<double>::quiet_NaN();
            out << agent::to_string(algo) << "," << t_seed << "," << t_hp.total_steps << "," << agent::format_double(mean) << ","
                << agent::format_double(sd) << "," << agent::format_double(score) << "," << agent::format_double(res.bundle.alpha)
                << "\n";
            std::cout << "final return " << mean << " +- " << sd << ", normalized " << score << "\n";
        } else if (*ev) {
            if (e_ckpt.empty() == e_scripted.empty()) throw ConfigError("eval: give exactly one of --checkpoint or --scripted");
            std::optional<agent::LoadedBundle> loaded;
            std::string env_name = e_env;
            if (!e_ckpt.empty()) {
                require_dir(e_ckpt, "checkpoint");
                loaded = agent::load_bundle(e_ckpt);
                if (env_name.empty()) env_name = loaded->extra.value("env", "");
            }
            if (!is_builtin(env_name)) throw ConfigError("eval: unknown env '" + env_name + "'");
            const auto e = env::make_env(env_name);
            Anchors anchors{};
            if (!e_data.empty()) {
                require_dir(e_data, "dataset");
                const auto meta = env::load_dataset(e_data).meta;
                anchors = {meta.random_return, meta.expert_return};
            } else {
                const auto [lo, hi] = env::score_anchors(*e);
                anchors = {lo, hi};
            }
            auto out = open_out(e_out);
            out << "schema_version,1\nseed,episodes,return_mean,return_std,normalized_score\n";
            std::vector<double> scores;
            for (auto seed : e_seeds) {
                std::vector<double> returns;
                if (loaded) {
                    returns = agent::evaluate_policy(loaded->bundle, *e, e_episodes, seed).returns;
                } else {
                    returns = env::rollout_returns(*e, env::scripted_policy(*e, env::tier_from_string(e_scripted)), e_episodes, seed);
                }
                const double m = env::mean(returns);
                double var = 0.0;
                for (double r : returns) var += (r - m) * (r - m);
                const double sd = returns.size() > 1 ? std::sqrt(var / static_cast<double>(returns.size() - 1)) : 0.0;
                const double score = env::normalized_score(m, anchors.random_return, anchors.expert_return);
                scores.push_back(score);
                out << seed << "," << returns.size() << "," << agent::format_double(m) << "," << agent::format_double(sd) << ","
                    << agent::format_double(score) << "\n";
            }
            const double m = env::mean(scores);
            double var = 0.0;
            for (double s : scores) var += (s - m) * (s - m);
            const double sd = scores.size() > 1 ? std::sqrt(var / static_cast<double>(scores.size() - 1)) : 0.0;
            std::cout << "normalized score " << m << " +- " << sd << " over " << scores.size() << " seed(s)\n";
        } else if (*vt) {
            std::vector<harness::CertRow> rows;
            for (const auto& c : harness::cert_checks()) {
                if (!v_checks.empty() && std::find(v_checks.begin(), v_checks.end(), c.name) == v_checks.end()) continue;
                auto r = c.run(v_count ? v_count : c.default_count, v_seed);
                rows.insert(rows.end(), r.begin(), r.end());
            }
            for (const auto& name : v_checks) {
                const auto& all = harness::cert_checks();
                if (std::none_of(all.begin(), all.end(), [&](const auto& c) { return c.name == name; }))
                    throw ConfigError("verify-theory: unknown check '" + name + "'");
            }
            auto out = open_out(v_out);
            harness::write_cert_csv(out, rows);
            for (const auto& s : harness::summarize(rows))
                std::printf("%-20s %5zu/%-5zu pass rate %.4f\n", s.check.c_str(), s.passed, s.total, s.pass_rate());
        } else if (*sw) {
            finish_hp(s_cfg.hp, s_alpha_mode, s_ood);
            s_cfg.model.validate();
            s_cfg.algorithm = agent::algorithm_from_string(s_algo);
            for (const auto& g : s_grid) s_cfg.axes.push_back(harness::parse_axis(g));
            require_dir(s_data, "dataset");
            const auto ds = env::load_dataset(s_data);
            std::optional<model::EnsembleDynamicsModel> m;
            if (!s_model.empty()) {
                require_dir(s_model, "model");
                m = model::EnsembleDynamicsModel::load(s_model);
            }
            s_cfg.out_dir = s_out;
            const auto res = harness::run_sweep(ds, s_cfg, m ? &*m : nullptr);
            auto rows = open_out(s_out / "sweep.csv");
            harness::write_sweep_csv(rows, res);
            auto summary = open_out(s_out / "summary.csv");
            harness::write_sweep_summary_csv(summary, res);
            for (const auto& p : res.points)
                std::printf("%-40s score %8.3f  loss_pi %10.4f  failures %zu/%zu\n", p.params.empty() ? "(base)" : p.params.c_str(),
                            p.mean_score, p.mean_loss_pi, p.failures, p.runs);
            std::printf("score vs model L2 error correlation %.4f\n", res.score_model_error_correlation);
        }
    } catch (const DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const InputError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
