#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <sstream>

#include "csve/harness/sweep.hpp"
#include "csve/harness/theory.hpp"

using namespace csve;
using namespace csve::harness;

namespace {

agent::CsveHyperParams quick_hp(std::size_t steps) {
    agent::CsveHyperParams hp;
    hp.total_steps = steps;
    hp.hidden = {8};
    hp.batch_size = 16;
    hp.n_action_samples = 2;
    hp.log_interval = 25;
    hp.eval_interval = steps;
    hp.n_eval = 2;
    hp.lambda = 0.0;
    hp.ood_variant = agent::OodVariant::gaussian_noise;
    return hp;
}

env::ContinuousTransitionDataset pointmass_data(std::size_t n) {
    const auto e = env::make_env("pointmass2d");
    return env::generate_dataset(*e, "medium", n, 11);
}

}  // namespace

TEST(SetHyperparam, ParsesNumbersNamesAndWidths) {
    agent::CsveHyperParams hp;
    set_hyperparam(hp, "lambda", "0.25");
    set_hyperparam(hp, "alpha_mode", "fixed");
    set_hyperparam(hp, "hidden", "32x16");
    set_hyperparam(hp, "n_action_samples", "4");
    EXPECT_EQ(hp.lambda, 0.25);
    EXPECT_EQ(hp.alpha_mode, agent::AlphaMode::fixed);
    EXPECT_EQ(hp.hidden, (std::vector<std::size_t>{32, 16}));
    EXPECT_EQ(hp.n_action_samples, 4u);
    set_hyperparam(hp, "hidden", "[8,8,8]");
    EXPECT_EQ(hp.hidden.size(), 3u);
}

TEST(SetHyperparam, RejectsUnknownKeysAndBadValues) {
    agent::CsveHyperParams hp;
    EXPECT_THROW(set_hyperparam(hp, "learning_rate", "1"), ConfigError);
    EXPECT_THROW(set_hyperparam(hp, "tau", "-1"), ConfigError);
    EXPECT_THROW(set_hyperparam(hp, "beta", "abc"), ConfigError);
    EXPECT_THROW(set_hyperparam(hp, "hidden", "8xq"), ConfigError);
}

TEST(Grid, CardinalityAndOrder) {
    const auto pts = grid_points({parse_axis("lambda=0,0.5"), parse_axis("beta=1,3,10")});
    ASSERT_EQ(pts.size(), 6u);
    EXPECT_EQ(pts[0][0].second, "0");
    EXPECT_EQ(pts[0][1].second, "1");
    EXPECT_EQ(pts[2][1].second, "10");
    EXPECT_EQ(pts[3][0].second, "0.5");
    EXPECT_EQ(grid_points({}).size(), 1u);
    EXPECT_THROW(parse_axis("lambda"), ConfigError);
    EXPECT_THROW(parse_axis("lambda=0,,1"), ConfigError);
}

TEST(Pearson, MatchesReferenceValue) {
    EXPECT_NEAR(pearson({1, 2, 3, 4}, {2, 4, 5, 4}), 0.7181848464596079, 1e-15);
    EXPECT_NEAR(pearson({1, 2, 3}, {3, 2, 1}), -1.0, 1e-15);
    EXPECT_TRUE(std::isnan(pearson({1, 1, 1}, {1, 2, 3})));
    EXPECT_TRUE(std::isnan(pearson({1}, {2})));
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
    std::vector<std::atomic<int>> hits(97);
    parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(Sweep, SinglePointEqualsTrain) {
    const auto data = pointmass_data(400);
    SweepConfig cfg;
    cfg.hp = quick_hp(50);
    cfg.seeds = {3};
    const auto r = run_sweep(data, cfg);
    ASSERT_EQ(r.rows.size(), 1u);
    const auto e = env::make_env("pointmass2d");
    agent::TrainOptions opts;
    opts.eval_env = e.get();
    const auto direct = agent::train(agent::Algorithm::csve, data, nullptr, cfg.hp, 3, opts);
    EXPECT_EQ(r.rows[0].final_return, direct.final_eval->mean);
    EXPECT_EQ(r.rows[0].loss_pi, direct.log.back().loss_pi);
    EXPECT_EQ(r.points[0].mean_score, r.rows[0].final_score);
}

TEST(Sweep, RowsPerPointAndSeedAndWorkerCountInvariance) {
    const auto data = pointmass_data(400);
    SweepConfig cfg;
    cfg.hp = quick_hp(30);
    cfg.axes = {parse_axis("beta=1,3"), parse_axis("omega=0.005,0.05")};
    cfg.seeds = {1, 2};
    const auto a = run_sweep(data, cfg);
    cfg.workers = 3;
    const auto b = run_sweep(data, cfg);
    EXPECT_EQ(a.rows.size(), 8u);
    EXPECT_EQ(a.points.size(), 4u);
    std::ostringstream sa, sb;
    write_sweep_csv(sa, a);
    write_sweep_csv(sb, b);
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_EQ(sa.str().rfind("schema_version,1\n", 0), 0u);
}

TEST(Sweep, DivergedRunsAreRecordedAndSweepContinues) {
    auto data = pointmass_data(200);
    data.rewards.setConstant(1e200);
    SweepConfig cfg;
    cfg.hp = quick_hp(10);
    cfg.axes = {parse_axis("beta=1,3")};
    const auto r = run_sweep(data, cfg);
    ASSERT_EQ(r.rows.size(), 2u);
    for (const auto& row : r.rows) EXPECT_EQ(row.status, "diverged");
    EXPECT_EQ(r.points[1].failures, 1u);
}

TEST(Sweep, ModelStepsAxisTrainsOneModelPerValue) {
    const auto data = pointmass_data(600);
    SweepConfig cfg;
    cfg.hp = quick_hp(20);
    cfg.hp.lambda = 0.5;
    cfg.model.members = 1;
    cfg.model.hidden = {8};
    cfg.holdout_size = 200;
    cfg.axes = {parse_axis("model_steps=5,400")};
    const auto r = run_sweep(data, cfg);
    ASSERT_EQ(r.rows.size(), 2u);
    for (const auto& row : r.rows) {
        EXPECT_EQ(row.status, "ok") << row.message;
        EXPECT_TRUE(std::isfinite(row.model_l2));
    }
    EXPECT_NE(r.rows[0].model_l2, r.rows[1].model_l2);
    EXPECT_GT(r.rows[0].model_l2, r.rows[1].model_l2);
    EXPECT_FALSE(std::isnan(r.score_model_error_correlation));
}

TEST(Theory, EveryCheckPassesOnSmallSeedRanges) {
    for (const auto& c : cert_checks()) {
        const auto rows = c.run(5, 77);
        ASSERT_FALSE(rows.empty()) << c.name;
        for (const auto& s : summarize(rows)) EXPECT_EQ(s.passed, s.total) << s.check;
    }
}

TEST(Theory, CsvCarriesSchemaAndOneRowPerCertification) {
    const auto rows = cert_lemma2(3, 0);
    EXPECT_EQ(rows.size(), 15u);
    std::ostringstream out;
    write_cert_csv(out, rows);
    const auto text = out.str();
    EXPECT_EQ(text.rfind("schema_version,1\ncheck,seed,holds,lhs,rhs,alpha,alpha_threshold,note\n", 0), 0u);
    EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), rows.size() + 2);
}

TEST(Theory, Theorem1FailsWellBelowThresholdOnSomeInstances) {
    std::size_t below = 0, failures = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto inst = finite_data_instance(seed, 30, 0.05);
        const double thr = conservative::alpha_threshold_theorem1(inst.mdp, inst.policy, inst.penalty, inst.data, inst.sem);
        inst.penalty.alpha = 0.0;
        const auto rep = conservative::certify_theorem1(inst.mdp, inst.empirical, inst.policy, inst.penalty, inst.data, inst.sem);
        below += thr > 0.0 ? 1 : 0;
        failures += rep.holds ? 0 : 1;
        EXPECT_FALSE(rep.precondition_met && thr > 0.0);
    }
    EXPECT_GT(below, 0u);
    EXPECT_GT(failures, 0u);
}
