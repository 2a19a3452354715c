#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>

#include "csve/env/dataset.hpp"

using namespace csve;
using namespace csve::env;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("csve_test_env_" + name);
    std::filesystem::remove_all(p);
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool bit_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

struct Stats {
    double mean, half_width;
};

Stats ci95(const std::vector<double>& v) {
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    return {m, 1.96 * sd / std::sqrt(static_cast<double>(v.size()))};
}

}  // namespace

TEST(EnvSpec, RejectsBadFields) {
    EnvSpec s{"x", 1, 1, Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0), 1, 1.0};
    EXPECT_NO_THROW(s.validate());
    auto bad = s;
    bad.horizon = 0;
    EXPECT_THROW(bad.validate(), InputError);
    bad = s;
    bad.state_dim = 0;
    EXPECT_THROW(bad.validate(), InputError);
    bad = s;
    bad.action_high[0] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(bad.validate(), InputError);
    bad = s;
    bad.return_discount = 0.0;
    EXPECT_THROW(bad.validate(), InputError);
    EXPECT_THROW(make_env("mujoco"), InputError);
}

TEST(PointMass, AtGoalWithZeroActionPaysZero) {
    PointMass2d env;
    Rng rng = make_rng(0, 0);
    const auto r = env.step(Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(2), rng);
    EXPECT_EQ(r.reward, 0.0);
    EXPECT_TRUE(r.done);
}

TEST(PointMass, ZeroActionFromRestStaysPut) {
    PointMass2d env;
    Rng rng = make_rng(0, 0);
    Eigen::VectorXd s(4);
    s << 0.7, -1.3, 0.0, 0.0;
    for (int t = 0; t < 50; ++t) s = env.step(s, Eigen::VectorXd::Zero(2), rng).next_state;
    EXPECT_EQ(s[0], 0.7);
    EXPECT_EQ(s[1], -1.3);
    EXPECT_EQ(s[2], 0.0);
    EXPECT_EQ(s[3], 0.0);
}

TEST(PointMass, ConstantForceMatchesClosedFormKinematics) {
    // p(t) = p0 + v0 t + a t^2 / 2, v(t) = v0 + a t for unclipped motion.
    PointMass2d env;
    Rng rng = make_rng(0, 0);
    Eigen::VectorXd s(4);
    s << -1.0, 0.5, 0.2, -0.1;
    const Eigen::Vector2d a(0.3, -0.6);
    const int n = 20;
    for (int t = 0; t < n; ++t) s = env.step(s, a, rng).next_state;
    const double T = n * PointMass2d::kDt;
    EXPECT_NEAR(s[0], -1.0 + 0.2 * T + 0.5 * 0.3 * T * T, 1e-12);
    EXPECT_NEAR(s[1], 0.5 - 0.1 * T - 0.5 * 0.6 * T * T, 1e-12);
    EXPECT_NEAR(s[2], 0.2 + 0.3 * T, 1e-12);
    EXPECT_NEAR(s[3], -0.1 - 0.6 * T, 1e-12);
}

TEST(PointMass, RewardUsesPreStepPositionAndActionCost) {
    PointMass2d env;
    Rng rng = make_rng(0, 0);
    Eigen::VectorXd s(4);
    s << 0.3, 0.4, 0.0, 0.0;
    const auto r = env.step(s, Eigen::Vector2d(1.0, -1.0), rng);
    EXPECT_NEAR(r.reward, -0.5 - 0.02, 1e-15);
    EXPECT_FALSE(r.done);
}

TEST(PointMass, OutOfBoundActionIsClippedAndFlagged) {
    PointMass2d env;
    Rng rng = make_rng(0, 0);
    const Eigen::VectorXd s = Eigen::Vector4d(1.0, 1.0, 0.0, 0.0);
    const auto clipped = env.step(s, Eigen::Vector2d(5.0, -0.5), rng);
    const auto inside = env.step(s, Eigen::Vector2d(1.0, -0.5), rng);
    EXPECT_TRUE(clipped.clipped);
    EXPECT_FALSE(inside.clipped);
    EXPECT_TRUE(bit_equal(clipped.next_state, inside.next_state));
    EXPECT_EQ(clipped.reward, inside.reward);
}

TEST(PointMass, InvalidStateThrows) {
    PointMass2d env;
    Rng rng = make_rng(0, 0);
    EXPECT_THROW(env.step(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(2), rng), InputError);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(4);
    s[0] = std::nan("");
    EXPECT_THROW(env.step(s, Eigen::VectorXd::Zero(2), rng), InputError);
}

TEST(Gridworld, RightFromOriginWithoutSlip) {
    Gridworld env(0.0);
    Rng rng = make_rng(1, 0);
    const auto r = env.step(Gridworld::state_vector(0), Gridworld::encode_action(0), rng);
    EXPECT_EQ(r.next_state, Eigen::Vector2d(1.0, 0.0));
    EXPECT_EQ(r.reward, 0.0);
    EXPECT_FALSE(r.done);
}

TEST(Gridworld, EnteringGoalPaysOneAndEnds) {
    Gridworld env(0.0);
    Rng rng = make_rng(1, 0);
    const auto r = env.step(Eigen::Vector2d(6.0, 7.0), Gridworld::encode_action(0), rng);
    EXPECT_EQ(r.reward, 1.0);
    EXPECT_TRUE(r.done);
}

TEST(Gridworld, ActionCodecRoundTrips) {
    for (std::size_t a = 0; a < Gridworld::kNumActions; ++a)
        EXPECT_EQ(Gridworld::decode_action(Gridworld::encode_action(a)), a);
    EXPECT_EQ(Gridworld::decode_action(Eigen::Vector2d(0.2, -0.9)), 3u);
    EXPECT_EQ(Gridworld::decode_action(Eigen::Vector2d(-0.5, 0.1)), 2u);
}

TEST(Gridworld, EmpiricalSlipFrequencyMatchesTabularModel) {
    Gridworld env(0.1);
    const auto model = env.tabular_model(0.95);
    const std::size_t s = Gridworld::index(3, 3);
    const std::size_t n = 200000;
    Eigen::VectorXd freq = Eigen::VectorXd::Zero(64);
    Rng rng = make_rng(5, 0);
    for (std::size_t i = 0; i < n; ++i)
        freq[static_cast<Eigen::Index>(Gridworld::state_index(
            env.step(Gridworld::state_vector(s), Gridworld::encode_action(1), rng).next_state))] += 1.0;
    freq /= static_cast<double>(n);
    EXPECT_LT((freq - model.transition(1).row(static_cast<Eigen::Index>(s)).transpose()).cwiseAbs().maxCoeff(), 0.005);
}

TEST(Gridworld, TabularModelRowsAreDistributions) {
    const auto model = Gridworld(0.1).tabular_model(0.95);
    for (std::size_t s = 0; s < model.num_states(); ++s)
        for (std::size_t a = 0; a < model.num_actions(); ++a) EXPECT_NEAR(model.transition(a).row(static_cast<Eigen::Index>(s)).sum(), 1.0, 1e-12);
    const auto g = Gridworld::goal_index();
    for (std::size_t a = 0; a < 4; ++a) {
        EXPECT_EQ(model.transition(g, a, g), 1.0);
        EXPECT_EQ(model.reward()(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(a)), 0.0);
    }
}

TEST(Pendulum, HangingAtRestStaysAtRest) {
    Pendulum env;
    Rng rng = make_rng(0, 0);
    Eigen::VectorXd s = Pendulum::observe(std::numbers::pi, 0.0);
    for (int t = 0; t < 20; ++t) s = env.step(s, Eigen::VectorXd::Zero(1), rng).next_state;
    EXPECT_NEAR(std::abs(Pendulum::angle(s)), std::numbers::pi, 1e-9);
    EXPECT_NEAR(s[2], 0.0, 1e-9);
}

TEST(Pendulum, SingleStepMatchesSemiImplicitEuler) {
    Pendulum env;
    Rng rng = make_rng(0, 0);
    const double th = 0.4, dot = -1.2, u = 1.5;
    const auto r = env.step(Pendulum::observe(th, dot), Eigen::VectorXd::Constant(1, u), rng);
    const double dot2 = dot + (15.0 * std::sin(th) + 3.0 * u) * 0.05;
    EXPECT_NEAR(r.next_state[2], dot2, 1e-14);
    EXPECT_NEAR(Pendulum::angle(r.next_state), th + dot2 * 0.05, 1e-14);
    EXPECT_NEAR(r.reward, -(th * th + 0.1 * dot * dot + 0.001 * u * u), 1e-14);
    EXPECT_FALSE(r.done);
}

TEST(ScriptedPolicy, UnknownTierThrows) {
    EXPECT_THROW(tier_from_string("novice"), InputError);
    EXPECT_THROW(generate_dataset(PointMass2d(), "novice", 10, 0), InputError);
}

TEST(ScriptedPolicy, RandomTierIsUniformWithinBounds) {
    Pendulum env;
    Rng rng = make_rng(9, 0);
    const Policy p = scripted_policy(env, Tier::random)(rng);
    std::vector<double> x;
    for (int i = 0; i < 10000; ++i) {
        const double a = p(env.reset(rng), rng)[0];
        ASSERT_GE(a, -2.0);
        ASSERT_LE(a, 2.0);
        x.push_back((a + 2.0) / 4.0);
    }
    std::sort(x.begin(), x.end());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double n = static_cast<double>(x.size());
        d = std::max({d, std::abs(static_cast<double>(i + 1) / n - x[i]), std::abs(x[i] - static_cast<double>(i) / n)});
    }
    EXPECT_LT(d, 1.63 / std::sqrt(10000.0));  // KS critical value at the 1% level
}

TEST(ScriptedPolicy, GridworldExpertNearOptimalValue) {
    Gridworld env;
    const auto model = env.tabular_model(Gridworld::kDiscount);
    const auto q = tabular::optimal_q_values(model);
    const double v_star = model.initial_dist().dot(q.values().rowwise().maxCoeff());

    GridworldExpert expert(env);
    Eigen::MatrixXd probs = Eigen::MatrixXd::Constant(64, 4, 0.05 / 4.0);
    for (std::size_t s = 0; s < 64; ++s) probs(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(expert.action(s))) += 0.95;
    const double exact = tabular::policy_return(model, tabular::PolicyTable(probs));
    EXPECT_GE(exact, 0.95 * v_star);

    const auto returns = rollout_returns(env, scripted_policy(env, Tier::expert), 2000, 77);
    const auto st = ci95(returns);
    EXPECT_NEAR(st.mean, exact, 3.0 * st.half_width);
    EXPECT_GE(st.mean, 0.95 * v_star);
}

TEST(ScriptedPolicy, TierReturnsOrderedWithSeparatedIntervals) {
    for (const auto& name : builtin_env_names()) {
        const auto env = make_env(name);
        const auto r = ci95(rollout_returns(*env, scripted_policy(*env, Tier::random), 100, 11));
        const auto m = ci95(rollout_returns(*env, scripted_policy(*env, Tier::medium), 100, 12));
        const auto e = ci95(rollout_returns(*env, scripted_policy(*env, Tier::expert), 100, 13));
        EXPECT_LT(r.mean + r.half_width, m.mean - m.half_width) << name;
        EXPECT_LT(m.mean + m.half_width, e.mean - e.half_width) << name;
    }
}

TEST(ScriptedPolicy, MediumTierScoresBetweenFortyAndSeventy) {
    for (const auto& name : builtin_env_names()) {
        const auto env = make_env(name);
        const auto [lo, hi] = score_anchors(*env);
        const double m = mean(rollout_returns(*env, scripted_policy(*env, Tier::medium), 200, 21));
        const double score = normalized_score(m, lo, hi);
        EXPECT_GE(score, 40.0) << name;
        EXPECT_LE(score, 70.0) << name;
    }
}

TEST(NormalizedScore, AnchorsMapToZeroAndHundred) {
    PointMass2d env;
    const auto [lo, hi] = score_anchors(env);
    EXPECT_DOUBLE_EQ(normalized_score(mean(rollout_returns(env, scripted_policy(env, Tier::expert), kAnchorEpisodes, kAnchorSeed)), lo, hi), 100.0);
    EXPECT_DOUBLE_EQ(normalized_score(mean(rollout_returns(env, scripted_policy(env, Tier::random), kAnchorEpisodes, kAnchorSeed)), lo, hi), 0.0);
    EXPECT_DOUBLE_EQ(normalized_score(-5.0, -10.0, 0.0), 50.0);
    EXPECT_THROW(normalized_score(1.0, 2.0, 2.0), InputError);
}

TEST(GenerateDataset, SizeOneHasOneTransition) {
    const auto ds = generate_dataset(PointMass2d(), "medium", 1, 3);
    EXPECT_EQ(ds.size(), 1u);
    EXPECT_EQ(ds.meta.size, 1u);
    EXPECT_THROW(generate_dataset(PointMass2d(), "medium", 0, 3), InputError);
}

TEST(GenerateDataset, MediumExpertHalvesComeFromTheirPolicies) {
    const std::size_t n = 1000;
    const auto ds = generate_dataset(PointMass2d(), "medium_expert", 2 * n, 4);
    ASSERT_EQ(ds.meta.composition.size(), 2u);
    EXPECT_EQ(ds.meta.composition[0]["policy"], "medium");
    EXPECT_EQ(ds.meta.composition[0]["transitions"], n);
    EXPECT_EQ(ds.meta.composition[1]["policy"], "expert");
    EXPECT_EQ(ds.meta.composition[1]["transitions"], n);
    // Expert transitions are the noiseless controller applied to the recorded state.
    for (std::size_t i = n; i < 2 * n; ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        ASSERT_TRUE(bit_equal(ds.actions.col(c), pointmass_expert_action(ds.states.col(c)))) << i;
    }
    // The medium half contains uniform-policy episodes that the controller would not produce.
    std::size_t off_expert = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        off_expert += !bit_equal(ds.actions.col(c), pointmass_expert_action(ds.states.col(c)));
    }
    EXPECT_GT(off_expert, 0u);
}

TEST(GenerateDataset, EveryTransitionResimulatesExactly) {
    for (const auto& name : builtin_env_names()) {
        const auto env = make_env(name);
        const std::uint64_t seed = 8;
        const auto ds = generate_dataset(*env, "medium_replay", 3000, seed);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto c = static_cast<Eigen::Index>(i);
            Rng rng = transition_rng(seed, i);
            const auto r = env->step(ds.states.col(c), ds.actions.col(c), rng);
            ASSERT_EQ(r.reward, ds.rewards[c]) << name << " " << i;
            ASSERT_TRUE(bit_equal(r.next_state, ds.next_states.col(c))) << name << " " << i;
            ASSERT_EQ(r.done ? 1.0 : 0.0, ds.dones[c]) << name << " " << i;
        }
    }
}

TEST(GenerateDataset, EpisodesChainStateToNextState) {
    const auto ds = generate_dataset(Pendulum(), "medium", 1000, 6);
    // Episodes are 200 steps; inside an episode s_{i+1} = s'_i.
    for (std::size_t i = 0; i + 1 < ds.size(); ++i) {
        if ((i + 1) % 200 == 0) continue;
        const auto c = static_cast<Eigen::Index>(i);
        ASSERT_TRUE(bit_equal(ds.states.col(c + 1), ds.next_states.col(c))) << i;
    }
}

TEST(GenerateDataset, SameSeedSameFilesDifferentSeedDifferent) {
    const auto a = temp_dir("rerun_a"), b = temp_dir("rerun_b"), c = temp_dir("rerun_c");
    save_dataset(a, generate_dataset(Gridworld(), "medium", 500, 10));
    save_dataset(b, generate_dataset(Gridworld(), "medium", 500, 10));
    save_dataset(c, generate_dataset(Gridworld(), "medium", 500, 11));
    EXPECT_EQ(slurp(a / "transitions.bin"), slurp(b / "transitions.bin"));
    EXPECT_EQ(slurp(a / "meta.json"), slurp(b / "meta.json"));
    EXPECT_NE(slurp(a / "transitions.bin"), slurp(c / "transitions.bin"));
    for (const auto& p : {a, b, c}) std::filesystem::remove_all(p);
}

TEST(GenerateDataset, BehaviorReturnOrderedByTier) {
    PointMass2d env;
    const auto r = generate_dataset(env, "random", 20000, 1).meta.behavior_return;
    const auto m = generate_dataset(env, "medium", 20000, 1).meta.behavior_return;
    const auto e = generate_dataset(env, "expert", 20000, 1).meta.behavior_return;
    EXPECT_LT(r, m);
    EXPECT_LT(m, e);
}

TEST(DatasetIo, RoundTripIsBitExact) {
    const auto dir = temp_dir("roundtrip");
    const auto ds = generate_dataset(PointMass2d(), "medium_expert", 777, 12);
    save_dataset(dir, ds);
    EXPECT_EQ(std::filesystem::file_size(dir / "transitions.bin"), 777u * (4 + 2 + 1 + 4 + 1) * 8u);
    const auto back = load_dataset(dir);
    EXPECT_TRUE(bit_equal(back.states, ds.states));
    EXPECT_TRUE(bit_equal(back.actions, ds.actions));
    EXPECT_TRUE(bit_equal(back.rewards, ds.rewards));
    EXPECT_TRUE(bit_equal(back.next_states, ds.next_states));
    EXPECT_TRUE(bit_equal(back.dones, ds.dones));
    EXPECT_EQ(to_json(back.meta), to_json(ds.meta));
    std::filesystem::remove_all(dir);
}

TEST(DatasetIo, RecordLayoutIsStateActionRewardNextDone) {
    const auto dir = temp_dir("layout");
    ContinuousTransitionDataset ds;
    ds.states = Eigen::MatrixXd::Constant(2, 1, 1.5);
    ds.actions = Eigen::MatrixXd::Constant(1, 1, -2.0);
    ds.rewards = Eigen::VectorXd::Constant(1, 0.25);
    ds.next_states = Eigen::MatrixXd(2, 1);
    ds.next_states << 3.0, 4.0;
    ds.dones = Eigen::VectorXd::Constant(1, 1.0);
    ds.meta.size = 1;
    ds.meta.state_dim = 2;
    ds.meta.action_dim = 1;
    save_dataset(dir, ds);
    const std::string bytes = slurp(dir / "transitions.bin");
    ASSERT_EQ(bytes.size(), 7u * 8u);
    double rec[7];
    std::memcpy(rec, bytes.data(), sizeof rec);
    const double expected[7] = {1.5, 1.5, -2.0, 0.25, 3.0, 4.0, 1.0};
    for (int i = 0; i < 7; ++i) EXPECT_EQ(rec[i], expected[i]);
    std::filesystem::remove_all(dir);
}

TEST(DatasetIo, MissingOrCorruptFilesRaiseIoError) {
    EXPECT_THROW(load_dataset(temp_dir("absent")), IoError);
    const auto dir = temp_dir("truncated");
    save_dataset(dir, generate_dataset(PointMass2d(), "random", 10, 1));
    std::filesystem::resize_file(dir / "transitions.bin", 8 * 12 * 9);
    EXPECT_THROW(load_dataset(dir), IoError);
    std::ofstream(dir / "meta.json") << "{not json";
    EXPECT_THROW(load_dataset(dir), IoError);
    std::filesystem::remove_all(dir);
}

TEST(DatasetIo, CsvImportMatchesGeneratedData) {
    const auto dir = temp_dir("csv");
    std::filesystem::create_directories(dir);
    const auto ds = generate_dataset(Pendulum(), "random", 50, 2);
    {
        std::ofstream out(dir / "d.csv");
        out << csv_header(3, 1) << "\n";
        out.precision(17);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto c = static_cast<Eigen::Index>(i);
            for (int j = 0; j < 3; ++j) out << ds.states(j, c) << ",";
            out << ds.actions(0, c) << "," << ds.rewards[c] << ",";
            for (int j = 0; j < 3; ++j) out << ds.next_states(j, c) << ",";
            out << ds.dones[c] << "\n";
        }
    }
    const auto back = import_csv(dir / "d.csv");
    EXPECT_EQ(back.size(), 50u);
    EXPECT_EQ(back.meta.tier, "imported");
    EXPECT_TRUE(bit_equal(back.states, ds.states));
    EXPECT_TRUE(bit_equal(back.actions, ds.actions));
    EXPECT_TRUE(bit_equal(back.rewards, ds.rewards));
    EXPECT_TRUE(bit_equal(back.next_states, ds.next_states));

    std::ofstream(dir / "bad.csv") << "x,y\n1,2\n";
    EXPECT_THROW(import_csv(dir / "bad.csv"), InputError);
    std::ofstream(dir / "short.csv") << csv_header(1, 1) << "\n1,2,3\n";
    EXPECT_THROW(import_csv(dir / "short.csv"), InputError);
    std::ofstream(dir / "done.csv") << csv_header(1, 1) << "\n1,2,3,4,0.5\n";
    EXPECT_THROW(import_csv(dir / "done.csv"), InputError);
    std::filesystem::remove_all(dir);
}

TEST(Tabularize, SingleTransition) {
    ContinuousTransitionDataset ds;
    ds.states = Gridworld::state_vector(Gridworld::index(2, 5));
    ds.actions = Gridworld::encode_action(3);
    ds.rewards = Eigen::VectorXd::Zero(1);
    ds.next_states = Gridworld::state_vector(Gridworld::index(2, 4));
    ds.dones = Eigen::VectorXd::Zero(1);
    const auto t = tabularize(ds, Gridworld());
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t.count(Gridworld::index(2, 5), 3), 1u);
    EXPECT_EQ(t.transitions()[0].next_state, Gridworld::index(2, 4));
    EXPECT_EQ(t.unvisited_pairs().size(), 64u * 4u - 1u);
}

TEST(Tabularize, CountsMatchRecountOfTieredDataset) {
    Gridworld env;
    const auto ds = generate_dataset(env, "medium_expert", 5000, 5);
    const auto t = tabularize(ds, env);
    std::map<std::pair<long, long>, std::map<std::pair<int, int>, std::size_t>> recount;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        const double ax = ds.actions(0, c), ay = ds.actions(1, c);
        const std::pair<int, int> dir = std::abs(ax) >= std::abs(ay) ? std::pair{ax > 0 ? 1 : -1, 0}
                                                                     : std::pair{0, ay > 0 ? 1 : -1};
        ++recount[{std::lround(ds.states(0, c)), std::lround(ds.states(1, c))}][dir];
    }
    const std::map<std::pair<int, int>, std::size_t> dir_to_action{{{1, 0}, 0}, {{0, 1}, 1}, {{-1, 0}, 2}, {{0, -1}, 3}};
    std::size_t unvisited = 0;
    for (long x = 0; x < 8; ++x)
        for (long y = 0; y < 8; ++y)
            for (const auto& [dir, a] : dir_to_action) {
                const auto outer = recount.find({x, y});
                const std::size_t expected = outer == recount.end() ? 0 : (outer->second.count(dir) ? outer->second.at(dir) : 0);
                ASSERT_EQ(t.count(Gridworld::index(static_cast<std::size_t>(x), static_cast<std::size_t>(y)), a), expected);
                unvisited += expected == 0;
            }
    EXPECT_EQ(t.unvisited_pairs().size(), unvisited);
    EXPECT_GT(unvisited, 0u);
}

TEST(Tabularize, RejectsNonTabularEnv) {
    const auto ds = generate_dataset(PointMass2d(), "random", 10, 1);
    EXPECT_THROW(tabularize(ds, PointMass2d()), InputError);
    EXPECT_THROW(tabularize(ds, Gridworld()), InputError);
}
