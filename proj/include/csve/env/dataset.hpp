#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "csve/core/error.hpp"
#include "csve/core/random.hpp"
#include "csve/env/env.hpp"
#include "csve/env/scripted.hpp"
#include "csve/tabular/dataset.hpp"

namespace csve::env {

inline constexpr int kDatasetSchemaVersion = 1;

// RNG stream tags used by generation; exposed so a transition can be re-simulated.
inline constexpr std::uint64_t kPolicyStream = 1;
inline constexpr std::uint64_t kResetStream = 2;
inline constexpr std::uint64_t kStepStream = 3;
inline constexpr std::uint64_t kAnchorSeed = 0xA2C4;
inline constexpr std::size_t kAnchorEpisodes = 100;

struct DatasetMeta {
    int schema_version = kDatasetSchemaVersion;
    std::string env;
    std::string tier;
    std::uint64_t seed = 0;
    std::size_t size = 0;
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    std::string behavior;
    nlohmann::json composition = nlohmann::json::array();
    double random_return = 0.0;
    double expert_return = 0.0;
    double behavior_return = 0.0;
};

inline nlohmann::json to_json(const DatasetMeta& m) {
    return {{"schema_version", m.schema_version}, {"env", m.env},
            {"tier", m.tier},                     {"seed", m.seed},
            {"size", m.size},                     {"state_dim", m.state_dim},
            {"action_dim", m.action_dim},         {"behavior", m.behavior},
            {"composition", m.composition},       {"random_return", m.random_return},
            {"expert_return", m.expert_return},   {"behavior_return", m.behavior_return}};
}

inline DatasetMeta meta_from_json(const nlohmann::json& j) {
    try {
        DatasetMeta m;
        m.schema_version = j.at("schema_version").get<int>();
        if (m.schema_version != kDatasetSchemaVersion) throw IoError("dataset: unsupported schema version");
        m.env = j.at("env").get<std::string>();
        m.tier = j.at("tier").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.size = j.at("size").get<std::size_t>();
        m.state_dim = j.at("state_dim").get<std::size_t>();
        m.action_dim = j.at("action_dim").get<std::size_t>();
        m.behavior = j.value("behavior", "");
        m.composition = j.value("composition", nlohmann::json::array());
        m.random_return = j.at("random_return").get<double>();
        m.expert_return = j.at("expert_return").get<double>();
        m.behavior_return = j.at("behavior_return").get<double>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("dataset meta.json: ") + e.what());
    }
}

/// Offline transitions stored column-wise: column i of `states` is s_i.
struct ContinuousTransitionDataset {
    Eigen::MatrixXd states;
    Eigen::MatrixXd actions;
    Eigen::VectorXd rewards;
    Eigen::MatrixXd next_states;
    Eigen::VectorXd dones;  // 0 or 1
    DatasetMeta meta;

    std::size_t size() const { return static_cast<std::size_t>(rewards.size()); }
    std::size_t state_dim() const { return static_cast<std::size_t>(states.rows()); }
    std::size_t action_dim() const { return static_cast<std::size_t>(actions.rows()); }

    void validate() const {
        const auto n = rewards.size();
        if (states.cols() != n || actions.cols() != n || next_states.cols() != n || dones.size() != n)
            throw InputError("dataset: arrays have different lengths");
        if (next_states.rows() != states.rows()) throw InputError("dataset: state and next-state dims differ");
        if (!rewards.allFinite() || !states.allFinite() || !actions.allFinite() || !next_states.allFinite())
            throw InputError("dataset: non-finite entries");
        for (Eigen::Index i = 0; i < n; ++i)
            if (dones[i] != 0.0 && dones[i] != 1.0) throw InputError("dataset: done flags must be 0 or 1");
    }
};

inline double normalized_score(double ret, double random_return, double expert_return) {
    if (!(expert_return != random_return)) throw InputError("normalized_score: degenerate anchors");
    return 100.0 * (ret - random_return) / (expert_return - random_return);
}

inline double normalized_score(double ret, const DatasetMeta& meta) {
    return normalized_score(ret, meta.random_return, meta.expert_return);
}

/// Episode returns (discounted by the env's return_discount), one entry per episode.
inline std::vector<double> rollout_returns(const Environment& env, const EpisodePolicy& make_policy,
                                           std::size_t episodes, std::uint64_t seed) {
    Rng policy_rng = make_rng(seed, kPolicyStream);
    Rng reset_rng = make_rng(seed, kResetStream);
    Rng step_rng = make_rng(seed, kStepStream);
    std::vector<double> out;
    for (std::size_t e = 0; e < episodes; ++e) {
        const Policy policy = make_policy(policy_rng);
        Eigen::VectorXd s = env.reset(reset_rng);
        double total = 0.0, weight = 1.0;
        for (std::size_t t = 0; t < env.spec().horizon; ++t) {
            const auto r = env.step(s, policy(s, policy_rng), step_rng);
            total += weight * r.reward;
            weight *= env.spec().return_discount;
            s = r.next_state;
            if (r.done) break;
        }
        out.push_back(total);
    }
    return out;
}

inline double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Random and expert mean returns over a fixed evaluation stream, shared by every dataset of an env.
inline std::pair<double, double> score_anchors(const Environment& env) {
    return {mean(rollout_returns(env, scripted_policy(env, Tier::random), kAnchorEpisodes, kAnchorSeed)),
            mean(rollout_returns(env, scripted_policy(env, Tier::expert), kAnchorEpisodes, kAnchorSeed))};
}

inline const std::vector<std::string>& dataset_tiers() {
    static const std::vector<std::string> tiers{"random", "medium", "medium_replay", "medium_expert", "expert"};
    return tiers;
}

/// Step RNG for transition i of a dataset generated with `seed`.
inline Rng transition_rng(std::uint64_t seed, std::size_t index) {
    return make_rng(derive_seed(seed, kStepStream), index);
}

/// Rolls out scripted behavior until `size` transitions are collected (the last episode may be cut).
///   medium_expert: first size/2 transitions from the medium policy, the rest from the expert.
///   medium_replay: the uniform-mixing probability moves linearly from the random tier to the
///                  medium tier as transitions are collected, standing in for a replay buffer.
inline ContinuousTransitionDataset generate_dataset(const Environment& env, const std::string& tier, std::size_t size,
                                                    std::uint64_t seed) {
    if (size == 0) throw InputError("generate_dataset: size must be at least 1");
    const auto& spec = env.spec();
    const double medium_noise = tier_noise(env, Tier::medium);
    const double expert_noise = tier_noise(env, Tier::expert);
    const double random_noise = tier_noise(env, Tier::random);

    ContinuousTransitionDataset ds;
    const auto n = static_cast<Eigen::Index>(size);
    ds.states.resize(static_cast<Eigen::Index>(spec.state_dim), n);
    ds.next_states.resize(static_cast<Eigen::Index>(spec.state_dim), n);
    ds.actions.resize(static_cast<Eigen::Index>(spec.action_dim), n);
    ds.rewards.resize(n);
    ds.dones.resize(n);

    auto noise_for = [&](std::size_t collected) -> std::pair<double, std::string> {
        if (tier == "random") return {random_noise, "random"};
        if (tier == "medium") return {medium_noise, "medium"};
        if (tier == "expert") return {expert_noise, "expert"};
        if (tier == "medium_expert") return collected < size / 2 ? std::pair{medium_noise, std::string("medium")}
                                                                 : std::pair{expert_noise, std::string("expert")};
        if (tier == "medium_replay") {
            const double frac = static_cast<double>(collected) / static_cast<double>(size);
            return {random_noise + (medium_noise - random_noise) * frac, "replay"};
        }
        throw InputError("generate_dataset: unknown tier '" + tier + "'");
    };
    noise_for(0);

    const NoisyExpert behavior(env);
    Rng policy_rng = make_rng(seed, kPolicyStream);
    Rng reset_rng = make_rng(seed, kResetStream);
    std::vector<double> episode_returns;
    std::vector<std::pair<std::string, std::size_t>> segments;
    std::size_t i = 0;
    while (i < size) {
        auto [noise, label] = noise_for(i);
        if (segments.empty() || segments.back().first != label) segments.emplace_back(label, 0);
        const Policy policy = behavior.episode(noise, policy_rng);
        Eigen::VectorXd s = env.reset(reset_rng);
        double total = 0.0, weight = 1.0;
        bool complete = false;
        for (std::size_t t = 0; t < spec.horizon && i < size; ++t) {
            if (tier == "medium_expert" && i == size / 2 && t > 0) break;  // halves do not share episodes
            const Eigen::VectorXd a = policy(s, policy_rng);
            Rng step_rng = transition_rng(seed, i);
            const auto r = env.step(s, a, step_rng);
            bool clipped = false;
            const auto col = static_cast<Eigen::Index>(i);
            ds.states.col(col) = s;
            ds.actions.col(col) = env.clip_action(a, clipped);
            ds.rewards[col] = r.reward;
            ds.next_states.col(col) = r.next_state;
            ds.dones[col] = r.done ? 1.0 : 0.0;
            ++segments.back().second;
            ++i;
            total += weight * r.reward;
            weight *= spec.return_discount;
            s = r.next_state;
            if (r.done || t + 1 == spec.horizon) {
                complete = true;
                break;
            }
        }
        if (complete) episode_returns.push_back(total);
        else if (episode_returns.empty() && i == size) episode_returns.push_back(total);
    }

    const auto [random_return, expert_return] = score_anchors(env);
    ds.meta.env = spec.name;
    ds.meta.tier = tier;
    ds.meta.seed = seed;
    ds.meta.size = size;
    ds.meta.state_dim = spec.state_dim;
    ds.meta.action_dim = spec.action_dim;
    ds.meta.random_return = random_return;
    ds.meta.expert_return = expert_return;
    ds.meta.behavior_return = mean(episode_returns);
    if (tier == "medium_replay")
        ds.meta.behavior = "policy-interpolation mixture from random to medium (uniform-mixing probability " +
                           std::to_string(random_noise) + " -> " + std::to_string(medium_noise) +
                           "), approximating a training replay buffer";
    else
        ds.meta.behavior = spec.name == "gridworld" ? "epsilon-greedy on the optimal Q"
                                                  : "scripted expert or uniform policy, drawn per episode";
    for (const auto& [label, count] : segments) ds.meta.composition.push_back({{"policy", label}, {"transitions", count}});
    return ds;
}

// ---- on-disk format --------------------------------------------------------

inline constexpr const char* kMetaFile = "meta.json";
inline constexpr const char* kTransitionsFile = "transitions.bin";

/// Directory with meta.json and transitions.bin (little-endian f64 records s | a | r | s' | done).
inline void save_dataset(const std::filesystem::path& dir, const ContinuousTransitionDataset& ds) {
    ds.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    {
        std::ofstream meta(dir / kMetaFile);
        if (!meta) throw IoError("cannot write " + (dir / kMetaFile).string());
        meta << to_json(ds.meta).dump(2) << "\n";
    }
    std::ofstream out(dir / kTransitionsFile, std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / kTransitionsFile).string());
    const auto ds_dim = ds.state_dim(), da_dim = ds.action_dim();
    std::vector<double> record(2 * ds_dim + da_dim + 2);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        std::size_t k = 0;
        for (std::size_t j = 0; j < ds_dim; ++j) record[k++] = ds.states(static_cast<Eigen::Index>(j), c);
        for (std::size_t j = 0; j < da_dim; ++j) record[k++] = ds.actions(static_cast<Eigen::Index>(j), c);
        record[k++] = ds.rewards[c];
        for (std::size_t j = 0; j < ds_dim; ++j) record[k++] = ds.next_states(static_cast<Eigen::Index>(j), c);
        record[k++] = ds.dones[c];
        out.write(reinterpret_cast<const char*>(record.data()), static_cast<std::streamsize>(record.size() * sizeof(double)));
    }
    if (!out) throw IoError("write failed for " + (dir / kTransitionsFile).string());
}

inline ContinuousTransitionDataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream meta_in(dir / kMetaFile);
    if (!meta_in) throw IoError("cannot open " + (dir / kMetaFile).string());
    ContinuousTransitionDataset ds;
    try {
        ds.meta = meta_from_json(nlohmann::json::parse(meta_in));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("dataset meta.json: ") + e.what());
    }
    const auto n = static_cast<Eigen::Index>(ds.meta.size);
    const auto S = static_cast<Eigen::Index>(ds.meta.state_dim), A = static_cast<Eigen::Index>(ds.meta.action_dim);
    std::ifstream in(dir / kTransitionsFile, std::ios::binary);
    if (!in) throw IoError("cannot open " + (dir / kTransitionsFile).string());
    const auto width = static_cast<std::size_t>(2 * S + A + 2);
    const auto expected = static_cast<std::uintmax_t>(width * sizeof(double)) * static_cast<std::uintmax_t>(n);
    if (std::filesystem::file_size(dir / kTransitionsFile) != expected)
        throw IoError("transitions.bin size does not match meta.json");
    ds.states.resize(S, n);
    ds.actions.resize(A, n);
    ds.rewards.resize(n);
    ds.next_states.resize(S, n);
    ds.dones.resize(n);
    std::vector<double> record(width);
    for (Eigen::Index i = 0; i < n; ++i) {
        in.read(reinterpret_cast<char*>(record.data()), static_cast<std::streamsize>(width * sizeof(double)));
        if (!in) throw IoError("transitions.bin truncated");
        std::size_t k = 0;
        for (Eigen::Index j = 0; j < S; ++j) ds.states(j, i) = record[k++];
        for (Eigen::Index j = 0; j < A; ++j) ds.actions(j, i) = record[k++];
        ds.rewards[i] = record[k++];
        for (Eigen::Index j = 0; j < S; ++j) ds.next_states(j, i) = record[k++];
        ds.dones[i] = record[k++];
    }
    ds.validate();
    return ds;
}

/// Header for the CSV import path: s_0..s_{S-1}, a_0.., r, s_next_0.., done.
inline std::string csv_header(std::size_t state_dim, std::size_t action_dim) {
    std::string h;
    for (std::size_t j = 0; j < state_dim; ++j) h += "s_" + std::to_string(j) + ",";
    for (std::size_t j = 0; j < action_dim; ++j) h += "a_" + std::to_string(j) + ",";
    h += "r,";
    for (std::size_t j = 0; j < state_dim; ++j) h += "s_next_" + std::to_string(j) + ",";
    return h + "done";
}

/// Reads an externally produced CSV; the header fixes the dimensions. Anchors and behavior
/// return are left at zero unless supplied through `meta`.
inline ContinuousTransitionDataset import_csv(const std::filesystem::path& path, DatasetMeta meta = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw InputError("CSV import: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t S = 0, A = 0;
    {
        std::stringstream hs(line);
        std::string col;
        while (std::getline(hs, col, ',')) {
            if (col.rfind("s_next_", 0) == 0) continue;
            if (col.rfind("s_", 0) == 0) ++S;
            else if (col.rfind("a_", 0) == 0) ++A;
        }
    }
    if (S == 0 || A == 0 || line != csv_header(S, A))
        throw InputError("CSV import: header must read " + csv_header(std::max<std::size_t>(S, 1), std::max<std::size_t>(A, 1)));
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            double x = 0.0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x);
            if (ec != std::errc() || ptr != cell.data() + cell.size())
                throw InputError("CSV import: bad number on line " + std::to_string(line_no));
            row.push_back(x);
        }
        if (row.size() != 2 * S + A + 2) throw InputError("CSV import: wrong column count on line " + std::to_string(line_no));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw InputError("CSV import: no transitions");
    const auto n = static_cast<Eigen::Index>(rows.size());
    ContinuousTransitionDataset ds;
    ds.states.resize(static_cast<Eigen::Index>(S), n);
    ds.actions.resize(static_cast<Eigen::Index>(A), n);
    ds.rewards.resize(n);
    ds.next_states.resize(static_cast<Eigen::Index>(S), n);
    ds.dones.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        std::size_t k = 0;
        for (std::size_t j = 0; j < S; ++j) ds.states(static_cast<Eigen::Index>(j), i) = r[k++];
        for (std::size_t j = 0; j < A; ++j) ds.actions(static_cast<Eigen::Index>(j), i) = r[k++];
        ds.rewards[i] = r[k++];
        for (std::size_t j = 0; j < S; ++j) ds.next_states(static_cast<Eigen::Index>(j), i) = r[k++];
        ds.dones[i] = r[k++];
    }
    meta.size = rows.size();
    meta.state_dim = S;
    meta.action_dim = A;
    if (meta.tier.empty()) meta.tier = "imported";
    if (meta.behavior.empty()) meta.behavior = "imported from " + path.filename().string();
    ds.meta = std::move(meta);
    ds.validate();
    return ds;
}

/// Index-encoded copy of a gridworld dataset.
inline tabular::TabularDataset tabularize(const ContinuousTransitionDataset& ds, const Environment& env) {
    if (env.spec().name != "gridworld") throw InputError("tabularize: only the gridworld is tabular");
    if (ds.state_dim() != 2 || ds.action_dim() != 2) throw InputError("tabularize: dataset is not a gridworld dataset");
    std::vector<tabular::TabularTransition> t;
    t.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        t.push_back({Gridworld::state_index(ds.states.col(c)), Gridworld::decode_action(ds.actions.col(c)), ds.rewards[c],
                     Gridworld::state_index(ds.next_states.col(c))});
    }
    return tabular::TabularDataset(Gridworld::num_states(), Gridworld::kNumActions, std::move(t));
}

}  // namespace csve::env
