#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "csve/conservative/certify.hpp"
#include "csve/conservative/operator.hpp"
#include "csve/core/random.hpp"
#include "csve/env/dataset.hpp"
#include "csve/env/env.hpp"
#include "csve/tabular/random.hpp"

namespace csve::harness {

using namespace csve::tabular;
using namespace csve::conservative;

inline constexpr int kCertSchemaVersion = 1;

/// One certification outcome. lhs/rhs follow the report convention of the underlying check.
struct CertRow {
    std::string check;
    std::uint64_t seed = 0;
    bool holds = false;
    double lhs = 0.0;
    double rhs = 0.0;
    double alpha = std::numeric_limits<double>::quiet_NaN();
    double alpha_threshold = std::numeric_limits<double>::quiet_NaN();
    std::string note;
};

struct CertSummary {
    std::string check;
    std::size_t total = 0;
    std::size_t passed = 0;
    double pass_rate() const { return total ? static_cast<double>(passed) / static_cast<double>(total) : 0.0; }
};

inline std::vector<CertSummary> summarize(const std::vector<CertRow>& rows) {
    std::vector<CertSummary> out;
    std::map<std::string, std::size_t> index;
    for (const auto& r : rows) {
        auto [it, fresh] = index.emplace(r.check, out.size());
        if (fresh) out.push_back({r.check, 0, 0});
        auto& s = out[it->second];
        ++s.total;
        s.passed += r.holds ? 1 : 0;
    }
    return out;
}

inline void write_cert_csv(std::ostream& out, const std::vector<CertRow>& rows) {
    auto num = [](double x) {
        if (std::isnan(x)) return std::string("nan");
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", x);
        return std::string(buf);
    };
    out << "schema_version," << kCertSchemaVersion << "\n";
    out << "check,seed,holds,lhs,rhs,alpha,alpha_threshold,note\n";
    for (const auto& r : rows) {
        std::string note = r.note;
        for (auto& c : note)
            if (c == ',' || c == '\n') c = ';';
        out << r.check << "," << r.seed << "," << (r.holds ? 1 : 0) << "," << num(r.lhs) << "," << num(r.rhs) << ","
            << num(r.alpha) << "," << num(r.alpha_threshold) << "," << note << "\n";
    }
}

// ---- instance generators ---------------------------------------------------------

/// d_u: half uniform on a random support (states 0 and 1 always kept), half Dirichlet; d: Dirichlet
/// on the same support.
inline CsvePenaltyConfig random_penalty(std::size_t S, double alpha, Rng& rng, bool full_support = false) {
    std::vector<bool> support(S, true);
    if (!full_support)
        for (std::size_t s = 2; s < S; ++s) support[s] = uniform(rng) < 0.8;
    Eigen::VectorXd floor = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(S));
    for (std::size_t s = 0; s < S; ++s) floor[static_cast<Eigen::Index>(s)] = support[s] ? 1.0 : 0.0;
    floor /= floor.sum();
    const auto raw = random_distribution_on(support, rng);
    auto du = normalized_distribution(0.5 * floor + 0.5 * raw.probs(), DistributionKind::custom);
    auto d = random_distribution_on(support, rng, DistributionKind::model_next_state);
    return {alpha, std::move(d), std::move(du)};
}

/// Finite-data instance: random MDP, Dirichlet behavior, uniform state sampling.
struct FiniteDataInstance {
    TabularMdp mdp;
    TabularMdp empirical;
    PolicyTable policy;
    TabularDataset data;
    SamplingErrorModel sem;
    CsvePenaltyConfig penalty;  // alpha left at 0; d = stationary distribution of P_hat^pi on supp d_u
};

inline FiniteDataInstance finite_data_instance(std::uint64_t seed, std::size_t samples, double delta) {
    Rng rng = make_rng(seed, 31);
    const std::size_t S = 3 + uniform_index(rng, 8), A = 2 + uniform_index(rng, 3);
    const double gamma = 0.9;
    auto mdp = random_mdp(S, A, gamma, rng);
    const auto behavior = random_policy(S, A, rng);
    auto policy = random_policy(S, A, rng);
    auto data = sample_dataset(mdp, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(S), 1.0 / static_cast<double>(S)), behavior,
                               samples, rng);
    auto empirical = empirical_mdp(data, mdp);
    auto du = dataset_state_marginal(data);
    Eigen::VectorXd d = stationary_distribution(empirical, policy).probs();
    for (std::size_t s = 0; s < S; ++s)
        if (!(du[s] > 0.0)) d[static_cast<Eigen::Index>(s)] = 0.0;
    auto sem = calibrate_sampling_error(S, A, mdp.r_max(), gamma, delta);
    return {std::move(mdp), std::move(empirical), std::move(policy), std::move(data), sem,
            {0.0, normalized_distribution(std::move(d), DistributionKind::model_next_state), std::move(du)}};
}

// ---- checks ------------------------------------------------------------------------

/// ||T V - T V'||_inf <= gamma ||V - V'||_inf + 1e-12 on random tuples (|S| <= 20, |A| <= 5,
/// alpha in [0, 50]).
inline std::vector<CertRow> cert_contraction(std::size_t count, std::uint64_t base_seed) {
    std::vector<CertRow> rows;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t seed = base_seed + i;
        Rng rng = make_rng(seed, 21);
        const std::size_t S = 1 + uniform_index(rng, 20), A = 1 + uniform_index(rng, 5);
        const double gamma = uniform(rng, 0.0, 0.999);
        const auto m = random_mdp(S, A, gamma, rng);
        const auto pi = random_policy(S, A, rng);
        const auto pen = random_penalty(S, uniform(rng, 0.0, 50.0), rng);
        Eigen::VectorXd v(static_cast<Eigen::Index>(S)), w(static_cast<Eigen::Index>(S));
        for (Eigen::Index s = 0; s < v.size(); ++s) {
            v[s] = uniform(rng, -100.0, 100.0);
            w[s] = uniform(rng, -100.0, 100.0);
        }
        const Eigen::VectorXd tv = csve_operator(ValueTable(v), pi, m, pen).values();
        const Eigen::VectorXd tw = csve_operator(ValueTable(w), pi, m, pen).values();
        CertRow r{"contraction", seed, false, 0.0, 0.0, 0.0, std::numeric_limits<double>::quiet_NaN(), ""};
        r.lhs = (tv - tw).lpNorm<Eigen::Infinity>();
        r.rhs = gamma * (v - w).lpNorm<Eigen::Infinity>() + 1e-12;
        r.alpha = pen.alpha;
        r.holds = r.lhs <= r.rhs;
        rows.push_back(r);
    }
    return rows;
}

/// max |argmin objective - operator| <= 1e-9.
inline std::vector<CertRow> cert_argmin_equivalence(std::size_t count, std::uint64_t base_seed) {
    std::vector<CertRow> rows;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t seed = base_seed + i;
        Rng rng = make_rng(seed, 22);
        const std::size_t S = 1 + uniform_index(rng, 20), A = 1 + uniform_index(rng, 5);
        const auto m = random_mdp(S, A, uniform(rng, 0.0, 0.99), rng);
        const auto pi = random_policy(S, A, rng);
        const auto pen = random_penalty(S, uniform(rng, 0.0, 50.0), rng);
        Eigen::VectorXd v(static_cast<Eigen::Index>(S));
        for (Eigen::Index s = 0; s < v.size(); ++s) v[s] = uniform(rng, -10.0, 10.0);
        CertRow r{"argmin_equivalence", seed, false, 0.0, 0.0, 0.0, std::numeric_limits<double>::quiet_NaN(), ""};
        r.lhs = (csve_objective_argmin(ValueTable(v), pi, m, pen).values() - csve_operator(ValueTable(v), pi, m, pen).values())
                    .lpNorm<Eigen::Infinity>();
        r.rhs = 1e-9;
        r.alpha = pen.alpha;
        r.holds = r.lhs <= r.rhs;
        rows.push_back(r);
    }
    return rows;
}

/// M_hat = M, any alpha > 0, d the stationary distribution of P^pi.
inline std::vector<CertRow> cert_theorem1_exact(std::size_t count, std::uint64_t base_seed) {
    std::vector<CertRow> rows;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t seed = base_seed + i;
        Rng rng = make_rng(seed, 23);
        const std::size_t S = 2 + uniform_index(rng, 10), A = 1 + uniform_index(rng, 4);
        const auto m = random_mdp(S, A, 0.9, rng);
        const auto pi = random_policy(S, A, rng);
        auto du = random_penalty(S, 0.0, rng, true).d_u;
        CsvePenaltyConfig pen{uniform(rng, 1e-3, 50.0), stationary_distribution(m, pi), du};
        const auto rep = certify_theorem1(m, m, pi, pen, TabularDataset(S, A, {}), SamplingErrorModel{});
        rows.push_back({"theorem1_exact", seed, rep.holds, rep.lhs, rep.rhs, pen.alpha, rep.alpha_threshold, rep.note});
    }
    return rows;
}

/// Finite data, alpha = alpha_factor x the calibrated threshold.
inline std::vector<CertRow> cert_theorem1_finite(std::size_t count, std::uint64_t base_seed, std::size_t samples = 500,
                                                 double delta = 0.05, double alpha_factor = 1.1) {
    std::vector<CertRow> rows;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t seed = base_seed + i;
        auto inst = finite_data_instance(seed, samples, delta);
        const double thr = alpha_threshold_theorem1(inst.mdp, inst.policy, inst.penalty, inst.data, inst.sem);
        inst.penalty.alpha = alpha_factor * thr;
        const auto rep = certify_theorem1(inst.mdp, inst.empirical, inst.policy, inst.penalty, inst.data, inst.sem);
        rows.push_back({"theorem1_finite", seed, rep.holds, rep.lhs, rep.rhs, inst.penalty.alpha, rep.alpha_threshold, rep.note});
    }
    return rows;
}

/// d_u-weighted bound with the accumulated sampling error, same instances as theorem1_finite.
inline std::vector<CertRow> cert_theorem2(std::size_t count, std::uint64_t base_seed, std::size_t samples = 500,
                                          double delta = 0.05, double alpha_factor = 1.1) {
    std::vector<CertRow> rows;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t seed = base_seed + i;
        auto inst = finite_data_instance(seed, samples, delta);
        inst.penalty.alpha = alpha_factor * alpha_threshold_theorem1(inst.mdp, inst.policy, inst.penalty, inst.data, inst.sem);
        const auto rep = certify_theorem2(inst.mdp, inst.empirical, inst.policy, inst.penalty, inst.data, inst.sem);
        rows.push_back({"theorem2", seed, rep.holds, rep.lhs, rep.rhs, inst.penalty.alpha, rep.alpha_threshold, rep.note});
    }
    return rows;
}

/// Gap expansion at step k+1 with alpha = max(threshold, 0) + margin; the first k steps use alpha 2.
inline std::vector<CertRow> cert_theorem3(std::size_t count, std::uint64_t base_seed, std::size_t k = 5, double margin = 0.1) {
    std::vector<CertRow> rows;
    const double history = 2.0;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t seed = base_seed + i;
        Rng rng = make_rng(seed, 25);
        const std::size_t S = 3 + uniform_index(rng, 10), A = 1 + uniform_index(rng, 4);
        const auto m = random_mdp(S, A, 0.9, rng);
        const auto pi = random_policy(S, A, rng);
        auto pen = random_penalty(S, history, rng);
        const auto probe = certify_theorem3(pi, m, pen, k, history);
        if (!std::isfinite(probe.alpha_threshold)) {
            rows.push_back({"theorem3", seed, false, probe.lhs, probe.rhs, pen.alpha, probe.alpha_threshold, probe.note});
            continue;
        }
        pen.alpha = std::max(probe.alpha_threshold, 0.0) + margin;
        const auto rep = certify_theorem3(pi, m, pen, k, history);
        rows.push_back({"theorem3", seed, rep.holds, rep.lhs, rep.rhs, pen.alpha, rep.alpha_threshold, rep.note});
    }
    return rows;
}

/// v(rho, f) >= -1e-12 for f in {0, 0.25, 0.5, 0.75, 1}.
inline std::vector<CertRow> cert_lemma2(std::size_t count, std::uint64_t base_seed) {
    std::vector<CertRow> rows;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t seed = base_seed + i;
        Rng rng = make_rng(seed, 26);
        const std::size_t S = 2 + uniform_index(rng, 30);
        const auto rho = random_distribution(S, rng);
        const auto d = random_distribution(S, rng);
        for (double f : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            const auto rep = certify_interpolation_lemma(rho, d, f);
            rows.push_back({"lemma2", seed, rep.holds, rep.lhs, rep.rhs, f, std::numeric_limits<double>::quiet_NaN(), rep.note});
        }
    }
    return rows;
}

/// Exhaustive argmax of the penalized objective vs the greedy policy of the fixed point, 4 states.
inline std::vector<CertRow> cert_theorem4(std::size_t count, std::uint64_t base_seed) {
    std::vector<CertRow> rows;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t seed = base_seed + i;
        Rng rng = make_rng(seed, 27);
        const std::size_t A = 2 + uniform_index(rng, 3);
        const auto m = random_mdp(4, A, 0.9, rng);
        const auto pen = random_penalty(4, uniform(rng, 0.0, 10.0), rng);
        const auto rep = certify_theorem4(m, pen);
        rows.push_back({"theorem4", seed, rep.holds, rep.lhs, rep.rhs, pen.alpha, rep.alpha_threshold, rep.note});
    }
    return rows;
}

/// Safe improvement on gridworld datasets. pi* is the conservative greedy policy restricted to
/// logged actions; pi_beta the empirical behavior policy. Emits the exactness of the zeta
/// decomposition (theorem5_identity) and the end-to-end inequality (theorem5).
inline std::vector<CertRow> cert_theorem5(std::size_t count, std::uint64_t base_seed, std::size_t samples = 2000,
                                          double delta = 0.05, double alpha = 1.0) {
    std::vector<CertRow> rows;
    const env::Gridworld grid;
    const auto mdp = grid.tabular_model(env::Gridworld::kDiscount);
    const auto S = mdp.num_states(), A = mdp.num_actions();
    const auto sem = calibrate_sampling_error(S, A, mdp.r_max(), mdp.discount(), delta);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t seed = base_seed + i;
        const auto data = env::tabularize(env::generate_dataset(grid, "medium", samples, seed), grid);
        const auto empirical = empirical_mdp(data, mdp);
        const auto beta = empirical_behavior_policy(data);
        const auto du = dataset_state_marginal(data);
        Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(S));
        for (std::size_t s = 0; s < S; ++s) d[static_cast<Eigen::Index>(s)] = du[s] > 0.0 ? 1.0 : 0.0;
        const CsvePenaltyConfig pen{alpha, normalized_distribution(d / d.sum(), DistributionKind::custom), du};
        Eigen::MatrixXd allowed = (beta.probs().array() > 0.0).cast<double>().matrix();
        const auto star = csve_greedy_policy(empirical, pen, &allowed);
        const auto z = zeta_safe_improvement(mdp, empirical, data, star, beta, sem);
        const double improvement = policy_return(empirical, star) - policy_return(empirical, beta);
        const bool identity = z.zeta == z.sampling_term - z.improvement_term && z.improvement_term == improvement;
        rows.push_back({"theorem5_identity", seed, identity, z.zeta, z.sampling_term - z.improvement_term, alpha,
                        std::numeric_limits<double>::quiet_NaN(), ""});
        rows.push_back({"theorem5", seed, z.inequality_holds, -z.return_star_true, -(z.return_beta_true - z.zeta), alpha,
                        std::numeric_limits<double>::quiet_NaN(), ""});
    }
    return rows;
}

/// Named checks with their default instance counts.
struct CertCheck {
    std::string name;
    std::size_t default_count;
    std::function<std::vector<CertRow>(std::size_t, std::uint64_t)> run;
};

inline const std::vector<CertCheck>& cert_checks() {
    static const std::vector<CertCheck> checks{
        {"contraction", 500, [](std::size_t n, std::uint64_t s) { return cert_contraction(n, s); }},
        {"argmin_equivalence", 100, [](std::size_t n, std::uint64_t s) { return cert_argmin_equivalence(n, s); }},
        {"theorem1_exact", 200, [](std::size_t n, std::uint64_t s) { return cert_theorem1_exact(n, s); }},
        {"theorem1_finite", 200, [](std::size_t n, std::uint64_t s) { return cert_theorem1_finite(n, s); }},
        {"theorem2", 100, [](std::size_t n, std::uint64_t s) { return cert_theorem2(n, s); }},
        {"theorem3", 100, [](std::size_t n, std::uint64_t s) { return cert_theorem3(n, s); }},
        {"lemma2", 1000, [](std::size_t n, std::uint64_t s) { return cert_lemma2(n, s); }},
        {"theorem4", 20, [](std::size_t n, std::uint64_t s) { return cert_theorem4(n, s); }},
        {"theorem5", 50, [](std::size_t n, std::uint64_t s) { return cert_theorem5(n, s); }},
    };
    return checks;
}

}  // namespace csve::harness
