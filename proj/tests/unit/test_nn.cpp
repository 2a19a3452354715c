#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "csve/nn/adam.hpp"
#include "csve/nn/checkpoint.hpp"
#include "csve/nn/gaussian.hpp"
#include "csve/nn/gradcheck.hpp"
#include "csve/nn/mlp.hpp"

using namespace csve;
using namespace csve::nn;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j) m.col(j) = standard_normal_vector(rng, r);
    return m;
}

// <forward(X), C> as a function of the flat parameters.
double contracted_output(Mlp net, const Eigen::VectorXd& params, const Eigen::MatrixXd& X, const Eigen::MatrixXd& C) {
    net.params() = params;
    return (net.forward(X).array() * C.array()).sum();
}

}  // namespace

TEST(Mlp, ZeroNetworkOutputsLastBias) {
    Mlp net({3, 5, 2}, Activation::relu);
    net.bias(1) << 0.5, -1.5;
    const auto y = net.forward(Eigen::VectorXd(Eigen::VectorXd::Constant(3, 7.0)));
    EXPECT_EQ(y[0], 0.5);
    EXPECT_EQ(y[1], -1.5);
}

TEST(Mlp, IdentityLinearLayer) {
    Mlp net({3, 3}, Activation::relu);
    net.weight(0).setIdentity();
    Eigen::VectorXd x(3);
    x << -1.0, 2.0, 0.25;
    EXPECT_EQ(net.forward(x), x);
}

TEST(Mlp, MatchesNaiveRecomputeSeed1) {
    Rng rng = make_rng(1);
    const Mlp net({4, 8, 2}, Activation::relu, rng);
    Eigen::VectorXd x(4);
    x << 0.3, -1.2, 0.7, 2.0;
    std::vector<double> hidden(8);
    for (int i = 0; i < 8; ++i) {
        double z = net.bias(0)[i];
        for (int j = 0; j < 4; ++j) z += net.weight(0)(i, j) * x[j];
        hidden[i] = z > 0.0 ? z : 0.0;
    }
    const auto y = net.forward(x);
    for (int o = 0; o < 2; ++o) {
        double z = net.bias(1)[o];
        for (int i = 0; i < 8; ++i) z += net.weight(1)(o, i) * hidden[i];
        EXPECT_NEAR(y[o], z, 1e-12);
    }
}

TEST(Mlp, ShapeMismatchRejected) {
    Rng rng = make_rng(2);
    const Mlp net({4, 3}, Activation::tanh, rng);
    EXPECT_THROW(net.forward(Eigen::VectorXd(Eigen::VectorXd::Zero(3))), InputError);
    Mlp::Tape tape;
    net.forward(Eigen::MatrixXd::Zero(4, 2), tape);
    Eigen::VectorXd g = net.zero_grad();
    EXPECT_THROW(net.backward(tape, Eigen::MatrixXd::Zero(2, 2), g), InputError);
}

TEST(Mlp, LinearLayerWeightGradientRowIsInput) {
    Rng rng = make_rng(3);
    const Mlp net({3, 2}, Activation::relu, rng);
    Eigen::MatrixXd x(3, 1);
    x << 1.5, -0.5, 2.0;
    Mlp::Tape tape;
    net.forward(x, tape);
    Eigen::VectorXd grad = net.zero_grad();
    Eigen::MatrixXd e1 = Eigen::MatrixXd::Zero(2, 1);
    e1(1, 0) = 1.0;
    net.backward(tape, e1, grad);
    const Eigen::Map<const Eigen::MatrixXd> gw(grad.data(), 2, 3);
    EXPECT_EQ(gw.row(1).transpose(), x.col(0));
    EXPECT_EQ(gw.row(0).norm(), 0.0);
}

TEST(Mlp, DeadReluUnitsHaveZeroGradient) {
    Mlp net({2, 4, 1}, Activation::relu);
    net.weight(0).setConstant(1.0);
    net.bias(0).setConstant(-100.0);
    net.weight(1).setConstant(1.0);
    Mlp::Tape tape;
    net.forward(Eigen::MatrixXd::Ones(2, 3), tape);
    Eigen::VectorXd grad = net.zero_grad();
    const auto gin = net.backward(tape, Eigen::MatrixXd::Ones(1, 3), grad);
    EXPECT_EQ(grad.head(8 + 4).norm(), 0.0);
    EXPECT_EQ(gin.norm(), 0.0);
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
    for (auto act : {Activation::relu, Activation::tanh}) {
        Rng rng = make_rng(4);
        const Mlp net({5, 7, 6, 3}, act, rng);
        const Eigen::MatrixXd X = random_matrix(rng, 5, 4);
        const Eigen::MatrixXd C = random_matrix(rng, 3, 4);
        Mlp::Tape tape;
        net.forward(X, tape);
        Eigen::VectorXd grad = net.zero_grad();
        const Eigen::MatrixXd gin = net.backward(tape, C, grad);
        const double perr = max_gradient_error(
            [&](const Eigen::VectorXd& p) { return contracted_output(net, p, X, C); }, net.params(), grad);
        EXPECT_LE(perr, 1e-4) << to_string(act);
        const Eigen::VectorXd flat_in = Eigen::Map<const Eigen::VectorXd>(X.data(), X.size());
        const Eigen::VectorXd flat_gin = Eigen::Map<const Eigen::VectorXd>(gin.data(), gin.size());
        const double ierr = max_gradient_error(
            [&](const Eigen::VectorXd& xin) {
                return (net.forward(Eigen::MatrixXd(Eigen::Map<const Eigen::MatrixXd>(xin.data(), 5, 4))).array() *
                        C.array())
                    .sum();
            },
            flat_in, flat_gin);
        EXPECT_LE(ierr, 1e-4) << to_string(act);
    }
}

TEST(Mlp, BatchedForwardMatchesPerSample) {
    Rng rng = make_rng(5);
    const Mlp net({3, 6, 2}, Activation::tanh, rng);
    const Eigen::MatrixXd X = random_matrix(rng, 3, 5);
    const Eigen::MatrixXd Y = net.forward(X);
    for (Eigen::Index j = 0; j < 5; ++j) EXPECT_LE((Y.col(j) - net.forward(Eigen::VectorXd(X.col(j)))).norm(), 1e-14);
}

TEST(Mlp, SameSeedSameTrainingIsBitIdentical) {
    auto run = [] {
        Rng rng = make_rng(6);
        Mlp net({2, 8, 1}, Activation::relu, rng);
        AdamState adam(static_cast<Eigen::Index>(net.num_params()), 1e-2);
        for (int step = 0; step < 50; ++step) {
            const Eigen::MatrixXd X = random_matrix(rng, 2, 8);
            Mlp::Tape tape;
            const Eigen::MatrixXd y = net.forward(X, tape);
            Eigen::VectorXd grad = net.zero_grad();
            net.backward(tape, y - X.row(0), grad);
            adam.apply(net.params(), grad);
        }
        return net.params();
    };
    const auto a = run();
    const auto b = run();
    EXPECT_EQ(0, std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())));
}

TEST(SoftUpdate, EndpointsAndGeometricBlend) {
    Rng rng = make_rng(7);
    const Mlp q({3, 4, 1}, Activation::relu, rng);
    const Mlp q0({3, 4, 1}, Activation::relu, rng);
    Mlp t = q0;
    soft_update(t, q, 0.0);
    EXPECT_EQ(t.params(), q0.params());
    soft_update(t, q, 1.0);
    EXPECT_EQ(t.params(), q.params());
    t = q0;
    for (int i = 0; i < 100; ++i) soft_update(t, q, 0.005);
    const double keep = std::pow(0.995, 100);
    EXPECT_LE((t.params() - (keep * q0.params() + (1.0 - keep) * q.params())).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Adam, ZeroGradientLeavesParameters) {
    AdamState adam(2, 0.1);
    adam.m << 1.0, -1.0;
    adam.v << 1.0, 1.0;
    Eigen::VectorXd p(2);
    p << 3.0, 4.0;
    const Eigen::VectorXd before = p;
    adam.apply(p, Eigen::VectorXd::Zero(2));
    EXPECT_EQ(adam.m[0], 0.9);
    EXPECT_EQ(adam.v[0], 0.999);
    // Moments still move the parameters when nonzero; with fresh zero moments they do not.
    AdamState fresh(2, 0.1);
    p = before;
    fresh.apply(p, Eigen::VectorXd::Zero(2));
    EXPECT_EQ(p, before);
    EXPECT_EQ(fresh.step, 1);
}

TEST(Adam, ConstantGradientStepsApproachSignTimesLr) {
    AdamState adam(1, 0.01);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
    Eigen::VectorXd g = Eigen::VectorXd::Constant(1, -3.0);
    double last = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double before = p[0];
        adam.apply(p, g);
        last = p[0] - before;
    }
    EXPECT_NEAR(last, 0.01, 1e-9);
}

TEST(Adam, ThreeStepTrace) {
    AdamState adam(2, 0.1);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd g(2);
    g << 1.0, -2.0;
    // Bias-corrected moments equal g and g^2 for a constant gradient, so each step moves by
    // lr g / (|g| + eps).
    const double step0 = -0.1 * 1.0 / (1.0 + 1e-8);
    const double step1 = 0.1 * 2.0 / (2.0 + 1e-8);
    for (int k = 1; k <= 3; ++k) {
        adam.apply(p, g);
        EXPECT_NEAR(p[0], k * step0, 1e-12);
        EXPECT_NEAR(p[1], k * step1, 1e-12);
    }
}

TEST(Gaussian, StandardNormalAtOrigin) {
    const DiagGaussianHead head(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2));
    EXPECT_NEAR(gaussian_log_prob(head, Eigen::VectorXd::Zero(2)), -std::log(2.0 * std::numbers::pi), 1e-15);
}

TEST(Gaussian, ZeroNoiseSampleIsMean) {
    Eigen::VectorXd mu(3);
    mu << 1.0, -2.0, 0.5;
    const DiagGaussianHead head(mu, Eigen::VectorXd::Constant(3, 0.3));
    EXPECT_EQ(gaussian_sample(head, Eigen::VectorXd::Zero(3)), mu);
}

TEST(Gaussian, LogProbGradientMatchesFiniteDifferences) {
    Rng rng = make_rng(8);
    const Eigen::VectorXd mu = standard_normal_vector(rng, 3);
    const Eigen::VectorXd ls = 0.3 * standard_normal_vector(rng, 3);
    const Eigen::VectorXd x = standard_normal_vector(rng, 3);
    const auto grad = gaussian_log_prob_grad(DiagGaussianHead(mu, ls), x);
    const double em = max_gradient_error(
        [&](const Eigen::VectorXd& m) { return gaussian_log_prob(DiagGaussianHead(m, ls), x); }, mu,
        Eigen::VectorXd(grad.mean.col(0)));
    const double es = max_gradient_error(
        [&](const Eigen::VectorXd& s) { return gaussian_log_prob(DiagGaussianHead(mu, s), x); }, ls,
        Eigen::VectorXd(grad.log_std.col(0)));
    EXPECT_LE(em, 1e-5);
    EXPECT_LE(es, 1e-5);
}

TEST(Gaussian, LogStdIsClamped) {
    const DiagGaussianHead head(Eigen::VectorXd::Zero(2), Eigen::Vector2d(-50.0, 50.0));
    EXPECT_EQ(head.log_std[0], kLogStdMin);
    EXPECT_EQ(head.log_std[1], kLogStdMax);
    EXPECT_TRUE(std::isfinite(gaussian_log_prob(head, Eigen::Vector2d(1e3, -1e3))));
}

TEST(Gaussian, SquashedLogProbMatchesChangeOfVariables) {
    // Density of a = tanh(u) in one dimension: N(u) / (1 - a^2).
    const Eigen::MatrixXd mean = Eigen::MatrixXd::Constant(1, 1, 0.2);
    const Eigen::MatrixXd ls = Eigen::MatrixXd::Constant(1, 1, -0.5);
    const double a = 0.6;
    const double u = std::atanh(a);
    const double sigma = std::exp(-0.5);
    const double expected =
        -0.5 * std::pow((u - 0.2) / sigma, 2) - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi) -
        std::log(1.0 - a * a + kSquashEps);
    EXPECT_NEAR(squashed_log_prob(mean, ls, Eigen::MatrixXd::Constant(1, 1, a))[0], expected, 1e-12);
    EXPECT_TRUE(std::isfinite(squashed_log_prob(mean, ls, Eigen::MatrixXd::Constant(1, 1, 1.0))[0]));
}

TEST(Checkpoint, RoundTripIsBitExact) {
    Rng rng = make_rng(9);
    const Mlp net({4, 16, 16, 2}, Activation::tanh, rng);
    std::stringstream buf;
    write_mlp(buf, net);
    const Mlp back = read_mlp(buf);
    EXPECT_EQ(back.layer_sizes(), net.layer_sizes());
    EXPECT_EQ(back.activation(), net.activation());
    EXPECT_EQ(0, std::memcmp(back.params().data(), net.params().data(), sizeof(double) * net.num_params()));
}

TEST(Checkpoint, CorruptBlobRejected) {
    std::stringstream bad("not a checkpoint");
    EXPECT_THROW(read_mlp(bad), IoError);
    Rng rng = make_rng(10);
    std::stringstream buf;
    write_mlp(buf, Mlp({2, 2}, Activation::relu, rng));
    std::string s = buf.str();
    s.resize(s.size() - 4);
    std::stringstream truncated(s);
    EXPECT_THROW(read_mlp(truncated), IoError);
}
