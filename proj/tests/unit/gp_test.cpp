#include "hdsafebo/errors.hpp"
#include "hdsafebo/gp.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

using namespace hdsafebo;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

gp::GpDataset toy(int n, int d, std::uint64_t seed, double noise) {
    std::mt19937_64 rng(seed);
    gp::GpDataset data;
    data.inputs = oracle::random_matrix(n, d, rng);
    data.targets = (3.0 * data.inputs.rowwise().sum()).array().sin();
    data.noise_variance = noise;
    return data;
}

}  // namespace

TEST_CASE("kernel profiles match closed forms") {
    const gp::KernelSpec m{gp::KernelFamily::Matern52, 0.7, 2.0};
    const gp::KernelSpec s{gp::KernelFamily::SquaredExponential, 0.7, 2.0};
    VectorXd a(3), b(3);
    a << 0.1, 0.2, 0.3;
    b << 0.5, -0.1, 0.9;
    const double r = (a - b).norm() / 0.7;
    CHECK(gp::kernel_eval(m, a, b) == doctest::Approx(2.0 * oracle::matern52(r)).epsilon(1e-14));
    CHECK(gp::kernel_eval(s, a, b) == doctest::Approx(2.0 * oracle::squared_exponential(r)).epsilon(1e-14));
    CHECK(gp::kernel_eval(m, a, a) == 2.0);
    CHECK(gp::kernel_family_name(gp::parse_kernel_family("squared_exponential")) == "squared_exponential");
    CHECK_THROWS_AS(gp::parse_kernel_family("rbf2"), InvalidInput);
}

TEST_CASE("posterior matches the dense-inverse oracle") {
    for (bool matern : {true, false}) {
        const auto data = toy(40, 4, matern ? 1 : 2, 1e-3);
        const gp::KernelSpec spec{matern ? gp::KernelFamily::Matern52 : gp::KernelFamily::SquaredExponential, 0.6, 1.5};
        std::mt19937_64 rng(3);
        const MatrixXd q = oracle::random_matrix(12, 4, rng);
        const auto post = gp::fit_posterior(data, spec);
        const auto m = post.query(q);
        const MatrixXd cov = post.covariance(q);
        const auto ref = oracle::dense_posterior(data.inputs, data.targets, q, matern, 0.6, 1.5,
                                                 data.noise_variance + post.jitter());
        CHECK((m.means - ref.mean).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((m.variances - ref.var).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((cov - ref.cov).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("noiseless posterior interpolates and has zero variance at the data") {
    const auto data = toy(15, 2, 4, 0.0);
    const auto post = gp::fit_posterior(data, {gp::KernelFamily::Matern52, 0.3, 1.0});
    const auto m = post.query(data.inputs);
    CHECK((m.means - data.targets).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(m.variances.maxCoeff() < 1e-6);
    CHECK(m.variances.minCoeff() >= 0.0);
}

TEST_CASE("duplicate noiseless inputs are handled by jitter") {
    auto data = toy(6, 2, 5, 0.0);
    data.inputs.row(5) = data.inputs.row(0);
    data.targets(5) = data.targets(0);
    const auto post = gp::fit_posterior(data, {gp::KernelFamily::SquaredExponential, 0.5, 1.0});
    CHECK(post.jitter() > 0.0);
    CHECK(post.query(data.inputs).means.allFinite());
}

TEST_CASE("empty dataset gives the prior") {
    gp::GpDataset data;
    data.inputs = MatrixXd(0, 3);
    data.targets = VectorXd(0);
    const auto post = gp::fit_posterior(data, {gp::KernelFamily::Matern52, 1.0, 2.5});
    const auto m = post.query(MatrixXd::Constant(2, 3, 0.4));
    CHECK(m.means.cwiseAbs().maxCoeff() == 0.0);
    CHECK(m.variances(0) == doctest::Approx(2.5));
}

TEST_CASE("invalid inputs are rejected") {
    auto data = toy(5, 2, 6, 1e-3);
    CHECK_THROWS_AS(gp::fit_posterior(data, {gp::KernelFamily::Matern52, -1.0, 1.0}), InvalidInput);
    const auto post = gp::fit_posterior(data, {gp::KernelFamily::Matern52, 1.0, 1.0});
    CHECK_THROWS_AS(post.query(MatrixXd::Zero(2, 3)), InvalidInput);
    data.targets(1) = std::nan("");
    CHECK_THROWS_AS(gp::fit_posterior(data, {gp::KernelFamily::Matern52, 1.0, 1.0}), InvalidInput);
}

TEST_CASE("log marginal likelihood matches the closed form") {
    const auto data = toy(20, 3, 7, 1e-2);
    const gp::KernelSpec spec{gp::KernelFamily::Matern52, 0.8, 1.2};
    MatrixXd a = oracle::gram(data.inputs, data.inputs, true, 0.8, 1.2);
    a.diagonal().array() += data.noise_variance;
    const double want = -0.5 * data.targets.dot(a.inverse() * data.targets) - 0.5 * std::log(a.determinant()) -
                        0.5 * 20.0 * std::log(2.0 * M_PI);
    CHECK(gp::log_marginal_likelihood(data, spec) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("hyperparameter fit stays in bounds and improves the evidence") {
    const auto data = toy(30, 2, 8, 0.0);
    gp::HyperparameterBounds bounds;
    gp::FitOptions opt;
    opt.restarts = 3;
    opt.iterations = 20;
    const auto fit = gp::fit_hyperparameters(data, bounds, opt);
    CHECK(fit.kernel.lengthscale >= bounds.lengthscale.lo);
    CHECK(fit.kernel.lengthscale <= bounds.lengthscale.hi);
    CHECK(fit.noise_variance >= bounds.noise_variance.lo);
    CHECK(fit.noise_variance <= bounds.noise_variance.hi);
    gp::GpDataset start = data;
    start.noise_variance = 1e-3;
    CHECK(fit.log_likelihood >= gp::log_marginal_likelihood(start, {gp::KernelFamily::Matern52, 1.0, 1.0}));
    // Same seed, same answer.
    const auto again = gp::fit_hyperparameters(data, bounds, opt);
    CHECK(again.kernel == fit.kernel);
    CHECK(again.noise_variance == fit.noise_variance);
}

TEST_CASE("joint samples reproduce posterior moments") {
    const auto data = toy(8, 1, 9, 1e-3);
    const auto post = gp::fit_posterior(data, {gp::KernelFamily::Matern52, 0.4, 1.0});
    MatrixXd q(3, 1);
    q << 0.15, 0.5, 0.52;
    std::mt19937_64 rng(10);
    const int draws = 10000;
    const MatrixXd s = gp::joint_sample(post, q, draws, rng);
    REQUIRE(s.rows() == draws);
    const auto m = post.query(q);
    const MatrixXd cov = post.covariance(q);
    const VectorXd mean = s.colwise().mean();
    for (int j = 0; j < 3; ++j) CHECK(std::abs(mean(j) - m.means(j)) < 3.0 * std::sqrt(m.variances(j) / draws));
    const MatrixXd centred = s.rowwise() - mean.transpose();
    const MatrixXd emp = centred.transpose() * centred / (draws - 1.0);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            CHECK(std::abs(emp(i, j) - cov(i, j)) <= 0.05 * std::sqrt(cov(i, i) * cov(j, j)));
        }
    }
}
