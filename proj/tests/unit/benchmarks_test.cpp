#include "hdsafebo/benchmarks.hpp"
#include "hdsafebo/errors.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

using namespace hdsafebo;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("lazy sample is consistent and cached") {
    benchmarks::LazyGpSample g({gp::KernelFamily::Matern52, 0.3, 1.0}, 2, 7);
    VectorXd a(2), b(2);
    a << 0.1, 0.2;
    b << 0.7, 0.4;
    const double va = g(a), vb = g(b);
    CHECK(g(a) == va);
    CHECK(g(b) == vb);
    CHECK(g.size() == 2);
    benchmarks::LazyGpSample h({gp::KernelFamily::Matern52, 0.3, 1.0}, 2, 7);
    CHECK(h(a) == va);
}

TEST_CASE("lazy sample marginals follow the prior") {
    // One value per independent path at a fixed point.
    const int reps = 2000;
    VectorXd p(3);
    p << 0.2, 0.5, 0.9;
    std::vector<double> v;
    for (int r = 0; r < reps; ++r) {
        benchmarks::LazyGpSample g({gp::KernelFamily::Matern52, 0.2, 2.0}, 3, 1000 + r);
        v.push_back(g(p));
    }
    double mean = 0.0, sq = 0.0;
    for (double x : v) mean += x / reps;
    for (double x : v) sq += (x - mean) * (x - mean) / (reps - 1);
    CHECK(std::abs(mean) < 3.0 * std::sqrt(2.0 / reps));
    // Standard error of the sample variance is about var * sqrt(2 / n).
    CHECK(std::abs(sq - 2.0) < 3.0 * 2.0 * std::sqrt(2.0 / reps));
}

TEST_CASE("lazy paths have the prior covariance on a point set") {
    const int reps = 2000, k = 4;
    MatrixXd pts(k, 1);
    pts << 0.0, 0.1, 0.3, 0.8;
    MatrixXd draws(reps, k);
    for (int r = 0; r < reps; ++r) {
        benchmarks::LazyGpSample g({gp::KernelFamily::Matern52, 0.3, 1.0}, 1, 5000 + r);
        for (int j = 0; j < k; ++j) draws(r, j) = g(pts.row(j).transpose());
    }
    const MatrixXd centred = draws.rowwise() - draws.colwise().mean();
    const MatrixXd emp = centred.transpose() * centred / (reps - 1.0);
    const MatrixXd prior = oracle::gram(pts, pts, true, 0.3, 1.0);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) CHECK(std::abs(emp(i, j) - prior(i, j)) < 0.1);
    }
}

TEST_CASE("synthetic task structure") {
    benchmarks::TaskSpec spec;
    spec.ambient_dim = 20;
    spec.effective_dim = 4;
    spec.projection_scale = 0.5;
    auto task = benchmarks::make_task(spec, 3);
    const MatrixXd gram = task.projection() * task.projection().transpose();
    CHECK((gram - 0.25 * MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);
    // Moving orthogonally to the effective subspace leaves both functions unchanged.
    VectorXd x = VectorXd::Constant(20, 0.5);
    x(0) = 0.3;
    const auto e1 = task.evaluate(x);
    const auto map = task.effective_subspace_map();
    VectorXd along = VectorXd::Zero(20);
    along(5) = 0.05;
    const VectorXd orth = along - map.projection().transpose() * (map.projection() * along);
    const auto e2 = task.evaluate(x + orth);
    // The new point is a fresh draw conditioned on the old one at distance
    // zero, so it differs only by jitter-level noise.
    CHECK(std::abs(e2.y_f - e1.y_f) < 1e-4);
    CHECK(std::abs(e2.y_g - e1.y_g) < 1e-4);
    // Same seed, same task.
    auto twin = benchmarks::make_task(spec, 3);
    CHECK(twin.evaluate(x).y_f == e1.y_f);
}

TEST_CASE("safety function is shifted by the threshold") {
    benchmarks::TaskSpec spec;
    spec.ambient_dim = 3;
    spec.effective_dim = 3;
    spec.kernel.lengthscale = 0.3;
    const int reps = 1000;
    double mean = 0.0;
    for (int r = 0; r < reps; ++r) {
        auto task = benchmarks::make_task(spec, 100 + r);
        mean += task.evaluate(VectorXd::Constant(3, 0.5)).y_g / reps;
    }
    // raw g ~ N(0, 1), g = raw - shift.
    CHECK(std::abs(mean - 0.75) < 3.0 / std::sqrt(reps));
}

TEST_CASE("task settings validation") {
    benchmarks::TaskSpec spec;
    spec.effective_dim = 100;
    CHECK_THROWS_AS(spec.validate(), InvalidInput);
    CHECK(benchmarks::parse_task_structure("coordinate_subset") == benchmarks::TaskStructure::CoordinateSubset);
}

TEST_CASE("sign test matches direct binomial sums") {
    for (int w = 0; w <= 20; ++w) {
        for (int l = 0; l + w <= 20; ++l) {
            CHECK(benchmarks::sign_test_p_value(w, l) == doctest::Approx(w == 0 ? 1.0 : oracle::sign_test(w, l)).epsilon(1e-12));
        }
    }
    CHECK(benchmarks::sign_test_p_value(15, 5) < 0.05);
    CHECK(benchmarks::sign_test_p_value(14, 6) > 0.05);
}

TEST_CASE("aggregate") {
    const auto a = benchmarks::aggregate({1.0, 2.0, 3.0, 4.0});
    CHECK(a.mean == 2.5);
    CHECK(a.standard_error == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
    CHECK(a.count == 4);
}

TEST_CASE("benchmark is deterministic and independent of thread count") {
    benchmarks::TaskSpec task;
    task.ambient_dim = 8;
    task.effective_dim = 2;
    task.kernel.lengthscale = 0.4;
    optimizer::OptimizerConfig cfg;
    cfg.batch_size = 4;
    cfg.candidate_count = 128;
    cfg.surrogate.restarts = 1;
    cfg.surrogate.iterations = 8;
    std::vector<benchmarks::MethodSpec> methods{{"a", cfg, {}}, {"b", cfg, {benchmarks::EmbeddingChoice::Kind::Pca, 2, ""}}};
    methods[1].config.safety.mode = safety::SafetyMode::ConservativeLcb;
    benchmarks::BenchmarkOptions opt;
    opt.budget = 24;
    opt.init_count = 12;
    opt.seeds = {1, 2, 3};
    const auto r1 = benchmarks::run_benchmark(methods, task, opt);
    opt.threads = 3;
    const auto r2 = benchmarks::run_benchmark(methods, task, opt);
    for (std::size_t m = 0; m < 2; ++m) {
        for (std::size_t s = 0; s < 3; ++s) {
            const auto& a = r1.methods[m].seeds[s];
            const auto& b = r2.methods[m].seeds[s];
            REQUIRE(a.record);
            REQUIRE(b.record);
            CHECK(a.record->final_metrics == b.record->final_metrics);
            CHECK(a.record->iterations == b.record->iterations);
            CHECK(a.record->final_metrics.evaluations == 24);
        }
    }
    // Both methods see identical initial data for a seed.
    CHECK(r1.methods[0].seeds[0].record->initial_metrics == r1.methods[1].seeds[0].record->initial_metrics);
    CHECK(&r1.method("b") == &r1.methods[1]);
}
