#include "hdsafebo/errors.hpp"
#include "hdsafebo/sampling.hpp"
#include "hdsafebo/trust_region.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <set>

using namespace hdsafebo;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

trust_region::TrustRegionState state_at(const trust_region::TrustRegionConfig& cfg, double length, int cs, int cf) {
    trust_region::TrustRegionState s;
    s.config = cfg;
    s.length = length;
    s.success_count = cs;
    s.failure_count = cf;
    s.incumbent_value = 0.0;
    s.incumbent_point = VectorXd::Zero(1);
    return s;
}

const MatrixXd kPoints = MatrixXd::Constant(1, 1, 0.25);
const trust_region::BatchOutcome kSuccess{{1.0}, {0.5}};
const trust_region::BatchOutcome kFailure{{-1.0}, {0.5}};

}  // namespace

TEST_CASE("transition table for small tolerances") {
    // Every tolerance pair up to 4 and every reachable state.
    for (int ts = 1; ts <= 4; ++ts) {
        for (int tf = 1; tf <= 4; ++tf) {
            trust_region::TrustRegionConfig cfg;
            cfg.success_tolerance = ts;
            cfg.failure_tolerance = tf;
            const oracle::TrConfig oc{ts, tf, cfg.initial_length, cfg.min_length, cfg.max_length};
            std::vector<oracle::TrState> todo{{cfg.initial_length, 0, 0}}, seen = todo;
            while (!todo.empty()) {
                const auto s = todo.back();
                todo.pop_back();
                for (bool success : {true, false}) {
                    const auto got = trust_region::safe_update(state_at(cfg, s.length, s.cs, s.cf),
                                                               success ? kSuccess : kFailure, kPoints);
                    const auto want = oracle::tr_step(s, success, oc);
                    CHECK(got.length == want.length);
                    CHECK(got.success_count == want.cs);
                    CHECK(got.failure_count == want.cf);
                    CHECK(got.success_count < ts);
                    CHECK(got.failure_count < tf);
                    const bool in_range = got.length >= cfg.min_length && got.length <= cfg.max_length;
                    CHECK((in_range || got.length == cfg.initial_length));
                    if (std::find(seen.begin(), seen.end(), want) == seen.end()) {
                        seen.push_back(want);
                        todo.push_back(want);
                    }
                }
            }
        }
    }
}

TEST_CASE("worked examples") {
    trust_region::TrustRegionConfig cfg;
    cfg.min_length = 0.5;
    SUBCASE("floored halving resets to the initial length") {
        const auto next = trust_region::safe_update(state_at(cfg, 0.8, 0, 2), kFailure, kPoints);
        CHECK(next.length == cfg.initial_length);
        CHECK(next.failure_count == 0);
    }
    SUBCASE("doubling is capped") {
        const auto next = trust_region::safe_update(state_at(cfg, 1.2, 2, 0), kSuccess, kPoints);
        CHECK(next.length == cfg.max_length);
    }
    SUBCASE("the best safe improver becomes the incumbent") {
        trust_region::BatchOutcome b{{2.0, 5.0, 3.0}, {0.1, -0.1, 0.2}};
        MatrixXd pts(3, 1);
        pts << 0.1, 0.2, 0.3;
        const auto next = trust_region::safe_update(state_at(cfg, 0.8, 0, 0), b, pts);
        CHECK(next.incumbent_value == 3.0);
        CHECK(next.incumbent_point(0) == 0.3);
        CHECK(next.success_count == 1);
    }
    SUBCASE("safety at exactly the threshold is not a success") {
        const auto next = trust_region::safe_update(state_at(cfg, 0.8, 0, 0), {{1.0}, {0.0}}, kPoints);
        CHECK(next.failure_count == 1);
        CHECK(next.incumbent_value == 0.0);
    }
}

TEST_CASE("initial incumbent") {
    MatrixXd pts(3, 2);
    pts << 0, 0, 1, 1, 2, 2;
    const std::vector<double> f{1.0, 5.0, 3.0}, g{0.2, -0.1, 0.3};
    const auto inc = trust_region::initial_incumbent(pts, f, g);
    CHECK(inc.index == 2);
    CHECK(inc.value == 3.0);
    const std::vector<double> unsafe{-1.0, 0.0, -0.2};
    CHECK_THROWS_AS(trust_region::initial_incumbent(pts, f, unsafe), SeedUnsafe);
}

TEST_CASE("local region clipping") {
    trust_region::Box domain{VectorXd::Zero(2), VectorXd::Ones(2)};
    VectorXd c(2);
    c << 0.1, 0.5;
    const auto box = trust_region::make_local_region(c, 0.2, domain);
    CHECK(box.lower(0) == 0.0);
    CHECK(box.upper(0) == doctest::Approx(0.3));
    CHECK(box.lower(1) == doctest::Approx(0.3));
    CHECK_THROWS_AS(trust_region::make_local_region(c, 0.0, domain), InvalidInput);
    c(0) = 2.0;
    CHECK_THROWS_AS(trust_region::make_local_region(c, 0.2, domain), InvalidInput);
}

TEST_CASE("config validation") {
    trust_region::TrustRegionConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.min_length = 1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidInput);
    cfg = {};
    cfg.success_tolerance = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidInput);
}

TEST_CASE("seed derivation and candidate sampling") {
    CHECK(sampling::derive_seed(1, {2, 3}) == sampling::derive_seed(1, {2, 3}));
    CHECK(sampling::derive_seed(1, {2, 3}) != sampling::derive_seed(1, {3, 2}));
    CHECK(sampling::derive_seed(1, {2}) != sampling::derive_seed(2, {2}));
    trust_region::Box box{VectorXd::Constant(3, -1.0), VectorXd::Constant(3, 2.0)};
    const MatrixXd a = sampling::sobol_points(box, 256, 42);
    const MatrixXd b = sampling::sobol_points(box, 256, 42);
    CHECK(a == b);
    CHECK(a != sampling::sobol_points(box, 256, 43));
    for (Eigen::Index i = 0; i < a.rows(); ++i) CHECK(box.contains(a.row(i).transpose()));
    // Low discrepancy: each coordinate's mean sits near the box centre.
    const VectorXd mean = a.colwise().mean();
    CHECK((mean.array() - 0.5).abs().maxCoeff() < 0.05);
    std::set<double> distinct(a.col(0).data(), a.col(0).data() + a.rows());
    CHECK(distinct.size() == 256);
}
