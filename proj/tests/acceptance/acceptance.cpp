// Acceptance suite: one PASS/FAIL line per criterion. Arguments select a
// subset by name (gp, frequency, safe_update, subspace, desk, replay,
// isometry); no arguments runs everything.

#include "hdsafebo/benchmarks.hpp"
#include "hdsafebo/config.hpp"
#include "hdsafebo/embedding.hpp"
#include "hdsafebo/gp.hpp"
#include "hdsafebo/safety.hpp"
#include "hdsafebo/serialization.hpp"
#include "hdsafebo/session.hpp"
#include "hdsafebo/trust_region.hpp"

#include "../support/oracles.hpp"
#include "../support/session_driver.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <limits>
#include <numeric>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

using namespace hdsafebo;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
    std::printf("%s  %-28s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

// ---------------------------------------------------------------------------

void gp_correctness() {
    Timer timer;
    std::mt19937_64 rng(20240611);
    std::uniform_int_distribution<int> n_dist(2, 100), d_dist(1, 20);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double worst_mean = 0.0, worst_var = 0.0, worst_cov = 0.0;
    for (int k = 0; k < 50; ++k) {
        const bool matern = k % 2 == 0;
        const int n = n_dist(rng), d = d_dist(rng);
        // Every fifth dataset is noiseless; those use short lengthscales so
        // the gram matrix stays well conditioned.
        const bool noiseless = k % 5 == 4;
        gp::GpDataset data;
        data.inputs = oracle::random_matrix(n, d, rng);
        data.targets = VectorXd(n);
        for (int i = 0; i < n; ++i) data.targets(i) = std::sin(3.0 * data.inputs.row(i).sum()) + 0.3 * (u01(rng) - 0.5);
        data.noise_variance = noiseless ? 0.0 : std::pow(10.0, -4.0 + 3.0 * u01(rng));
        const double base = std::sqrt(static_cast<double>(d)) * (noiseless ? 0.05 : 0.15 + 0.35 * u01(rng));
        const gp::KernelSpec spec{matern ? gp::KernelFamily::Matern52 : gp::KernelFamily::SquaredExponential, base,
                                  0.5 + 2.5 * u01(rng)};
        const MatrixXd q = oracle::random_matrix(30, d, rng);
        const gp::GpPosterior post = gp::fit_posterior(data, spec);
        const gp::PosteriorMoments m = gp::posterior_query(post, q);
        const MatrixXd cov = gp::posterior_cov(post, q);
        const auto ref = oracle::dense_posterior(data.inputs, data.targets, q, matern, spec.lengthscale,
                                                 spec.output_scale, data.noise_variance + post.jitter());
        VectorXd ref_var = ref.var;
        if (noiseless) ref_var = (ref_var.array() <= post.jitter()).select(0.0, ref_var);
        else ref_var = ref_var.cwiseMax(0.0);
        worst_mean = std::max(worst_mean, (m.means - ref.mean).cwiseAbs().maxCoeff());
        worst_var = std::max(worst_var, (m.variances - ref_var).cwiseAbs().maxCoeff());
        MatrixXd cov_off = cov - ref.cov;
        cov_off.diagonal().setZero();
        worst_cov = std::max(worst_cov, cov_off.cwiseAbs().maxCoeff());
    }
    const double secs = timer.seconds();
    const double worst = std::max({worst_mean, worst_var, worst_cov});
    report(worst <= 1e-8 && secs < 60.0, "gp_dense_oracle",
           fmt("50 datasets, max |mean| %.2e |var| %.2e |cov| %.2e (tol 1e-8), %.1fs (limit 60s)", worst_mean,
               worst_var, worst_cov, secs));
}

// ---------------------------------------------------------------------------

void confidence_frequency() {
    Timer timer;
    // 20 x 20 grid on [0, 1]^2.
    const int side = 20, n = side * side;
    MatrixXd grid(n, 2);
    for (int i = 0; i < n; ++i) grid.row(i) << (i % side + 0.5) / side, (i / side + 0.5) / side;
    const gp::KernelSpec spec{gp::KernelFamily::Matern52, 0.25, 1.0};
    MatrixXd k = oracle::gram(grid, grid, true, spec.lengthscale, spec.output_scale);
    k.diagonal().array() += 1e-9;
    const MatrixXd chol = k.llt().matrixL();
    std::mt19937_64 rng(77);
    std::normal_distribution<double> n01;
    // Observation sites are fixed so the remaining 390 points are the same set in every replicate.
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::vector<int> observed(idx.begin(), idx.begin() + 10);
    const std::vector<int> rest(idx.begin() + 10, idx.end());
    const int replicates = 200;
    bool all_ok = true;
    std::string detail;
    for (double alpha : {0.1, 0.3, 0.5}) {
        safety::SafetyConfig cfg;
        cfg.alpha = alpha;
        cfg.beta_override.reset();
        cfg.mode = safety::SafetyMode::OptimisticUcb;
        std::vector<double> per_rep;
        std::mt19937_64 draw_rng(static_cast<std::uint64_t>(alpha * 1000));
        for (int r = 0; r < replicates; ++r) {
            VectorXd z(n);
            for (int i = 0; i < n; ++i) z(i) = n01(draw_rng);
            const VectorXd g = chol * z;
            gp::GpDataset data;
            data.inputs = MatrixXd(10, 2);
            data.targets = VectorXd(10);
            for (int j = 0; j < 10; ++j) {
                data.inputs.row(j) = grid.row(observed[j]);
                data.targets(j) = g(observed[j]);
            }
            MatrixXd q(rest.size(), 2);
            for (std::size_t j = 0; j < rest.size(); ++j) q.row(static_cast<Eigen::Index>(j)) = grid.row(rest[j]);
            const auto moments = gp::posterior_query(gp::fit_posterior(data, spec), q);
            const VectorXd bound = safety::safety_bounds(moments, cfg);
            int hits = 0;
            for (std::size_t j = 0; j < rest.size(); ++j) hits += g(rest[j]) >= bound(static_cast<Eigen::Index>(j));
            per_rep.push_back(static_cast<double>(hits) / static_cast<double>(rest.size()));
        }
        const double freq = std::accumulate(per_rep.begin(), per_rep.end(), 0.0) / replicates;
        // Replicates are independent; within one replicate the grid events are
        // correlated, so the binomial error of 200 Bernoulli trials bounds the
        // error of the pooled frequency from above.
        const double eps = std::sqrt(alpha * (1.0 - alpha) / replicates);
        const bool ok = std::abs(freq - alpha) <= 3.0 * eps;
        all_ok = all_ok && ok;
        detail += fmt("alpha %.1f: freq %.4f band [%.4f, %.4f]; ", alpha, freq, alpha - 3 * eps, alpha + 3 * eps);
    }
    const double secs = timer.seconds();
    report(all_ok && secs < 300.0, "confidence_frequency", detail + fmt("%.1fs (limit 300s)", secs));
}

// ---------------------------------------------------------------------------

void safe_update_table() {
    Timer timer;
    struct Case {
        const char* name;
        trust_region::TrustRegionConfig cfg;
    };
    // Defaults reach the cap from below and the floored reset; l_min = l_0 / 2^7
    // lands a halving exactly on l_min; l_max = 1.0 caps a non-power doubling.
    std::vector<Case> cases(3);
    cases[0].name = "default";
    cases[1].name = "lmin=0.5";
    cases[1].cfg.min_length = 0.5;
    cases[2].name = "lmax=1.0";
    cases[2].cfg.max_length = 1.0;
    cases[2].cfg.min_length = 0.8 / 128.0;
    std::size_t checked = 0, mismatched = 0;
    std::set<std::string> branches;
    for (const auto& c : cases) {
        const oracle::TrConfig oc{3, 3, c.cfg.initial_length, c.cfg.min_length, c.cfg.max_length};
        // Breadth-first over reachable states from (l_0, 0, 0).
        std::vector<oracle::TrState> frontier{{oc.l0, 0, 0}};
        std::vector<oracle::TrState> seen = frontier;
        while (!frontier.empty()) {
            const oracle::TrState s = frontier.back();
            frontier.pop_back();
            // Batch kinds: a safe improver; an unsafe improver; a safe non-improver;
            // an improver sitting exactly at the threshold (not safe under the strict rule).
            for (int kind = 0; kind < 4; ++kind) {
                trust_region::TrustRegionState st;
                st.config = c.cfg;
                st.length = s.length;
                st.success_count = s.cs;
                st.failure_count = s.cf;
                st.incumbent_value = 1.0;
                st.incumbent_point = VectorXd::Zero(2);
                trust_region::BatchOutcome b;
                MatrixXd pts = MatrixXd::Ones(2, 2);
                switch (kind) {
                    case 0: b = {{0.5, 2.0}, {0.1, 0.3}}; break;
                    case 1: b = {{0.5, 2.0}, {0.1, -0.3}}; break;
                    case 2: b = {{0.5, 0.9}, {0.1, 0.3}}; break;
                    default: b = {{0.5, 2.0}, {0.1, 0.0}}; break;
                }
                const bool success = kind == 0;
                const auto got = trust_region::safe_update(st, b, pts, 0.0);
                const oracle::TrState want = oracle::tr_step(s, success, oc);
                const oracle::TrState have{got.length, got.success_count, got.failure_count};
                ++checked;
                const bool incumbent_ok = success ? got.incumbent_value == 2.0 : got.incumbent_value == 1.0;
                if (!(have == want) || !incumbent_ok) ++mismatched;
                if (success && s.cs == 2) branches.insert(2 * s.length > oc.lmax ? "cap" : "double");
                if (!success && s.cf == 2) {
                    const double half = 0.5 * s.length;
                    branches.insert(half < oc.lmin ? "floored-reset" : half == oc.lmin ? "exact-reset" : "halve");
                }
                if (std::find(seen.begin(), seen.end(), want) == seen.end()) {
                    seen.push_back(want);
                    frontier.push_back(want);
                }
            }
        }
    }
    std::string b;
    for (const auto& s : branches) b += s + " ";
    const bool all_branches = branches.size() == 5;
    report(mismatched == 0 && all_branches, "safe_update_table",
           fmt("%zu transitions, %zu mismatches; branches hit: %s(%.2fs)", checked, mismatched, b.c_str(),
               timer.seconds()));
}

// ---------------------------------------------------------------------------

void subspace_equivalence() {
    Timer timer;
    std::mt19937_64 rng(5);
    const int ambient = 40, d = 5;
    const MatrixXd w = oracle::random_orthonormal_rows(d, ambient, rng);  // 5 x 40
    const VectorXd offset = oracle::random_matrix(ambient, 1, rng);
    const auto lift = [&](const MatrixXd& z) { return MatrixXd((z * w).rowwise() + offset.transpose()); };
    const MatrixXd x_train = lift(oracle::random_matrix(60, d, rng, -1.0, 1.0));
    const MatrixXd x_test = lift(oracle::random_matrix(100, d, rng, -1.0, 1.0));
    VectorXd y(60);
    for (int i = 0; i < 60; ++i) y(i) = std::cos(x_train.row(i).sum()) - 0.2;

    const embedding::EmbeddingMap map = embedding::fit_pca(x_train, d);
    double worst = 0.0;
    bool same_sets = true;
    std::size_t safe_count = 0;
    for (auto family : {gp::KernelFamily::Matern52, gp::KernelFamily::SquaredExponential}) {
        const gp::KernelSpec spec{family, 0.9, 1.3};
        gp::GpDataset amb{x_train, y, 1e-4};
        gp::GpDataset lat{map.encode_rows(x_train), y, 1e-4};
        const auto pa = gp::fit_posterior(amb, spec);
        const auto pl = gp::fit_posterior(lat, spec);
        const MatrixXd z_test = map.encode_rows(x_test);
        safety::SafetyConfig cfg;
        const VectorXd ua = safety::safety_bounds(gp::posterior_query(pa, x_test), cfg);
        const VectorXd ul = safety::safety_bounds(gp::posterior_query(pl, z_test), cfg);
        worst = std::max(worst, (ua - ul).cwiseAbs().maxCoeff());
        const auto sa = safety::identify_safe(pa, x_test, cfg);
        const auto sl = safety::identify_safe(pl, z_test, cfg);
        same_sets = same_sets && sa.indices == sl.indices;
        safe_count = sa.size();
    }
    report(worst <= 1e-8 && same_sets, "subspace_equivalence",
           fmt("max |UCB_latent - UCB_ambient| %.2e (tol 1e-8), safe sets %s (%zu of 100 safe), %.2fs", worst,
               same_sets ? "identical" : "DIFFER", safe_count, timer.seconds()));
}

// ---------------------------------------------------------------------------

double cumulative_violation(const optimizer::RunRecord& r, std::size_t from, std::size_t to) {
    double v = 0.0;
    for (std::size_t i = from; i < to && i < r.observations.size(); ++i) v += std::max(0.0, -r.observations[i].y_g);
    return v;
}

struct Paired {
    int wins = 0, losses = 0, ties = 0;
    double mean_a = 0.0, mean_b = 0.0;
    double p() const { return oracle::sign_test(wins, losses); }
    std::string str() const {
        return fmt("%.3f vs %.3f, W/L/T %d/%d/%d, p=%.4f", mean_a, mean_b, wins, losses, ties, p());
    }
};

Paired paired(const benchmarks::MethodResult& a, const benchmarks::MethodResult& b,
              const std::function<double(const optimizer::RunRecord&)>& metric, bool higher_is_better) {
    Paired out;
    const std::size_t n = a.seeds.size();
    for (std::size_t k = 0; k < n; ++k) {
        const double x = metric(*a.seeds[k].record), y = metric(*b.seeds[k].record);
        out.mean_a += x / static_cast<double>(n);
        out.mean_b += y / static_cast<double>(n);
        if (x == y) ++out.ties;
        else if ((x > y) == higher_is_better) ++out.wins;
        else ++out.losses;
    }
    return out;
}

void desk_benchmark() {
    const fs::path cfg_path = fs::path(HDSAFEBO_SOURCE_DIR) / "configs" / "desk.json";
    const config::ToolkitConfig cfg = config::load_config(cfg_path);
    Timer timer;
    const auto rep = benchmarks::run_benchmark(cfg.bench.methods, cfg.bench.task, cfg.bench.options);
    const double secs = timer.seconds();
    std::printf("      desk benchmark: %zu methods x %zu seeds in %.1fs\n", rep.methods.size(), rep.seeds.size(), secs);
    bool complete = true;
    for (const auto& m : rep.methods) {
        for (const auto& s : m.seeds) complete = complete && s.record && !s.failure;
        std::printf("      %-12s objective %.3f +- %.3f  safety %.3f  violation %.3f +- %.3f\n", m.name.c_str(),
                    m.objective.mean, m.objective.standard_error, m.safety.mean, m.violation.mean,
                    m.violation.standard_error);
    }
    if (!complete) {
        report(false, "desk_runs_complete", "some runs failed; desk criteria not evaluated");
        return;
    }
    const auto& full = rep.method("hdsafebo");
    const auto& lcb = rep.method("lcb_local");
    const auto& global = rep.method("ucb_global");
    const auto& none = rep.method("none_local");
    const std::size_t init = static_cast<std::size_t>(cfg.bench.options.init_count);

    // Violation trend over the optimizer's own selections, checked at batch boundaries.
    int monotone = 0;
    for (const auto& s : full.seeds) {
        const auto& r = *s.record;
        const std::size_t selected = r.observations.size() - init;
        bool ok = true;
        double prev = -1.0;
        for (std::size_t t = cfg.optimizer.batch_size; t <= selected; t += cfg.optimizer.batch_size) {
            if (2 * t < selected) continue;
            const double avg = cumulative_violation(r, init, init + t) / static_cast<double>(t);
            if (prev >= 0.0 && avg > prev + 1e-12) ok = false;
            prev = avg;
        }
        monotone += ok;
    }
    const auto alg_violation = [init](const optimizer::RunRecord& r) {
        return cumulative_violation(r, init, r.observations.size());
    };
    double v_full = 0.0, v_none = 0.0;
    for (std::size_t k = 0; k < full.seeds.size(); ++k) {
        v_full += alg_violation(*full.seeds[k].record) / static_cast<double>(full.seeds.size());
        v_none += alg_violation(*none.seeds[k].record) / static_cast<double>(none.seeds.size());
    }
    const double reduction = v_none > 0.0 ? 1.0 - v_full / v_none : 0.0;
    report(monotone >= 16 && reduction >= 0.2 && secs < 900.0, "violation_trend",
           fmt("V_t/t non-increasing over final half in %d/20 seeds (need 16); mean V_T %.3f vs none %.3f, "
               "reduction %.1f%% (need 20%%); bench %.0fs (limit 900s)",
               monotone, v_full, v_none, 100.0 * reduction, secs));

    const auto objective = [](const optimizer::RunRecord& r) {
        return r.final_metrics.best_feasible.value_or(-std::numeric_limits<double>::infinity());
    };
    const auto violation = [](const optimizer::RunRecord& r) { return r.final_metrics.cumulative_violation; };
    const auto safe_ratio = [](const optimizer::RunRecord& r) { return r.final_metrics.safe_ratio; };
    const Paired obj_lcb = paired(full, lcb, objective, true);
    const Paired obj_global = paired(full, global, objective, true);
    const Paired vio_none = paired(full, none, violation, false);
    const bool a_ok = obj_lcb.mean_a > obj_lcb.mean_b && obj_lcb.p() < 0.05 && obj_global.mean_a > obj_global.mean_b &&
                      obj_global.p() < 0.05;
    const bool b_ok = vio_none.mean_a < vio_none.mean_b && vio_none.p() < 0.05;
    report(a_ok, "table_objective", "vs lcb_local " + obj_lcb.str() + "; vs ucb_global " + obj_global.str());
    report(b_ok && secs < 1800.0, "table_violation", "vs none_local " + vio_none.str() + fmt("; %.0fs (limit 1800s)", secs));

    const Paired saf_global = paired(full, global, safe_ratio, true);
    const bool local_ok = (obj_global.mean_a > obj_global.mean_b && obj_global.p() < 0.05) ||
                          (saf_global.mean_a > saf_global.mean_b && saf_global.p() < 0.05);
    report(local_ok, "ablation_local_search",
           "objective " + obj_global.str() + "; safety " + saf_global.str());

    const std::size_t early = (static_cast<std::size_t>(cfg.bench.options.budget) - init) / 3;
    const auto early_unsafe = [init, early](const optimizer::RunRecord& r) {
        double c = 0.0;
        for (std::size_t i = init; i < init + early && i < r.observations.size(); ++i) c += r.observations[i].y_g < 0.0;
        return c;
    };
    const Paired early_none = paired(full, none, early_unsafe, false);
    report(early_none.mean_a < early_none.mean_b && early_none.p() < 0.05, "ablation_optimistic_id",
           fmt("unsafe picks in first %zu selections: ", early) + early_none.str());

    // Replay every desk run from its serialised log.
    std::size_t replayed = 0, mismatched = 0;
    for (const auto& m : rep.methods) {
        for (const auto& s : m.seeds) {
            std::stringstream log;
            io::write_run_log(log, *s.record, io::json{{"method", m.name}, {"seed", s.seed}});
            const auto r = io::replay_run_log(log);
            ++replayed;
            if (!r.complete || !r.record || r.record->final_metrics != s.record->final_metrics ||
                r.state_hash != io::state_hash(*s.record)) {
                ++mismatched;
            }
        }
    }
    // Rerunning one seed from scratch must reproduce it bit for bit.
    benchmarks::BenchmarkOptions one = cfg.bench.options;
    one.seeds = {cfg.bench.options.seeds.front()};
    const auto again = benchmarks::run_benchmark({cfg.bench.methods.front()}, cfg.bench.task, one);
    const bool rerun_same = io::state_hash(*again.methods[0].seeds[0].record) == io::state_hash(*full.seeds[0].record);
    report(mismatched == 0 && rerun_same, "bench_replay",
           fmt("%zu run logs replayed, %zu mismatches; rerun of seed %llu %s", replayed, mismatched,
               static_cast<unsigned long long>(one.seeds[0]), rerun_same ? "identical" : "DIFFERS"));
}

// ---------------------------------------------------------------------------

void session_replay() {
    Timer timer;
    const fs::path root = fs::temp_directory_path() / fmt("hdsafebo-accept-%d", static_cast<int>(getpid()));
    fs::remove_all(root);
    const auto clean = driver::run_script(root / "clean");
    const std::string want = clean.final->state_hash;
    const std::int64_t events = clean.final->last_seq;
    const auto replay = session::replay_session_log(root / "clean" / "sessions" / "drill.jsonl", true);
    const bool replay_ok = replay.ok && replay.snapshot && replay.snapshot->state_hash == want;

    int bad_crash = 0;
    for (std::int64_t k = 1; k <= events; ++k) {
        const auto out = driver::run_script(root / fmt("crash-%lld", static_cast<long long>(k)), k);
        if (out.crashes != 1 || out.final->state_hash != want) ++bad_crash;
    }
    // Killed mid-write: keep k whole lines plus half of the next one, restart, finish.
    std::vector<std::string> lines;
    {
        std::ifstream in(root / "clean" / "sessions" / "drill.jsonl");
        for (std::string l; std::getline(in, l);) lines.push_back(l);
    }
    int bad_torn = 0;
    for (std::size_t k = 1; k < lines.size(); ++k) {
        const fs::path dir = root / fmt("torn-%zu", k);
        fs::create_directories(dir / "sessions");
        {
            std::ofstream out(dir / "sessions" / "drill.jsonl", std::ios::binary);
            for (std::size_t i = 0; i < k; ++i) out << lines[i] << '\n';
            out << lines[k].substr(0, lines[k].size() / 2);
        }
        const auto out = driver::run_script(dir);
        if (out.final->state_hash != want) ++bad_torn;
    }
    fs::remove_all(root);
    report(replay_ok && bad_crash == 0 && bad_torn == 0 && clean.proposals == 10, "session_crash_recovery",
           fmt("%d rounds, %lld events; replay %s; crash at each boundary: %d mismatches; torn tail at each "
               "line: %d mismatches; %.1fs",
               clean.proposals, static_cast<long long>(events), replay_ok ? "identical" : "DIFFERS", bad_crash,
               bad_torn, timer.seconds()));
}

// ---------------------------------------------------------------------------

void isometry() {
    std::mt19937_64 rng(9);
    const gp::KernelSpec spec{gp::KernelFamily::Matern52, 1.0, 1.0};
    const MatrixXd rows = oracle::random_orthonormal_rows(4, 30, rng);
    const MatrixXd in_span = oracle::random_matrix(80, 4, rng, -1.0, 1.0) * rows;
    const MatrixXd full_rank = oracle::random_matrix(80, 30, rng, -1.0, 1.0);
    const auto probe = [](const MatrixXd& x) {
        gp::GpDataset d;
        d.inputs = x.topRows(20);
        d.targets = d.inputs.rowwise().sum();
        d.noise_variance = 1e-4;
        return d;
    };
    const auto id = embedding::isometry_diagnostics(embedding::EmbeddingMap::identity(30), full_rank, spec,
                                                    probe(full_rank));
    const auto span = embedding::isometry_diagnostics(embedding::fit_pca(in_span, 4), in_span, spec, probe(in_span));
    const auto trunc_map = embedding::fit_pca(full_rank, 5);
    const auto trunc = embedding::isometry_diagnostics(trunc_map, full_rank, spec, probe(full_rank));
    const double loop = oracle::distance_correlation(full_rank, trunc_map.encode_rows(full_rank));
    const bool ok = std::abs(id.distance_correlation - 1.0) <= 1e-8 &&
                    std::abs(span.distance_correlation - 1.0) <= 1e-8 && trunc.distance_correlation < 1.0 &&
                    std::abs(trunc.distance_correlation - loop) <= 1e-10;
    report(ok, "isometry_diagnostics",
           fmt("identity %.12f, span PCA %.12f (tol 1e-8); truncated %.10f vs loop oracle %.10f (|diff| %.1e, tol "
               "1e-10)",
               id.distance_correlation, span.distance_correlation, trunc.distance_correlation, loop,
               std::abs(trunc.distance_correlation - loop)));
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<void()>>> all = {
        {"gp", gp_correctness},       {"frequency", confidence_frequency}, {"safe_update", safe_update_table},
        {"subspace", subspace_equivalence}, {"isometry", isometry},        {"replay", session_replay},
        {"desk", desk_benchmark},
    };
    std::set<std::string> chosen(argv + 1, argv + argc);
    for (const auto& [name, fn] : all) {
        if (!chosen.empty() && !chosen.count(name)) continue;
        try {
            fn();
        } catch (const std::exception& e) {
            report(false, name, std::string("threw: ") + e.what());
        }
    }
    std::printf("%d failing criteria\n", failures);
    return failures == 0 ? 0 : 1;
}
