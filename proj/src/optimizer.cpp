#include "hdsafebo/optimizer.hpp"

#include "hdsafebo/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace hdsafebo::optimizer {

namespace {

// Sub-stream identifiers for derive_seed.
constexpr std::uint64_t kStreamCandidates = 1;
constexpr std::uint64_t kStreamThompson = 2;
constexpr std::uint64_t kStreamFitObjective = 3;
constexpr std::uint64_t kStreamFitSafety = 4;

struct Surrogate {
    gp::GpPosterior posterior;
    double mean = 0.0;
    double scale = 1.0;

    gp::PosteriorMoments moments(const MatrixXd& queries) const {
        gp::PosteriorMoments m = posterior.query(queries);
        m.means = (m.means.array() * scale + mean).matrix();
        m.variances *= scale * scale;
        return m;
    }
};

std::pair<double, double> standardization(const VectorXd& y, bool enabled) {
    if (!enabled || y.size() == 0) {
        return {0.0, 1.0};
    }
    const double mean = y.mean();
    const double var = (y.array() - mean).square().sum() / static_cast<double>(y.size());
    const double sd = std::sqrt(var);
    return {mean, sd > 1e-12 ? sd : 1.0};
}

gp::FittedHyperparameters fit_hypers(const MatrixXd& z, const VectorXd& y, const SurrogateConfig& cfg,
                                     std::uint64_t seed) {
    const auto [mean, scale] = standardization(y, cfg.standardize);
    const VectorXd yt = (y.array() - mean) / scale;
    if (z.rows() < 2) {
        const auto mid = [](const gp::Interval& iv) { return std::sqrt(iv.lo * iv.hi); };
        gp::FittedHyperparameters h;
        h.kernel = gp::KernelSpec{cfg.family, mid(cfg.bounds.lengthscale), mid(cfg.bounds.output_scale)};
        h.noise_variance = cfg.bounds.noise_variance.lo == 0.0 ? 0.0 : mid(cfg.bounds.noise_variance);
        return h;
    }
    return gp::fit_hyperparameters(gp::GpDataset{z, yt, 0.0}, cfg.bounds,
                                   gp::FitOptions{cfg.restarts, cfg.iterations, seed, cfg.family});
}

Surrogate build_surrogate(const MatrixXd& z, const VectorXd& y, const gp::FittedHyperparameters& h,
                          bool standardize) {
    const auto [mean, scale] = standardization(y, standardize);
    VectorXd yt = (y.array() - mean) / scale;
    return Surrogate{gp::fit_posterior(gp::GpDataset{z, std::move(yt), h.noise_variance}, h.kernel), mean,
                     scale};
}

MatrixXd select_rows(const MatrixXd& m, const std::vector<Eigen::Index>& rows) {
    MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    }
    return out;
}

// Rows [first, last) of the observation log used by the surrogates.
std::pair<std::size_t, std::size_t> surrogate_window(const RunState& state, std::size_t last) {
    const int window = state.config.surrogate.window;
    const std::size_t first = window > 0 && last > static_cast<std::size_t>(window)
                                  ? last - static_cast<std::size_t>(window)
                                  : 0;
    return {first, last};
}

void gather(const RunState& state, std::size_t first, std::size_t last, MatrixXd& z, VectorXd& yf,
            VectorXd& yg) {
    const auto n = static_cast<Eigen::Index>(last - first);
    MatrixXd x(n, state.map.source_dim());
    yf.resize(n);
    yg.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Observation& o = state.observations[first + static_cast<std::size_t>(i)];
        x.row(i) = o.x.transpose();
        yf(i) = o.y_f;
        yg(i) = o.y_g;
    }
    z = state.map.encode_rows(x);
}

}  // namespace

std::string_view search_mode_name(SearchMode mode) noexcept {
    return mode == SearchMode::Local ? "local" : "global";
}

SearchMode parse_search_mode(std::string_view name) {
    if (name == "local") return SearchMode::Local;
    if (name == "global") return SearchMode::Global;
    throw InvalidInput("unknown search mode '" + std::string(name) + "'");
}

void OptimizerConfig::validate() const {
    safety.validate();
    trust_region.validate();
    surrogate.bounds.validate();
    if (batch_size < 1) throw InvalidInput("batch_size must be >= 1");
    if (candidate_count < batch_size) throw InvalidInput("candidate_count must be >= batch_size");
    if (budget < 1) throw InvalidInput("budget must be >= 1");
    if (surrogate.restarts < 1 || surrogate.iterations < 0) {
        throw InvalidInput("surrogate restarts must be >= 1 and iterations >= 0");
    }
    if (surrogate.refit_stride < 1) throw InvalidInput("refit_stride must be >= 1");
    if (surrogate.window < 0) throw InvalidInput("window must be >= 0");
}

std::size_t RunState::remaining_budget() const {
    const auto budget = static_cast<std::size_t>(config.budget);
    return observations.size() >= budget ? 0 : budget - observations.size();
}

Metrics RunState::current_metrics() const {
    return compute_metrics(observations, config.safety.threshold);
}

Metrics compute_metrics(std::span<const Observation> observations, double threshold) {
    Metrics m;
    m.evaluations = observations.size();
    std::vector<double> g;
    g.reserve(observations.size());
    for (const Observation& o : observations) {
        g.push_back(o.y_g);
        if (o.y_g >= threshold && (!m.best_feasible || o.y_f > *m.best_feasible)) {
            m.best_feasible = o.y_f;
        }
    }
    const safety::ViolationMetrics v = safety::violation_metrics(g, threshold);
    m.safe_ratio = v.safe_ratio;
    m.cumulative_violation = v.cumulative_violation;
    return m;
}

RunState init_run(OptimizerConfig config, std::vector<Observation> initial_data) {
    config.validate();
    if (initial_data.empty()) {
        throw InvalidInput("init_run: initial data must be non-empty");
    }
    const Eigen::Index dim = initial_data.front().x.size();
    MatrixXd x(static_cast<Eigen::Index>(initial_data.size()), dim);
    std::vector<double> yf, yg;
    for (std::size_t i = 0; i < initial_data.size(); ++i) {
        Observation& o = initial_data[i];
        if (o.x.size() != dim || !o.x.allFinite() || !std::isfinite(o.y_f) || !std::isfinite(o.y_g)) {
            throw InvalidInput("init_run: initial observation " + std::to_string(i) +
                               " has wrong dimension or non-finite values");
        }
        o.iteration = 0;
        x.row(static_cast<Eigen::Index>(i)) = o.x.transpose();
        yf.push_back(o.y_f);
        yg.push_back(o.y_g);
    }

    RunState state;
    state.map = config.embedding ? *config.embedding : embedding::EmbeddingMap::identity(dim);
    if (state.map.source_dim() != dim) {
        throw InvalidInput("init_run: embedding expects dimension " + std::to_string(state.map.source_dim()) +
                           " but data has " + std::to_string(dim));
    }
    state.latent_domain = embedding::latent_bounding_box(state.map, x);

    const double threshold = config.safety.threshold;
    trust_region::TrustRegionState& tr = state.trust_region;
    tr.config = config.trust_region;
    tr.length = config.trust_region.initial_length;
    tr.success_count = 0;
    tr.failure_count = 0;
    try {
        const trust_region::Incumbent inc = trust_region::initial_incumbent(x, yf, yg, threshold);
        tr.incumbent_point = inc.point;
        tr.incumbent_value = inc.value;
    } catch (const SeedUnsafe&) {
        if (!config.bootstrap_unsafe_seed) {
            throw SeedUnsafe("no initial observation has y_g > " + std::to_string(threshold) +
                             "; enable bootstrap_unsafe_seed to start from the least unsafe point");
        }
        const auto best = std::max_element(yg.begin(), yg.end()) - yg.begin();
        tr.incumbent_point = x.row(best).transpose();
        // Any safe sample improves on an unsafe bootstrap incumbent.
        tr.incumbent_value = -std::numeric_limits<double>::infinity();
        state.unsafe_seed = true;
    }
    state.observations = std::move(initial_data);
    state.config = std::move(config);
    state.initial_metrics = state.current_metrics();
    return state;
}

StepProposal propose(const RunState& state) {
    if (state.completed()) {
        throw ConflictError("propose: sample budget is exhausted");
    }
    const OptimizerConfig& cfg = state.config;
    const int t = state.next_iteration;

    // Surrogates in latent space.
    const std::size_t n = state.observations.size();
    const auto [first, last] = surrogate_window(state, n);
    MatrixXd z;
    VectorXd yf, yg;
    gather(state, first, last, z, yf, yg);

    const int stride = cfg.surrogate.refit_stride;
    const int refit_at = t - ((t - 1) % stride);
    if (!state.hyper_cache || state.hyper_cache->refit_iteration != refit_at) {
        // Hyperparameters depend only on the data available at the refit iteration.
        std::size_t upto = 0;
        while (upto < n && state.observations[upto].iteration < refit_at) ++upto;
        const auto [f0, l0] = surrogate_window(state, upto);
        MatrixXd zr;
        VectorXd yfr, ygr;
        gather(state, f0, l0, zr, yfr, ygr);
        RunState::HyperCache cache;
        cache.refit_iteration = refit_at;
        cache.objective = fit_hypers(zr, yfr, cfg.surrogate,
                                     sampling::derive_seed(cfg.seed, {static_cast<std::uint64_t>(refit_at),
                                                                      kStreamFitObjective}));
        cache.safety = fit_hypers(zr, ygr, cfg.surrogate,
                                  sampling::derive_seed(cfg.seed, {static_cast<std::uint64_t>(refit_at),
                                                                   kStreamFitSafety}));
        state.hyper_cache = cache;
    }
    const Surrogate sf = build_surrogate(z, yf, state.hyper_cache->objective, cfg.surrogate.standardize);
    const Surrogate sg = build_surrogate(z, yg, state.hyper_cache->safety, cfg.surrogate.standardize);

    // Local region around the incumbent's latent image.
    StepProposal prop;
    prop.iteration = t;
    const trust_region::Box& domain = state.latent_domain;
    if (cfg.search_mode == SearchMode::Global) {
        prop.region = domain;
    } else {
        VectorXd center = state.map.encode(state.trust_region.incumbent_point);
        center = center.cwiseMax(domain.lower).cwiseMin(domain.upper);
        const VectorXd half = 0.5 * state.trust_region.length * domain.width();
        prop.region = trust_region::make_local_region(center, half, domain);
    }

    const MatrixXd candidates = sampling::sobol_points(
        prop.region, cfg.candidate_count,
        sampling::derive_seed(cfg.seed, {static_cast<std::uint64_t>(t), kStreamCandidates}));
    prop.candidate_count = static_cast<std::size_t>(candidates.rows());

    const gp::PosteriorMoments g_moments = sg.moments(candidates);
    const VectorXd bounds = safety::safety_bounds(g_moments, cfg.safety);
    const safety::SafeSet safe = safety::identify_safe(g_moments, cfg.safety);
    prop.safe_set_size = safe.size();

    const std::size_t q = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size),
                                                state.remaining_budget());
    std::vector<Eigen::Index> chosen;
    if (!safe.empty()) {
        const MatrixXd pool = select_rows(candidates, safe.indices);
        const auto draws = static_cast<int>(std::min(q, safe.size()));
        std::mt19937_64 rng(sampling::derive_seed(cfg.seed, {static_cast<std::uint64_t>(t), kStreamThompson}));
        const MatrixXd samples = gp::joint_sample(sf.posterior, pool, draws, rng);
        std::vector<char> taken(safe.size(), 0);
        std::vector<Eigen::Index> order(safe.size());
        for (int d = 0; d < draws; ++d) {
            std::iota(order.begin(), order.end(), Eigen::Index{0});
            std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
                return samples(d, a) > samples(d, b);
            });
            for (Eigen::Index k : order) {
                if (!taken[static_cast<std::size_t>(k)]) {
                    taken[static_cast<std::size_t>(k)] = 1;
                    chosen.push_back(safe.indices[static_cast<std::size_t>(k)]);
                    break;
                }
            }
        }
    } else {
        prop.fallback = true;
        std::vector<Eigen::Index> order(static_cast<std::size_t>(candidates.rows()));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](Eigen::Index a, Eigen::Index b) { return bounds(a) > bounds(b); });
        chosen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(q, order.size())));
    }

    prop.latent = select_rows(candidates, chosen);
    prop.points = state.map.decode_rows(prop.latent);
    for (Eigen::Index idx : chosen) {
        prop.safety_bounds.push_back(bounds(idx));
    }
    return prop;
}

void apply_batch(RunState& state, int iteration, const MatrixXd& points, const trust_region::BatchOutcome& results,
                 std::size_t safe_set_size, bool fallback, std::optional<double> timestamp) {
    results.validate();
    if (static_cast<std::size_t>(points.rows()) != results.size()) {
        throw InvalidInput("observe: " + std::to_string(results.size()) + " results for " +
                           std::to_string(points.rows()) + " proposed points");
    }
    if (points.cols() != state.map.source_dim()) {
        throw InvalidInput("observe: point dimension mismatch");
    }
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (!std::isfinite(results.y_f[i]) || !std::isfinite(results.y_g[i])) {
            throw InvalidInput("observe: non-finite observation");
        }
    }
    state.trust_region = trust_region::safe_update(state.trust_region, results, points, state.config.safety.threshold);
    for (std::size_t i = 0; i < results.size(); ++i) {
        state.observations.push_back(Observation{points.row(static_cast<Eigen::Index>(i)).transpose(), results.y_f[i],
                                                 results.y_g[i], iteration, timestamp});
    }
    IterationRecord rec;
    rec.iteration = iteration;
    rec.batch_size = results.size();
    rec.safe_set_size = safe_set_size;
    rec.fallback = fallback;
    rec.trust_region_length = state.trust_region.length;
    rec.success_count = state.trust_region.success_count;
    rec.failure_count = state.trust_region.failure_count;
    rec.incumbent_value = state.trust_region.incumbent_value;
    rec.metrics = state.current_metrics();
    state.iterations.push_back(rec);
    state.next_iteration = iteration + 1;
}

void observe(RunState& state, const StepProposal& proposal, const trust_region::BatchOutcome& results) {
    if (proposal.iteration != state.next_iteration) {
        throw InvalidInput("observe: proposal is for iteration " + std::to_string(proposal.iteration) +
                           " but the run expects " + std::to_string(state.next_iteration));
    }
    apply_batch(state, proposal.iteration, proposal.points, results, proposal.safe_set_size, proposal.fallback);
}

RunRecord make_record(const RunState& state) {
    RunRecord r;
    r.config = state.config;
    r.config.embedding = state.map;
    r.observations = state.observations;
    r.initial_metrics = state.initial_metrics;
    r.iterations = state.iterations;
    r.final_metrics = state.current_metrics();
    r.trust_region = state.trust_region;
    r.unsafe_seed = state.unsafe_seed;
    return r;
}

RunRecord run(const Oracle& oracle, const OptimizerConfig& config, std::vector<Observation> initial_data,
              RunObserver* observer) {
    RunState state = init_run(config, std::move(initial_data));
    if (observer) observer->on_init(state);
    try {
        while (!state.completed()) {
            const StepProposal prop = propose(state);
            const trust_region::BatchOutcome outcome = oracle(prop.points);
            observe(state, prop, outcome);
            if (observer) observer->on_iteration(state, prop);
        }
    } catch (const Error& e) {
        auto partial = std::make_shared<RunRecord>(make_record(state));
        partial->failure = std::string(error_code_name(e.code())) + ": " + e.what();
        throw RunError(e, std::move(partial));
    }
    return make_record(state);
}

}  // namespace hdsafebo::optimizer
