#include "hdsafebo/benchmarks.hpp"

#include "hdsafebo/errors.hpp"
#include "hdsafebo/sampling.hpp"

#include <boost/math/distributions/binomial.hpp>

#include <algorithm>
#include <atomic>
#include <numeric>
#include <cmath>
#include <cstring>
#include <thread>

namespace hdsafebo::benchmarks {

namespace {

constexpr std::uint64_t kStreamProjection = 11;
constexpr std::uint64_t kStreamObjective = 12;
constexpr std::uint64_t kStreamSafety = 13;
constexpr std::uint64_t kStreamInitial = 14;
constexpr std::uint64_t kStreamMethod = 15;

std::string key_of(const Eigen::Ref<const VectorXd>& z) {
    std::string key(static_cast<std::size_t>(z.size()) * sizeof(double), '\0');
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double v = z(i) == 0.0 ? 0.0 : z(i);  // fold -0.0
        std::memcpy(key.data() + static_cast<std::size_t>(i) * sizeof(double), &v, sizeof(double));
    }
    return key;
}

}  // namespace

LazyGpSample::LazyGpSample(gp::KernelSpec kernel, Eigen::Index dim, std::uint64_t seed)
    : kernel_(kernel), dim_(dim), jitter_(1e-10 * kernel.output_scale), rng_(seed) {
    kernel_.validate();
    if (dim < 1) throw InvalidInput("LazyGpSample needs a positive dimension");
}

double LazyGpSample::operator()(const Eigen::Ref<const VectorXd>& z) {
    if (z.size() != dim_ || !z.allFinite()) {
        throw InvalidInput("LazyGpSample: bad query point");
    }
    std::string key = key_of(z);
    if (const auto it = cache_.find(key); it != cache_.end()) {
        return values_[it->second];
    }
    const auto n = static_cast<Eigen::Index>(values_.size());
    if (n == points_.rows()) {
        const Eigen::Index cap = std::max<Eigen::Index>(16, 2 * n);
        points_.conservativeResize(cap, dim_);
        chol_.conservativeResize(cap, cap);
        whitened_.conservativeResize(cap);
    }

    VectorXd cross(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        cross(i) = kernel_.output_scale *
                   kernel_.correlation((points_.row(i).transpose() - z).norm() / kernel_.lengthscale);
    }
    VectorXd v = chol_.topLeftCorner(n, n).triangularView<Eigen::Lower>().solve(cross);
    const double mean = n > 0 ? v.dot(whitened_.head(n)) : 0.0;
    const double var = std::max(0.0, kernel_.output_scale - v.squaredNorm());
    std::normal_distribution<double> normal(0.0, 1.0);
    const double value = mean + std::sqrt(var) * normal(rng_);

    // Extend the factor of K + jitter*I by one row.
    const double pivot_sq = kernel_.output_scale + jitter_ - v.squaredNorm();
    if (!(pivot_sq > 0.0) || !std::isfinite(value)) {
        throw NumericalFailure("LazyGpSample: conditioning broke down at sample " + std::to_string(n));
    }
    const double pivot = std::sqrt(pivot_sq);
    points_.row(n) = z.transpose();
    chol_.row(n).head(n) = v.transpose();
    chol_.row(n).tail(chol_.cols() - n).setZero();
    chol_.col(n).tail(chol_.rows() - n - 1).setZero();
    chol_(n, n) = pivot;
    whitened_(n) = (value - mean) / pivot;
    values_.push_back(value);
    cache_.emplace(std::move(key), static_cast<std::size_t>(n));
    return value;
}

std::string_view task_structure_name(TaskStructure s) noexcept {
    return s == TaskStructure::Projection ? "projection" : "coordinate_subset";
}

TaskStructure parse_task_structure(std::string_view name) {
    if (name == "projection") return TaskStructure::Projection;
    if (name == "coordinate_subset") return TaskStructure::CoordinateSubset;
    throw InvalidInput("unknown task structure '" + std::string(name) + "'");
}

void TaskSpec::validate() const {
    if (ambient_dim < 1 || effective_dim < 1 || effective_dim > ambient_dim) {
        throw InvalidInput("task requires 1 <= effective_dim <= ambient_dim");
    }
    if (!std::isfinite(shift)) throw InvalidInput("task shift must be finite");
    if (!(projection_scale > 0.0) || !std::isfinite(projection_scale)) {
        throw InvalidInput("task projection_scale must be positive");
    }
    kernel.validate();
}

SyntheticTask::SyntheticTask(const TaskSpec& spec, std::uint64_t seed)
    : spec_(spec),
      seed_(seed),
      center_(VectorXd::Constant(spec.ambient_dim, 0.5)),
      objective_(spec.kernel, spec.effective_dim, sampling::derive_seed(seed, {kStreamObjective})),
      safety_(spec.kernel, spec.effective_dim, sampling::derive_seed(seed, {kStreamSafety})) {
    spec_.validate();
    const int dim = spec.ambient_dim;
    const int eff = spec.effective_dim;
    std::mt19937_64 rng(sampling::derive_seed(seed, {kStreamProjection}));
    MatrixXd rows(eff, dim);
    if (spec.structure == TaskStructure::Projection) {
        std::normal_distribution<double> normal(0.0, 1.0);
        MatrixXd g(dim, eff);
        for (Eigen::Index j = 0; j < eff; ++j) {
            for (Eigen::Index i = 0; i < dim; ++i) g(i, j) = normal(rng);
        }
        const Eigen::HouseholderQR<MatrixXd> qr(g);
        rows = (qr.householderQ() * MatrixXd::Identity(dim, eff)).transpose();
    } else {
        std::vector<int> idx(static_cast<std::size_t>(dim));
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        std::sort(idx.begin(), idx.begin() + eff);
        rows.setZero();
        for (int r = 0; r < eff; ++r) rows(r, idx[static_cast<std::size_t>(r)]) = 1.0;
    }
    projection_ = spec.projection_scale * rows;
}

VectorXd SyntheticTask::effective_coordinates(const Eigen::Ref<const VectorXd>& x) const {
    if (x.size() != spec_.ambient_dim) {
        throw InvalidInput("task evaluate: expected dimension " + std::to_string(spec_.ambient_dim));
    }
    return projection_ * (x - center_);
}

Evaluation SyntheticTask::evaluate(const Eigen::Ref<const VectorXd>& x) {
    const VectorXd z = effective_coordinates(x);
    const double f = objective_(z);
    const double g = safety_(z);
    return Evaluation{f, g - spec_.shift};
}

trust_region::BatchOutcome SyntheticTask::evaluate_batch(const MatrixXd& points) {
    trust_region::BatchOutcome out;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const Evaluation e = evaluate(points.row(i).transpose());
        out.y_f.push_back(e.y_f);
        out.y_g.push_back(e.y_g);
    }
    return out;
}

trust_region::Box SyntheticTask::domain() const {
    return {VectorXd::Zero(spec_.ambient_dim), VectorXd::Ones(spec_.ambient_dim)};
}

embedding::EmbeddingMap SyntheticTask::effective_subspace_map() const {
    return embedding::EmbeddingMap::linear(projection_ / spec_.projection_scale, center_, 1e-8);
}

SyntheticTask make_task(const TaskSpec& spec, std::uint64_t seed) {
    return SyntheticTask(spec, seed);
}

std::vector<optimizer::Observation> initial_design(SyntheticTask& task, int count, std::uint64_t seed) {
    if (count < 1) throw InvalidInput("initial design needs at least one point");
    std::mt19937_64 rng(sampling::derive_seed(seed, {kStreamInitial}));
    const MatrixXd pts = sampling::uniform_points(task.domain(), count, rng);
    std::vector<optimizer::Observation> out;
    out.reserve(static_cast<std::size_t>(count));
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        const Evaluation e = task.evaluate(pts.row(i).transpose());
        out.push_back(optimizer::Observation{pts.row(i).transpose(), e.y_f, e.y_g, 0, std::nullopt});
    }
    return out;
}

const MethodResult& BenchmarkReport::method(std::string_view name) const {
    for (const MethodResult& m : methods) {
        if (m.name == name) return m;
    }
    throw NotFound("no method named '" + std::string(name) + "' in report");
}

Aggregate aggregate(const std::vector<double>& values) {
    Aggregate a;
    a.count = values.size();
    if (values.empty()) return a;
    double sum = 0.0;
    for (double v : values) sum += v;
    a.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - a.mean) * (v - a.mean);
        a.standard_error = std::sqrt(ss / static_cast<double>(values.size() - 1) /
                                     static_cast<double>(values.size()));
    }
    return a;
}

void summarize(MethodResult& m) {
    std::vector<double> obj, saf, vio;
    for (const SeedResult& s : m.seeds) {
        if (!s.record) continue;
        const optimizer::Metrics& fm = s.record->final_metrics;
        if (fm.best_feasible) obj.push_back(*fm.best_feasible);
        saf.push_back(fm.safe_ratio);
        vio.push_back(fm.cumulative_violation);
    }
    m.objective = aggregate(obj);
    m.safety = aggregate(saf);
    m.violation = aggregate(vio);
}

BenchmarkReport run_benchmark(const std::vector<MethodSpec>& methods, const TaskSpec& task,
                              const BenchmarkOptions& options) {
    task.validate();
    if (options.init_count < 1 || options.init_count > options.budget) {
        throw InvalidInput("benchmark requires 1 <= init_count <= budget");
    }
    if (methods.empty() || options.seeds.empty()) {
        throw InvalidInput("benchmark requires at least one method and one seed");
    }
    BenchmarkReport report;
    report.task = task;
    report.budget = options.budget;
    report.init_count = options.init_count;
    report.seeds = options.seeds;
    report.methods.resize(methods.size());
    for (std::size_t m = 0; m < methods.size(); ++m) {
        report.methods[m].name = methods[m].name;
        report.methods[m].seeds.resize(options.seeds.size());
    }

    const std::size_t jobs = methods.size() * options.seeds.size();
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t job = next++; job < jobs; job = next++) {
            const std::size_t m = job % methods.size();
            const std::size_t s = job / methods.size();
            const std::uint64_t seed = options.seeds[s];
            SeedResult& out = report.methods[m].seeds[s];
            out.seed = seed;
            try {
                // Fresh task per method: identical functions and initial data.
                SyntheticTask instance = make_task(task, seed);
                std::vector<optimizer::Observation> init = initial_design(instance, options.init_count, seed);
                optimizer::OptimizerConfig cfg = methods[m].config;
                cfg.budget = options.budget;
                cfg.seed = sampling::derive_seed(methods[m].config.seed, {kStreamMethod, seed});
                const EmbeddingChoice& emb = methods[m].embedding;
                switch (emb.kind) {
                    case EmbeddingChoice::Kind::Identity:
                        cfg.embedding.reset();
                        break;
                    case EmbeddingChoice::Kind::TaskSubspace:
                        cfg.embedding = instance.effective_subspace_map();
                        break;
                    case EmbeddingChoice::Kind::File:
                        cfg.embedding = embedding::load_map(emb.path);
                        break;
                    case EmbeddingChoice::Kind::Pca: {
                        MatrixXd x(static_cast<Eigen::Index>(init.size()), task.ambient_dim);
                        for (std::size_t i = 0; i < init.size(); ++i) {
                            x.row(static_cast<Eigen::Index>(i)) = init[i].x.transpose();
                        }
                        cfg.embedding = embedding::fit_pca(x, emb.latent_dim);
                        break;
                    }
                }
                const optimizer::Oracle oracle = [&instance](const MatrixXd& pts) {
                    return instance.evaluate_batch(pts);
                };
                out.record = optimizer::run(oracle, cfg, std::move(init));
            } catch (const optimizer::RunError& e) {
                out.record = e.partial();
                out.failure = e.partial().failure;
            } catch (const std::exception& e) {
                out.failure = e.what();
            }
        }
    };
    const int threads = std::max(1, options.threads);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (MethodResult& m : report.methods) summarize(m);
    return report;
}

double sign_test_p_value(int wins, int losses) {
    if (wins < 0 || losses < 0) throw InvalidInput("sign test counts must be non-negative");
    const int n = wins + losses;
    if (n == 0 || wins == 0) return 1.0;
    const boost::math::binomial_distribution<double> binom(n, 0.5);
    return boost::math::cdf(boost::math::complement(binom, wins - 1));
}

}  // namespace hdsafebo::benchmarks
