#include "hdsafebo/gp.hpp"

#include "hdsafebo/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace hdsafebo::gp {

namespace {

constexpr double kJitterStart = 1e-10;
constexpr double kJitterMax = 1e-4;

struct Factorization {
    MatrixXd lower;
    double jitter = 0.0;
};

// Cholesky of `gram + (base + jitter) I`, escalating the jitter by 10x from
// 1e-10 * scale up to 1e-4 * scale.
Factorization factorize(const MatrixXd& gram, double base, double scale, bool start_without_jitter) {
    const auto try_jitter = [&](double jitter) -> std::optional<MatrixXd> {
        MatrixXd a = gram;
        a.diagonal().array() += base + jitter;
        Eigen::LLT<MatrixXd> llt(a);
        if (llt.info() != Eigen::Success) {
            return std::nullopt;
        }
        MatrixXd lower = llt.matrixL();
        if (!lower.allFinite() || (lower.diagonal().array() <= 0.0).any()) {
            return std::nullopt;
        }
        return lower;
    };
    if (gram.rows() == 0) {
        return {MatrixXd(0, 0), 0.0};
    }
    if (start_without_jitter) {
        if (auto lower = try_jitter(0.0)) {
            return {std::move(*lower), 0.0};
        }
    }
    for (double rel = kJitterStart; rel <= kJitterMax * 1.0000001; rel *= 10.0) {
        if (auto lower = try_jitter(rel * scale)) {
            return {std::move(*lower), rel * scale};
        }
    }
    throw NumericalFailure("covariance factorization failed after jitter escalation to " +
                           std::to_string(kJitterMax * scale));
}

MatrixXd pairwise_distances(const MatrixXd& a, const MatrixXd& b) {
    MatrixXd d(a.rows(), b.rows());
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            d(i, j) = (a.row(i) - b.row(j)).norm();
        }
    }
    return d;
}

MatrixXd apply_kernel(const KernelSpec& spec, const MatrixXd& distances) {
    const double inv = 1.0 / spec.lengthscale;
    return distances.unaryExpr(
        [&](double r) { return spec.output_scale * spec.correlation(r * inv); });
}

double lml_from_factor(const Factorization& f, const VectorXd& y) {
    const Eigen::Index n = y.size();
    const auto lower = f.lower.triangularView<Eigen::Lower>();
    const VectorXd white = lower.solve(y);
    const double log_det_half = f.lower.diagonal().array().log().sum();
    return -0.5 * white.squaredNorm() - log_det_half -
           0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

bool valid_interval(const Interval& iv, bool allow_zero) {
    if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || iv.lo > iv.hi) {
        return false;
    }
    if (iv.lo == iv.hi) {
        return allow_zero ? iv.lo >= 0.0 : iv.lo > 0.0;
    }
    return iv.lo > 0.0;
}

}  // namespace

std::string_view kernel_family_name(KernelFamily family) noexcept {
    switch (family) {
        case KernelFamily::Matern52: return "matern52";
        case KernelFamily::SquaredExponential: return "squared_exponential";
    }
    return "unknown";
}

KernelFamily parse_kernel_family(std::string_view name) {
    if (name == "matern52") return KernelFamily::Matern52;
    if (name == "squared_exponential") return KernelFamily::SquaredExponential;
    throw InvalidInput("unknown kernel family '" + std::string(name) + "'");
}

void KernelSpec::validate() const {
    if (!(lengthscale > 0.0) || !std::isfinite(lengthscale)) {
        throw InvalidInput("kernel lengthscale must be positive and finite");
    }
    if (!(output_scale > 0.0) || !std::isfinite(output_scale)) {
        throw InvalidInput("kernel output_scale must be positive and finite");
    }
}

double KernelSpec::correlation(double r) const {
    switch (family) {
        case KernelFamily::Matern52: {
            const double s = std::sqrt(5.0) * r;
            return (1.0 + s + s * s / 3.0) * std::exp(-s);
        }
        case KernelFamily::SquaredExponential:
            return std::exp(-0.5 * r * r);
    }
    return 0.0;
}

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const VectorXd>& a,
                   const Eigen::Ref<const VectorXd>& b) {
    if (a.size() != b.size()) {
        throw InvalidInput("kernel_eval: dimension mismatch (" + std::to_string(a.size()) +
                           " vs " + std::to_string(b.size()) + ")");
    }
    spec.validate();
    return spec.output_scale * spec.correlation((a - b).norm() / spec.lengthscale);
}

MatrixXd kernel_matrix(const KernelSpec& spec, const MatrixXd& a, const MatrixXd& b) {
    if (a.cols() != b.cols()) {
        throw InvalidInput("kernel_matrix: dimension mismatch");
    }
    spec.validate();
    return apply_kernel(spec, pairwise_distances(a, b));
}

void GpDataset::validate() const {
    if (inputs.rows() != targets.size()) {
        throw InvalidInput("GpDataset: " + std::to_string(inputs.rows()) + " inputs but " +
                           std::to_string(targets.size()) + " targets");
    }
    if (!inputs.allFinite() || !targets.allFinite()) {
        throw InvalidInput("GpDataset: non-finite entries");
    }
    if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance)) {
        throw InvalidInput("GpDataset: noise_variance must be non-negative");
    }
}

GpPosterior fit_posterior(GpDataset data, const KernelSpec& kernel) {
    data.validate();
    kernel.validate();
    GpPosterior post(std::move(data), kernel);
    const GpDataset& d = post.data_;
    if (d.size() == 0) {
        post.weights_ = VectorXd(0);
        post.chol_lower_ = MatrixXd(0, 0);
        return post;
    }
    const MatrixXd gram = kernel_matrix(kernel, d.inputs, d.inputs);
    const bool noiseless = d.noise_variance == 0.0;
    Factorization f = factorize(gram, d.noise_variance, kernel.output_scale, !noiseless);
    post.jitter_ = f.jitter;
    // With noiseless data the jitter is a factorisation artefact, so variances
    // below it are indistinguishable from zero.
    post.variance_floor_ = noiseless ? f.jitter : 0.0;
    post.chol_lower_ = std::move(f.lower);
    const MatrixXd& lower = post.chol_lower_;
    post.weights_ = lower.triangularView<Eigen::Lower>().transpose().solve(
        lower.triangularView<Eigen::Lower>().solve(d.targets));
    return post;
}

void GpPosterior::check_queries(const MatrixXd& queries) const {
    if (queries.cols() != dim()) {
        throw InvalidInput("posterior query dimension " + std::to_string(queries.cols()) +
                           " does not match data dimension " + std::to_string(dim()));
    }
    if (!queries.allFinite()) {
        throw InvalidInput("posterior query contains non-finite entries");
    }
}

MatrixXd GpPosterior::whitened(const MatrixXd& cross) const {
    return chol_lower_.triangularView<Eigen::Lower>().solve(cross);
}

PosteriorMoments GpPosterior::query(const MatrixXd& queries) const {
    check_queries(queries);
    const Eigen::Index m = queries.rows();
    PosteriorMoments out{VectorXd::Zero(m), VectorXd::Constant(m, kernel_.output_scale)};
    if (data_.size() == 0 || m == 0) {
        return out;
    }
    const MatrixXd cross = kernel_matrix(kernel_, data_.inputs, queries);
    out.means = cross.transpose() * weights_;
    const MatrixXd v = whitened(cross);
    for (Eigen::Index j = 0; j < m; ++j) {
        const double var = kernel_.output_scale - v.col(j).squaredNorm();
        out.variances(j) = var <= variance_floor_ ? 0.0 : var;
    }
    return out;
}

MatrixXd GpPosterior::covariance(const MatrixXd& queries) const {
    check_queries(queries);
    if (queries.rows() < 1) {
        throw InvalidInput("posterior_cov needs at least one query point");
    }
    MatrixXd cov = kernel_matrix(kernel_, queries, queries);
    if (data_.size() > 0) {
        const MatrixXd v = whitened(kernel_matrix(kernel_, data_.inputs, queries));
        cov.noalias() -= v.transpose() * v;
    }
    cov = 0.5 * (cov + cov.transpose());
    // Keep the diagonal identical to query(): clamped points get a zero row
    // and column so the matrix stays positive semidefinite.
    for (Eigen::Index i = 0; i < cov.rows(); ++i) {
        if (cov(i, i) <= variance_floor_) {
            cov.row(i).setZero();
            cov.col(i).setZero();
        }
    }
    return cov;
}

PosteriorMoments posterior_query(const GpPosterior& post, const MatrixXd& queries) {
    return post.query(queries);
}

MatrixXd posterior_cov(const GpPosterior& post, const MatrixXd& queries) {
    return post.covariance(queries);
}

double log_marginal_likelihood(const GpDataset& data, const KernelSpec& kernel) {
    data.validate();
    kernel.validate();
    if (data.size() < 1) {
        throw InvalidInput("log_marginal_likelihood needs at least one observation");
    }
    const MatrixXd gram = kernel_matrix(kernel, data.inputs, data.inputs);
    const Factorization f =
        factorize(gram, data.noise_variance, kernel.output_scale, data.noise_variance > 0.0);
    return lml_from_factor(f, data.targets);
}

void HyperparameterBounds::validate() const {
    if (!valid_interval(lengthscale, false)) {
        throw InvalidInput("hyperparameter bounds: invalid lengthscale interval");
    }
    if (!valid_interval(output_scale, false)) {
        throw InvalidInput("hyperparameter bounds: invalid output_scale interval");
    }
    if (!valid_interval(noise_variance, true)) {
        throw InvalidInput("hyperparameter bounds: invalid noise_variance interval");
    }
}

FittedHyperparameters fit_hyperparameters(const GpDataset& data, const HyperparameterBounds& bounds,
                                          const FitOptions& options) {
    data.validate();
    bounds.validate();
    if (data.size() < 2) {
        throw InvalidInput("fit_hyperparameters needs at least two observations");
    }
    const MatrixXd distances = pairwise_distances(data.inputs, data.inputs);
    const std::array<Interval, 3> box{bounds.lengthscale, bounds.output_scale, bounds.noise_variance};

    std::array<bool, 3> fixed{};
    std::array<double, 3> lo{}, hi{};
    for (std::size_t c = 0; c < 3; ++c) {
        fixed[c] = box[c].lo == box[c].hi;
        lo[c] = fixed[c] ? 0.0 : std::log(box[c].lo);
        hi[c] = fixed[c] ? 0.0 : std::log(box[c].hi);
    }
    const auto decode = [&](const std::array<double, 3>& theta, std::size_t c) {
        return fixed[c] ? box[c].lo : std::exp(theta[c]);
    };
    const auto make_kernel = [&](const std::array<double, 3>& theta) {
        return KernelSpec{options.family, decode(theta, 0), decode(theta, 1)};
    };
    const auto objective = [&](const std::array<double, 3>& theta) {
        const KernelSpec k = make_kernel(theta);
        const double noise = decode(theta, 2);
        try {
            const Factorization f =
                factorize(apply_kernel(k, distances), noise, k.output_scale, noise > 0.0);
            const double v = lml_from_factor(f, data.targets);
            return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
        } catch (const NumericalFailure&) {
            return -std::numeric_limits<double>::infinity();
        }
    };

    FittedHyperparameters best;
    best.log_likelihood = -std::numeric_limits<double>::infinity();
    bool found = false;
    const int restarts = std::max(1, options.restarts);

    for (int r = 0; r < restarts; ++r) {
        std::array<double, 3> theta{};
        std::mt19937_64 rng(options.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(r + 1)));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (std::size_t c = 0; c < 3; ++c) {
            const double u = r == 0 ? 0.5 : unit(rng);
            theta[c] = fixed[c] ? 0.0 : lo[c] + u * (hi[c] - lo[c]);
        }
        double value = objective(theta);
        std::array<double, 3> step{0.5, 0.5, 0.5};
        constexpr double h = 1e-4;

        for (int it = 0; it < options.iterations; ++it) {
            bool active = false;
            for (std::size_t c = 0; c < 3; ++c) {
                if (fixed[c] || step[c] < 1e-6) {
                    continue;
                }
                active = true;
                auto up = theta;
                auto down = theta;
                up[c] = std::min(hi[c], theta[c] + h);
                down[c] = std::max(lo[c], theta[c] - h);
                const double slope = (objective(up) - objective(down)) / (up[c] - down[c]);
                if (!std::isfinite(slope) || slope == 0.0) {
                    step[c] *= 0.5;
                    continue;
                }
                auto trial = theta;
                trial[c] = std::clamp(theta[c] + (slope > 0.0 ? step[c] : -step[c]), lo[c], hi[c]);
                const double v = objective(trial);
                if (v > value) {
                    theta = trial;
                    value = v;
                    step[c] *= 1.5;
                } else {
                    step[c] *= 0.5;
                }
            }
            if (!active) {
                break;
            }
        }
        if (std::isfinite(value) && (!found || value > best.log_likelihood)) {
            found = true;
            best.kernel = make_kernel(theta);
            best.noise_variance = decode(theta, 2);
            best.log_likelihood = value;
        }
    }
    if (!found) {
        throw NumericalFailure("fit_hyperparameters: every start failed numerically");
    }
    return best;
}

MatrixXd joint_sample(const GpPosterior& post, const MatrixXd& candidates, int draws,
                      std::mt19937_64& rng) {
    if (candidates.rows() < 1 || draws < 1) {
        throw InvalidInput("joint_sample needs at least one candidate and one draw");
    }
    const PosteriorMoments moments = post.query(candidates);
    const MatrixXd cov = post.covariance(candidates);
    const Eigen::Index m = candidates.rows();

    // Zero-variance candidates are pinned to their mean; the rest are drawn
    // from the factorised sub-covariance.
    std::vector<Eigen::Index> active;
    active.reserve(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) {
        if (cov(i, i) > 0.0) {
            active.push_back(i);
        }
    }
    MatrixXd out = moments.means.transpose().replicate(draws, 1);
    if (active.empty()) {
        return out;
    }
    const auto k = static_cast<Eigen::Index>(active.size());
    MatrixXd sub(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index b = 0; b < k; ++b) {
            sub(a, b) = cov(active[a], active[b]);
        }
    }
    const Factorization f = factorize(sub, 0.0, post.kernel().output_scale, false);
    std::normal_distribution<double> normal(0.0, 1.0);
    MatrixXd eps(k, draws);
    for (int d = 0; d < draws; ++d) {
        for (Eigen::Index a = 0; a < k; ++a) {
            eps(a, d) = normal(rng);
        }
    }
    const MatrixXd noise = f.lower.triangularView<Eigen::Lower>() * eps;
    for (int d = 0; d < draws; ++d) {
        for (Eigen::Index a = 0; a < k; ++a) {
            out(d, active[a]) += noise(a, d);
        }
    }
    return out;
}

}  // namespace hdsafebo::gp
