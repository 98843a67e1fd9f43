#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>

namespace hdsafebo::gp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class KernelFamily { Matern52, SquaredExponential };

std::string_view kernel_family_name(KernelFamily family) noexcept;
KernelFamily parse_kernel_family(std::string_view name);

/// Isotropic stationary covariance: output_scale * rho(|a - b| / lengthscale).
struct KernelSpec {
    KernelFamily family = KernelFamily::Matern52;
    double lengthscale = 1.0;
    double output_scale = 1.0;

    void validate() const;
    /// Correlation profile at scaled distance r, rho(0) = 1.
    double correlation(double scaled_distance) const;

    bool operator==(const KernelSpec&) const = default;
};

double kernel_eval(const KernelSpec& spec,
                   const Eigen::Ref<const VectorXd>& a,
                   const Eigen::Ref<const VectorXd>& b);

/// Cross-covariance between the rows of `a` and the rows of `b`.
MatrixXd kernel_matrix(const KernelSpec& spec, const MatrixXd& a, const MatrixXd& b);

/// Rows of `inputs` are points. An empty dataset still carries its input
/// dimension through `inputs.cols()`.
struct GpDataset {
    MatrixXd inputs;
    VectorXd targets;
    double noise_variance = 0.0;

    Eigen::Index size() const { return inputs.rows(); }
    Eigen::Index dim() const { return inputs.cols(); }
    void validate() const;
};

struct PosteriorMoments {
    VectorXd means;
    VectorXd variances;
};

// Immutable once built; queries are const and safe from concurrent readers.
class GpPosterior {
public:
    const GpDataset& dataset() const { return data_; }
    const KernelSpec& kernel() const { return kernel_; }
    Eigen::Index dim() const { return data_.dim(); }
    /// Diagonal regularisation added on top of the noise variance.
    double jitter() const { return jitter_; }

    PosteriorMoments query(const MatrixXd& queries) const;
    MatrixXd covariance(const MatrixXd& queries) const;

private:
    friend GpPosterior fit_posterior(GpDataset data, const KernelSpec& kernel);

    GpPosterior(GpDataset data, KernelSpec kernel) : data_(std::move(data)), kernel_(kernel) {}

    void check_queries(const MatrixXd& queries) const;
    // Whitened cross-covariance L^{-1} K(X, Q).
    MatrixXd whitened(const MatrixXd& cross) const;

    GpDataset data_;
    KernelSpec kernel_;
    MatrixXd chol_lower_;
    VectorXd weights_;
    double jitter_ = 0.0;
    double variance_floor_ = 0.0;
};

GpPosterior fit_posterior(GpDataset data, const KernelSpec& kernel);

PosteriorMoments posterior_query(const GpPosterior& post, const MatrixXd& queries);
MatrixXd posterior_cov(const GpPosterior& post, const MatrixXd& queries);

double log_marginal_likelihood(const GpDataset& data, const KernelSpec& kernel);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct HyperparameterBounds {
    Interval lengthscale{1e-3, 10.0};
    Interval output_scale{1e-2, 20.0};
    Interval noise_variance{1e-6, 1e-1};

    void validate() const;
};

struct FitOptions {
    int restarts = 5;
    int iterations = 50;
    std::uint64_t seed = 0;
    KernelFamily family = KernelFamily::Matern52;
};

struct FittedHyperparameters {
    KernelSpec kernel;
    double noise_variance = 0.0;
    double log_likelihood = 0.0;
};

/// Multi-start coordinate ascent on the log evidence in log-parameter space.
/// The dataset's own noise_variance is ignored; noise is searched within bounds.
FittedHyperparameters fit_hyperparameters(const GpDataset& data,
                                          const HyperparameterBounds& bounds,
                                          const FitOptions& options);

/// Draws x candidates matrix: each row is one joint posterior sample.
MatrixXd joint_sample(const GpPosterior& post, const MatrixXd& candidates, int draws,
                      std::mt19937_64& rng);

}  // namespace hdsafebo::gp
