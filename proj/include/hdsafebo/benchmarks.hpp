#pragma once

#include "hdsafebo/embedding.hpp"
#include "hdsafebo/gp.hpp"
#include "hdsafebo/optimizer.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace hdsafebo::benchmarks {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// A GP sample path realised on demand: each new point is drawn from the
/// posterior given every previously returned value, then cached.
class LazyGpSample {
public:
    LazyGpSample(gp::KernelSpec kernel, Eigen::Index dim, std::uint64_t seed);

    double operator()(const Eigen::Ref<const VectorXd>& z);

    Eigen::Index dim() const { return dim_; }
    std::size_t size() const { return values_.size(); }

private:
    gp::KernelSpec kernel_;
    Eigen::Index dim_;
    double jitter_;
    std::mt19937_64 rng_;
    MatrixXd points_;  // capacity-grown; first size() rows are live
    MatrixXd chol_;    // lower factor of K + jitter*I over the live points
    std::vector<double> values_;
    VectorXd whitened_;  // L^{-1} values
    std::unordered_map<std::string, std::size_t> cache_;
};

enum class TaskStructure { Projection, CoordinateSubset };

std::string_view task_structure_name(TaskStructure s) noexcept;
TaskStructure parse_task_structure(std::string_view name);

struct TaskSpec {
    int ambient_dim = 60;
    int effective_dim = 10;
    /// g(x) = raw_g(x) - shift, so g >= 0 iff raw_g >= shift.
    double shift = -0.75;
    gp::KernelSpec kernel{gp::KernelFamily::Matern52, 0.05, 1.0};
    TaskStructure structure = TaskStructure::Projection;
    /// Multiplies the orthonormal projection rows, i.e. sets how many kernel
    /// lengthscales the input box spans in the effective space.
    double projection_scale = 1.0;

    void validate() const;
};

struct Evaluation {
    double y_f = 0.0;
    double y_g = 0.0;
};

// Input domain is [0, 1]^D; the effective coordinates are P (x - 0.5).
// Lazy conditioning mutates the cache, so one instance serves one run.
class SyntheticTask {
public:
    SyntheticTask(const TaskSpec& spec, std::uint64_t seed);

    Evaluation evaluate(const Eigen::Ref<const VectorXd>& x);
    trust_region::BatchOutcome evaluate_batch(const MatrixXd& points);

    const TaskSpec& spec() const { return spec_; }
    std::uint64_t seed() const { return seed_; }
    /// d_e x D, rows orthogonal with norm projection_scale.
    const MatrixXd& projection() const { return projection_; }
    VectorXd effective_coordinates(const Eigen::Ref<const VectorXd>& x) const;
    trust_region::Box domain() const;
    /// Orthonormal map onto the effective subspace through the domain centre.
    embedding::EmbeddingMap effective_subspace_map() const;

private:
    TaskSpec spec_;
    std::uint64_t seed_;
    MatrixXd projection_;
    VectorXd center_;
    LazyGpSample objective_;
    LazyGpSample safety_;
};

SyntheticTask make_task(const TaskSpec& spec, std::uint64_t seed);

/// Uniform initial design on [0, 1]^D, evaluated on `task` in row order.
std::vector<optimizer::Observation> initial_design(SyntheticTask& task, int count, std::uint64_t seed);

/// How a method obtains its embedding for a given seed.
struct EmbeddingChoice {
    enum class Kind { Identity, Pca, File, TaskSubspace };
    Kind kind = Kind::Identity;
    int latent_dim = 0;  // Pca
    std::string path;    // File
};

struct MethodSpec {
    std::string name;
    optimizer::OptimizerConfig config;
    EmbeddingChoice embedding;
};

struct SeedResult {
    std::uint64_t seed = 0;
    std::optional<optimizer::RunRecord> record;
    std::optional<std::string> failure;
};

struct Aggregate {
    double mean = 0.0;
    double standard_error = 0.0;
    std::size_t count = 0;
};

struct MethodResult {
    std::string name;
    std::vector<SeedResult> seeds;
    Aggregate objective;
    Aggregate safety;
    Aggregate violation;
};

struct BenchmarkReport {
    TaskSpec task;
    int budget = 0;
    int init_count = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<MethodResult> methods;

    const MethodResult& method(std::string_view name) const;
};

struct BenchmarkOptions {
    int budget = 150;
    int init_count = 50;
    std::vector<std::uint64_t> seeds;
    /// Worker threads over (method, seed) jobs; results are merged in job order.
    int threads = 1;
};

Aggregate aggregate(const std::vector<double>& values);
/// Recomputes the three aggregates of `m` from its stored records.
void summarize(MethodResult& m);

BenchmarkReport run_benchmark(const std::vector<MethodSpec>& methods, const TaskSpec& task,
                              const BenchmarkOptions& options);

/// One-sided exact sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
double sign_test_p_value(int wins, int losses);

}  // namespace hdsafebo::benchmarks
