#pragma once

#include "hdsafebo/embedding.hpp"
#include "hdsafebo/errors.hpp"
#include "hdsafebo/gp.hpp"
#include "hdsafebo/safety.hpp"
#include "hdsafebo/trust_region.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hdsafebo::optimizer {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class SearchMode { Local, Global };

std::string_view search_mode_name(SearchMode mode) noexcept;
SearchMode parse_search_mode(std::string_view name);

struct SurrogateConfig {
    gp::KernelFamily family = gp::KernelFamily::Matern52;
    gp::HyperparameterBounds bounds;
    int restarts = 5;
    int iterations = 50;
    /// Refit hyperparameters every `refit_stride` iterations (1 = every iteration).
    int refit_stride = 1;
    /// Fit each GP on standardised targets and map the posterior back.
    bool standardize = true;
    /// Keep only the most recent `window` observations in the surrogates (0 = all).
    int window = 0;
};

struct OptimizerConfig {
    safety::SafetyConfig safety;
    int batch_size = 10;
    int candidate_count = 2000;
    int budget = 150;
    std::uint64_t seed = 0;
    /// Absent means identity on the input dimension of the initial data.
    std::optional<embedding::EmbeddingMap> embedding;
    trust_region::TrustRegionConfig trust_region;
    SurrogateConfig surrogate;
    SearchMode search_mode = SearchMode::Local;
    bool bootstrap_unsafe_seed = false;

    void validate() const;
};

struct Observation {
    VectorXd x;
    double y_f = 0.0;
    double y_g = 0.0;
    int iteration = 0;
    /// Wall-clock seconds since the epoch; not part of the deterministic state.
    std::optional<double> timestamp;
};

struct StepProposal {
    int iteration = 0;
    MatrixXd points;
    MatrixXd latent;
    /// Safety bound of each proposed point (mu + beta*sigma, or the LCB in conservative mode).
    std::vector<double> safety_bounds;
    std::size_t safe_set_size = 0;
    std::size_t candidate_count = 0;
    /// Set when the safe set was empty and the batch maximises the safety bound instead.
    bool fallback = false;
    trust_region::Box region;

    std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
};

/// The three run metrics after some number of evaluations.
struct Metrics {
    std::size_t evaluations = 0;
    /// Best y_f among points with y_g >= threshold; absent if none is feasible.
    std::optional<double> best_feasible;
    double safe_ratio = 1.0;
    double cumulative_violation = 0.0;

    bool operator==(const Metrics&) const = default;
};

struct IterationRecord {
    int iteration = 0;
    std::size_t batch_size = 0;
    std::size_t safe_set_size = 0;
    bool fallback = false;
    /// Trust-region state after the update.
    double trust_region_length = 0.0;
    int success_count = 0;
    int failure_count = 0;
    double incumbent_value = 0.0;
    Metrics metrics;

    bool operator==(const IterationRecord&) const = default;
};

struct RunState {
    OptimizerConfig config;
    embedding::EmbeddingMap map;
    trust_region::Box latent_domain;
    std::vector<Observation> observations;
    trust_region::TrustRegionState trust_region;
    /// Index of the next iteration to propose (initial data is iteration 0).
    int next_iteration = 1;
    bool unsafe_seed = false;
    Metrics initial_metrics;
    std::vector<IterationRecord> iterations;

    // Hyperparameters from the latest refit; a cache only, never serialised.
    struct HyperCache {
        int refit_iteration = 0;
        gp::FittedHyperparameters objective;
        gp::FittedHyperparameters safety;
    };
    mutable std::optional<HyperCache> hyper_cache;

    std::size_t remaining_budget() const;
    bool completed() const { return remaining_budget() == 0; }
    Metrics current_metrics() const;
};

Metrics compute_metrics(std::span<const Observation> observations, double threshold);

/// Counters zeroed, incumbent from the safe seeds (or argmax y_g with the
/// bootstrap flag), latent domain = bounding box of the encoded seeds.
RunState init_run(OptimizerConfig config, std::vector<Observation> initial_data);

/// Fit surrogates, build the local region, filter by safety, Thompson-sample a batch.
StepProposal propose(const RunState& state);

/// Appends the batch, runs SafeUpdate and extends the metric trajectory.
void observe(RunState& state, const StepProposal& proposal, const trust_region::BatchOutcome& results);

/// The bookkeeping half of observe(), also used by log replay.
void apply_batch(RunState& state, int iteration, const MatrixXd& points,
                 const trust_region::BatchOutcome& results, std::size_t safe_set_size, bool fallback,
                 std::optional<double> timestamp = std::nullopt);

using Oracle = std::function<trust_region::BatchOutcome(const MatrixXd& points)>;

/// Receives run progress as it happens (used to stream logs to disk).
struct RunObserver {
    virtual ~RunObserver() = default;
    virtual void on_init(const RunState&) {}
    virtual void on_iteration(const RunState&, const StepProposal&) {}
};

struct RunRecord {
    OptimizerConfig config;
    std::vector<Observation> observations;
    Metrics initial_metrics;
    std::vector<IterationRecord> iterations;
    Metrics final_metrics;
    trust_region::TrustRegionState trust_region;
    bool unsafe_seed = false;
    std::optional<std::string> failure;
};

RunRecord make_record(const RunState& state);

/// Thrown by run() when a component fails; carries everything observed so far.
class RunError : public Error {
public:
    RunError(const Error& cause, std::shared_ptr<const RunRecord> partial)
        : Error(cause.code(), cause.what()), partial_(std::move(partial)) {}

    const RunRecord& partial() const { return *partial_; }

private:
    std::shared_ptr<const RunRecord> partial_;
};

RunRecord run(const Oracle& oracle, const OptimizerConfig& config, std::vector<Observation> initial_data,
              RunObserver* observer = nullptr);

}  // namespace hdsafebo::optimizer
