#pragma once

#include "hdsafebo/gp.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace hdsafebo::safety {

enum class SafetyMode { OptimisticUcb, ConservativeLcb, None };

std::string_view safety_mode_name(SafetyMode mode) noexcept;
SafetyMode parse_safety_mode(std::string_view name);

struct SafetyConfig {
    double alpha = 0.1;
    // Experiments fix beta directly; when set it wins over the alpha-derived value.
    std::optional<double> beta_override = 2.0;
    SafetyMode mode = SafetyMode::OptimisticUcb;
    double threshold = 0.0;

    void validate() const;
    double resolved_beta() const;
};

/// Candidates judged safe, with the bound value that decided each one.
struct SafeSet {
    std::vector<Eigen::Index> indices;
    std::vector<double> bounds;

    bool empty() const { return indices.empty(); }
    std::size_t size() const { return indices.size(); }
};

/// beta = Phi^{-1}(1 - alpha): the largest beta with Phi(beta) <= 1 - alpha.
double confidence_scalar(double alpha);

/// Per-candidate decision bound: mu + beta*sigma (optimistic), mu - |beta|*sigma
/// (conservative), or mu + beta*sigma for mode none (reported, not filtered).
Eigen::VectorXd safety_bounds(const gp::PosteriorMoments& moments, const SafetyConfig& cfg);

SafeSet identify_safe(const gp::PosteriorMoments& moments, const SafetyConfig& cfg);
SafeSet identify_safe(const gp::GpPosterior& post_g, const Eigen::MatrixXd& candidates,
                      const SafetyConfig& cfg);

struct ViolationMetrics {
    double safe_ratio = 1.0;
    double cumulative_violation = 0.0;
};

/// safe_ratio = |{g_t >= threshold}| / T, violation = sum of max(0, threshold - g_t).
ViolationMetrics violation_metrics(std::span<const double> g_values, double threshold);

}  // namespace hdsafebo::safety
