#include "hdsafebo/safety.hpp"

#include "hdsafebo/errors.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <string>

namespace hdsafebo::safety {

std::string_view safety_mode_name(SafetyMode mode) noexcept {
    switch (mode) {
        case SafetyMode::OptimisticUcb: return "optimistic_ucb";
        case SafetyMode::ConservativeLcb: return "conservative_lcb";
        case SafetyMode::None: return "none";
    }
    return "unknown";
}

SafetyMode parse_safety_mode(std::string_view name) {
    if (name == "optimistic_ucb") return SafetyMode::OptimisticUcb;
    if (name == "conservative_lcb") return SafetyMode::ConservativeLcb;
    if (name == "none") return SafetyMode::None;
    throw InvalidInput("unknown safety mode '" + std::string(name) + "'");
}

void SafetyConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw InvalidInput("safety alpha must lie in (0, 1)");
    }
    if (beta_override && !std::isfinite(*beta_override)) {
        throw InvalidInput("safety beta must be finite");
    }
    if (!std::isfinite(threshold)) {
        throw InvalidInput("safety threshold must be finite");
    }
}

double SafetyConfig::resolved_beta() const {
    return beta_override ? *beta_override : confidence_scalar(alpha);
}

double confidence_scalar(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw InvalidInput("confidence_scalar: alpha must lie in (0, 1), got " + std::to_string(alpha));
    }
    const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, 1.0 - alpha);
}

Eigen::VectorXd safety_bounds(const gp::PosteriorMoments& moments, const SafetyConfig& cfg) {
    const double beta = cfg.resolved_beta();
    const double multiplier = cfg.mode == SafetyMode::ConservativeLcb ? -std::abs(beta) : beta;
    return moments.means.array() + multiplier * moments.variances.array().max(0.0).sqrt();
}

SafeSet identify_safe(const gp::PosteriorMoments& moments, const SafetyConfig& cfg) {
    cfg.validate();
    if (moments.means.size() == 0) {
        throw InvalidInput("identify_safe: empty candidate set");
    }
    const Eigen::VectorXd bounds = safety_bounds(moments, cfg);
    SafeSet out;
    for (Eigen::Index i = 0; i < bounds.size(); ++i) {
        if (cfg.mode == SafetyMode::None || bounds(i) >= cfg.threshold) {
            out.indices.push_back(i);
            out.bounds.push_back(bounds(i));
        }
    }
    return out;
}

SafeSet identify_safe(const gp::GpPosterior& post_g, const Eigen::MatrixXd& candidates,
                      const SafetyConfig& cfg) {
    if (candidates.rows() == 0) {
        throw InvalidInput("identify_safe: empty candidate set");
    }
    return identify_safe(post_g.query(candidates), cfg);
}

ViolationMetrics violation_metrics(std::span<const double> g_values, double threshold) {
    ViolationMetrics out;
    if (g_values.empty()) {
        return out;
    }
    std::size_t safe = 0;
    for (double g : g_values) {
        if (g >= threshold) {
            ++safe;
        } else {
            out.cumulative_violation += threshold - g;
        }
    }
    out.safe_ratio = static_cast<double>(safe) / static_cast<double>(g_values.size());
    return out;
}

}  // namespace hdsafebo::safety
