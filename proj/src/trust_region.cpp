#include "hdsafebo/trust_region.hpp"

#include "hdsafebo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hdsafebo::trust_region {

bool Box::contains(const Eigen::Ref<const Eigen::VectorXd>& z, double tol) const {
    if (z.size() != dim()) {
        return false;
    }
    return ((z.array() >= lower.array() - tol) && (z.array() <= upper.array() + tol)).all();
}

void Box::validate() const {
    if (lower.size() != upper.size() || lower.size() == 0) {
        throw InvalidInput("box bounds must be non-empty and of equal dimension");
    }
    if (!lower.allFinite() || !upper.allFinite() || (lower.array() > upper.array()).any()) {
        throw InvalidInput("box requires finite bounds with lower <= upper");
    }
}

void TrustRegionConfig::validate() const {
    if (success_tolerance < 1 || failure_tolerance < 1) {
        throw InvalidInput("trust region tolerances must be positive");
    }
    if (!(min_length > 0.0) || !(min_length <= initial_length) || !(initial_length <= max_length) ||
        !std::isfinite(max_length)) {
        throw InvalidInput("trust region lengths must satisfy 0 < l_min <= l_0 <= l_max");
    }
}

void BatchOutcome::validate() const {
    if (y_f.empty() || y_f.size() != y_g.size()) {
        throw InvalidInput("batch outcome must be non-empty with matching y_f / y_g sizes");
    }
}

Box make_local_region(const Eigen::VectorXd& center, const Eigen::VectorXd& half_widths,
                      const Box& domain) {
    domain.validate();
    if (center.size() != domain.dim() || half_widths.size() != domain.dim()) {
        throw InvalidInput("make_local_region: dimension mismatch");
    }
    if ((half_widths.array() <= 0.0).any()) {
        throw InvalidInput("make_local_region: length must be positive");
    }
    if (!domain.contains(center, 1e-12)) {
        throw InvalidInput("make_local_region: center lies outside the domain");
    }
    Box out;
    out.lower = (center - half_widths).cwiseMax(domain.lower);
    out.upper = (center + half_widths).cwiseMin(domain.upper);
    return out;
}

Box make_local_region(const Eigen::VectorXd& center, double half_width, const Box& domain) {
    return make_local_region(center, Eigen::VectorXd::Constant(center.size(), half_width), domain);
}

TrustRegionState safe_update(const TrustRegionState& state, const BatchOutcome& batch,
                             const Eigen::MatrixXd& batch_points, double threshold) {
    batch.validate();
    if (static_cast<std::size_t>(batch_points.rows()) != batch.size()) {
        throw InvalidInput("safe_update: batch points and outcomes differ in length");
    }
    TrustRegionState next = state;
    const TrustRegionConfig& cfg = state.config;

    Eigen::Index best = -1;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch.y_g[i] > threshold && batch.y_f[i] > next.incumbent_value) {
            next.incumbent_value = batch.y_f[i];
            best = static_cast<Eigen::Index>(i);
        }
    }
    if (best >= 0) {
        next.incumbent_point = batch_points.row(best).transpose();
        next.success_count += 1;
        next.failure_count = 0;
    } else {
        next.success_count = 0;
        next.failure_count += 1;
    }

    if (next.success_count == cfg.success_tolerance) {
        next.length = std::min(2.0 * state.length, cfg.max_length);
        next.success_count = 0;
        next.failure_count = 0;
    } else if (next.failure_count == cfg.failure_tolerance) {
        next.length = std::max(0.5 * state.length, cfg.min_length);
        next.success_count = 0;
        next.failure_count = 0;
        if (next.length == cfg.min_length) {
            next.length = cfg.initial_length;
        }
    }
    return next;
}

Incumbent initial_incumbent(const Eigen::MatrixXd& points, std::span<const double> y_f,
                            std::span<const double> y_g, double threshold) {
    if (points.rows() == 0 || y_f.size() != static_cast<std::size_t>(points.rows()) ||
        y_g.size() != y_f.size()) {
        throw InvalidInput("initial_incumbent: dataset must be non-empty and aligned");
    }
    Incumbent out;
    for (std::size_t i = 0; i < y_f.size(); ++i) {
        if (y_g[i] > threshold && (out.index < 0 || y_f[i] > out.value)) {
            out.index = static_cast<Eigen::Index>(i);
            out.value = y_f[i];
        }
    }
    if (out.index < 0) {
        throw SeedUnsafe("no initial observation satisfies y_g > " + std::to_string(threshold));
    }
    out.point = points.row(out.index).transpose();
    return out;
}

}  // namespace hdsafebo::trust_region
