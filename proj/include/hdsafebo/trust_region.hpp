#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace hdsafebo::trust_region {

/// Axis-aligned box; lower(i) <= upper(i).
struct Box {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    Eigen::Index dim() const { return lower.size(); }
    Eigen::VectorXd width() const { return upper - lower; }
    bool contains(const Eigen::Ref<const Eigen::VectorXd>& z, double tol = 0.0) const;
    void validate() const;
};

/// Lengths are fractions of the latent domain width; the box around the
/// incumbent has half-width 0.5 * length * width along each axis.
struct TrustRegionConfig {
    int success_tolerance = 3;
    int failure_tolerance = 3;
    double initial_length = 0.8;
    double max_length = 1.6;
    double min_length = 0.5 / 128.0;

    void validate() const;
};

struct TrustRegionState {
    double length = 0.8;
    int success_count = 0;
    int failure_count = 0;
    Eigen::VectorXd incumbent_point;
    double incumbent_value = 0.0;
    TrustRegionConfig config;
};

/// Objective and safety observations for one proposal batch.
struct BatchOutcome {
    std::vector<double> y_f;
    std::vector<double> y_g;

    std::size_t size() const { return y_f.size(); }
    void validate() const;
};

/// [center - half_width, center + half_width] intersected with the domain.
Box make_local_region(const Eigen::VectorXd& center, double half_width, const Box& domain);
Box make_local_region(const Eigen::VectorXd& center, const Eigen::VectorXd& half_widths,
                      const Box& domain);

/// One SafeUpdate step for a whole batch: success iff some sample has
/// y_g > threshold and y_f > incumbent (the best such sample becomes incumbent).
TrustRegionState safe_update(const TrustRegionState& state, const BatchOutcome& batch,
                             const Eigen::MatrixXd& batch_points, double threshold = 0.0);

struct Incumbent {
    Eigen::Index index = -1;
    Eigen::VectorXd point;
    double value = 0.0;
};

/// Best y_f among rows with y_g > threshold; throws SeedUnsafe if none.
Incumbent initial_incumbent(const Eigen::MatrixXd& points, std::span<const double> y_f,
                            std::span<const double> y_g, double threshold = 0.0);

}  // namespace hdsafebo::trust_region
