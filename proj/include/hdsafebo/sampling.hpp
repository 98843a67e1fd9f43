#pragma once

#include "hdsafebo/trust_region.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <random>

namespace hdsafebo::sampling {

/// splitmix64 finaliser; used to derive independent stream seeds.
std::uint64_t mix(std::uint64_t x) noexcept;

/// Seed for a named sub-stream, e.g. derive_seed(run_seed, {iteration, kCandidates}).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) noexcept;

/// `count` points of a digitally shifted Sobol sequence mapped into `box`.
Eigen::MatrixXd sobol_points(const trust_region::Box& box, Eigen::Index count, std::uint64_t seed);

/// Uniform i.i.d. points in `box`.
Eigen::MatrixXd uniform_points(const trust_region::Box& box, Eigen::Index count, std::mt19937_64& rng);

}  // namespace hdsafebo::sampling
