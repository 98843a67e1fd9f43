#include "hdsafebo/sampling.hpp"

#include "hdsafebo/errors.hpp"

#include <boost/random/sobol.hpp>

#include <vector>

namespace hdsafebo::sampling {

std::uint64_t mix(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t s = mix(base);
    for (std::uint64_t p : path) {
        s = mix(s ^ mix(p));
    }
    return s;
}

Eigen::MatrixXd sobol_points(const trust_region::Box& box, Eigen::Index count, std::uint64_t seed) {
    box.validate();
    const Eigen::Index dim = box.dim();
    if (dim > static_cast<Eigen::Index>(boost::random::detail::qrng_tables::sobol::max_dimension)) {
        throw InvalidInput("sobol_points: dimension exceeds the direction-number table");
    }
    boost::random::sobol engine(static_cast<std::size_t>(dim));
    // Skip the origin.
    engine.discard(static_cast<std::uintmax_t>(dim));

    std::mt19937_64 rng(seed);
    std::vector<std::uint64_t> shift(static_cast<std::size_t>(dim));
    for (auto& s : shift) s = rng();

    constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
    const Eigen::VectorXd width = box.width();
    Eigen::MatrixXd out(count, dim);
    for (Eigen::Index i = 0; i < count; ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) {
            const std::uint64_t v = static_cast<std::uint64_t>(engine()) ^ shift[static_cast<std::size_t>(j)];
            const double u = static_cast<double>(v >> 11) * kScale;
            out(i, j) = box.lower(j) + u * width(j);
        }
    }
    return out;
}

Eigen::MatrixXd uniform_points(const trust_region::Box& box, Eigen::Index count, std::mt19937_64& rng) {
    box.validate();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd out(count, box.dim());
    for (Eigen::Index i = 0; i < count; ++i) {
        for (Eigen::Index j = 0; j < box.dim(); ++j) {
            out(i, j) = box.lower(j) + unit(rng) * (box.upper(j) - box.lower(j));
        }
    }
    return out;
}

}  // namespace hdsafebo::sampling
