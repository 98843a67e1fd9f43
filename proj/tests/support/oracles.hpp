#pragma once

// Reference implementations used by the unit and acceptance tests. Written
// from the mathematical definitions, sharing no code with the library.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double matern52(double r) {
    const double s = std::sqrt(5.0) * r;
    return (1.0 + s + 5.0 * r * r / 3.0) * std::exp(-s);
}

inline double squared_exponential(double r) { return std::exp(-0.5 * r * r); }

// k(a, b) = scale * rho(|a - b| / lengthscale), evaluated with explicit loops.
inline MatrixXd gram(const MatrixXd& a, const MatrixXd& b, bool matern, double lengthscale, double scale) {
    MatrixXd k(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            double sq = 0.0;
            for (Eigen::Index c = 0; c < a.cols(); ++c) sq += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
            const double r = std::sqrt(sq) / lengthscale;
            k(i, j) = scale * (matern ? matern52(r) : squared_exponential(r));
        }
    }
    return k;
}

struct DenseMoments {
    VectorXd mean;
    VectorXd var;
    MatrixXd cov;
};

// Posterior via an explicit inverse of K + diag_add * I:
//   mean = K*^T A^-1 y,  cov = K** - K*^T A^-1 K*.
inline DenseMoments dense_posterior(const MatrixXd& x, const VectorXd& y, const MatrixXd& q, bool matern,
                                    double lengthscale, double scale, double diag_add) {
    MatrixXd a = gram(x, x, matern, lengthscale, scale);
    a.diagonal().array() += diag_add;
    const MatrixXd inv = a.fullPivLu().inverse();
    const MatrixXd ks = gram(x, q, matern, lengthscale, scale);
    DenseMoments out;
    out.mean = ks.transpose() * (inv * y);
    out.cov = gram(q, q, matern, lengthscale, scale) - ks.transpose() * inv * ks;
    out.var = out.cov.diagonal();
    return out;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Phi^{-1}(p) by bisection on the erfc-based CDF.
inline double normal_quantile(double p) {
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (normal_cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Pearson correlation of all pairwise distances, double loops throughout.
inline double distance_correlation(const MatrixXd& xs, const MatrixXd& zs) {
    std::vector<double> dx, dz;
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < xs.rows(); ++j) {
            double sx = 0.0, sz = 0.0;
            for (Eigen::Index c = 0; c < xs.cols(); ++c) sx += (xs(i, c) - xs(j, c)) * (xs(i, c) - xs(j, c));
            for (Eigen::Index c = 0; c < zs.cols(); ++c) sz += (zs(i, c) - zs(j, c)) * (zs(i, c) - zs(j, c));
            dx.push_back(std::sqrt(sx));
            dz.push_back(std::sqrt(sz));
        }
    }
    const double n = static_cast<double>(dx.size());
    double mx = 0.0, mz = 0.0;
    for (std::size_t k = 0; k < dx.size(); ++k) mx += dx[k], mz += dz[k];
    mx /= n;
    mz /= n;
    double sxz = 0.0, sxx = 0.0, szz = 0.0;
    for (std::size_t k = 0; k < dx.size(); ++k) {
        sxz += (dx[k] - mx) * (dz[k] - mz);
        sxx += (dx[k] - mx) * (dx[k] - mx);
        szz += (dz[k] - mz) * (dz[k] - mz);
    }
    return sxz / std::sqrt(sxx * szz);
}

// Principal subspace projector P = W^T W from the covariance eigendecomposition.
inline MatrixXd pca_projector(const MatrixXd& data, int latent_dim) {
    const MatrixXd centred = data.rowwise() - data.colwise().mean();
    const MatrixXd cov = centred.transpose() * centred / static_cast<double>(data.rows());
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
    const MatrixXd top = eig.eigenvectors().rightCols(latent_dim);
    return top * top.transpose();
}

// One-sided sign test P(X >= wins), X ~ Binomial(wins + losses, 1/2), by direct summation.
inline double sign_test(int wins, int losses) {
    const int n = wins + losses;
    double p = 0.0;
    for (int k = wins; k <= n; ++k) {
        double c = 1.0;
        for (int i = 0; i < k; ++i) c = c * (n - i) / (i + 1);
        p += c * std::pow(0.5, n);
    }
    return p;
}

// Algorithm-2 transition, written as the branch table of the update rule.
struct TrState {
    double length;
    int cs;
    int cf;
    bool operator==(const TrState&) const = default;
};

struct TrConfig {
    int tau_s, tau_f;
    double l0, lmin, lmax;
};

inline TrState tr_step(const TrState& s, bool success, const TrConfig& c) {
    TrState n = s;
    if (success) {
        n.cs = s.cs + 1;
        n.cf = 0;
    } else {
        n.cs = 0;
        n.cf = s.cf + 1;
    }
    if (n.cs == c.tau_s) {
        n.length = 2.0 * s.length > c.lmax ? c.lmax : 2.0 * s.length;
        n.cs = n.cf = 0;
    } else if (n.cf == c.tau_f) {
        const double half = 0.5 * s.length;
        n.length = half < c.lmin ? c.lmin : half;
        n.cs = n.cf = 0;
        if (n.length == c.lmin) n.length = c.l0;
    }
    return n;
}

// Random orthonormal d x D rows.
inline MatrixXd random_orthonormal_rows(int d, int ambient, std::mt19937_64& rng) {
    std::normal_distribution<double> n01;
    MatrixXd g(ambient, d);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n01(rng);
    Eigen::HouseholderQR<MatrixXd> qr(g);
    const MatrixXd q = qr.householderQ() * MatrixXd::Identity(ambient, d);
    return q.transpose();
}

inline MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double lo = 0.0,
                              double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

}  // namespace oracle
