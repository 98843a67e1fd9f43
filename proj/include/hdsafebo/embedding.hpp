#pragma once

#include "hdsafebo/gp.hpp"
#include "hdsafebo/trust_region.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace hdsafebo::embedding {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class EmbeddingKind { Identity, LinearOrthonormal };

std::string_view embedding_kind_name(EmbeddingKind kind) noexcept;

// z = W (x - m), x = W^T z + m. W has orthonormal rows, so the map is an
// isometry on the affine span m + rowspace(W).
class EmbeddingMap {
public:
    static EmbeddingMap identity(Eigen::Index dim);
    /// Validates W W^T = I within `tolerance` (throws InvalidMap otherwise).
    static EmbeddingMap linear(MatrixXd projection, VectorXd offset, double tolerance = 1e-10);

    EmbeddingKind kind() const { return kind_; }
    Eigen::Index source_dim() const { return source_dim_; }
    Eigen::Index latent_dim() const { return latent_dim_; }
    const MatrixXd& projection() const { return projection_; }
    const VectorXd& offset() const { return offset_; }

    /// Variance of the training data along each latent axis (PCA fits only).
    const VectorXd& component_variances() const { return component_variances_; }
    /// Set when the data had rank below the latent dimension and the map was
    /// padded with an arbitrary orthonormal complement.
    bool degenerate() const { return degenerate_; }

    VectorXd encode(const Eigen::Ref<const VectorXd>& x) const;
    VectorXd decode(const Eigen::Ref<const VectorXd>& z) const;
    /// Row-wise versions: N x D -> N x d and back.
    MatrixXd encode_rows(const MatrixXd& xs) const;
    MatrixXd decode_rows(const MatrixXd& zs) const;

    /// Compares the map itself (kind, dimensions, W, m), not fit metadata.
    bool operator==(const EmbeddingMap& other) const;

private:
    friend EmbeddingMap fit_pca(const MatrixXd& data, Eigen::Index latent_dim, bool strict);

    EmbeddingKind kind_ = EmbeddingKind::Identity;
    Eigen::Index source_dim_ = 0;
    Eigen::Index latent_dim_ = 0;
    MatrixXd projection_;
    VectorXd offset_;
    VectorXd component_variances_;
    bool degenerate_ = false;
};

/// Top-`latent_dim` principal directions of the rows of `data`, first nonzero
/// entry of each direction made positive. With `strict`, rank < latent_dim
/// throws DegenerateData instead of returning a padded, flagged map.
EmbeddingMap fit_pca(const MatrixXd& data, Eigen::Index latent_dim, bool strict = false);

/// Largest |W W^T - I| entry.
double orthonormality_error(const MatrixXd& projection);

/// Axis-aligned bounding box of the encoded rows; zero-width axes are padded
/// by a tiny margin so local regions stay non-degenerate.
trust_region::Box latent_bounding_box(const EmbeddingMap& map, const MatrixXd& xs);

struct IsometryReport {
    double distance_correlation = 1.0;
    double mean_gp_mean_gap = 0.0;
    double mean_gp_var_gap = 0.0;
    std::size_t sample_count = 0;
};

/// Pearson correlation between all pairwise distances of the rows of `xs` and
/// of `zs` (same row order in both spaces).
double distance_correlation(const MatrixXd& xs, const MatrixXd& zs);

/// Grades an arbitrary (x, z) correspondence. The GP gaps compare posteriors
/// fitted on (probe_x, y) and (probe_z, y) with the same kernel, queried at
/// the paired points.
IsometryReport isometry_report(const MatrixXd& xs, const MatrixXd& zs, const gp::KernelSpec& kernel,
                               const gp::GpDataset& probe_x, const MatrixXd& probe_z);

IsometryReport isometry_diagnostics(const EmbeddingMap& map, const MatrixXd& points,
                                    const gp::KernelSpec& kernel, const gp::GpDataset& probe_data);

/// Text format documented in docs/linear_map_format.md.
std::string format_map(const EmbeddingMap& map);
EmbeddingMap parse_map(std::string_view text);
void save_map(const EmbeddingMap& map, const std::filesystem::path& path);
EmbeddingMap load_map(const std::filesystem::path& path);

}  // namespace hdsafebo::embedding
