#include "hdsafebo/embedding.hpp"

#include "hdsafebo/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

namespace hdsafebo::embedding {

namespace {

constexpr std::string_view kMagic = "hdsafebo-linear-map";
constexpr std::string_view kVersion = "v1";
constexpr double kLoadTolerance = 1e-6;

void append_double(std::string& out, double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

struct Line {
    std::size_t number = 0;
    std::vector<std::string_view> tokens;
};

std::vector<Line> tokenize(std::string_view text) {
    std::vector<Line> lines;
    std::size_t number = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view raw = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++number;
        if (const auto hash = raw.find('#'); hash != std::string_view::npos) {
            raw = raw.substr(0, hash);
        }
        Line line{number, {}};
        std::size_t pos = 0;
        while (pos < raw.size()) {
            while (pos < raw.size() && std::isspace(static_cast<unsigned char>(raw[pos]))) ++pos;
            const std::size_t start = pos;
            while (pos < raw.size() && !std::isspace(static_cast<unsigned char>(raw[pos]))) ++pos;
            if (pos > start) line.tokens.push_back(raw.substr(start, pos - start));
        }
        if (!line.tokens.empty()) lines.push_back(std::move(line));
    }
    return lines;
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
    throw ParseError("linear map, line " + std::to_string(line) + ": " + what);
}

double parse_double(std::string_view tok, std::size_t line) {
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size() || !std::isfinite(v)) {
        parse_fail(line, "expected a finite decimal number, got '" + std::string(tok) + "'");
    }
    return v;
}

Eigen::Index parse_dim(std::string_view tok, std::size_t line) {
    long long v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size() || v < 1) {
        parse_fail(line, "expected a positive integer, got '" + std::string(tok) + "'");
    }
    return static_cast<Eigen::Index>(v);
}

}  // namespace

std::string_view embedding_kind_name(EmbeddingKind kind) noexcept {
    return kind == EmbeddingKind::Identity ? "identity" : "linear_orthonormal";
}

EmbeddingMap EmbeddingMap::identity(Eigen::Index dim) {
    if (dim < 1) {
        throw InvalidInput("identity map needs a positive dimension");
    }
    EmbeddingMap m;
    m.kind_ = EmbeddingKind::Identity;
    m.source_dim_ = dim;
    m.latent_dim_ = dim;
    return m;
}

EmbeddingMap EmbeddingMap::linear(MatrixXd projection, VectorXd offset, double tolerance) {
    if (projection.rows() < 1 || projection.rows() > projection.cols()) {
        throw InvalidMap("projection must be d x D with 1 <= d <= D");
    }
    if (offset.size() != projection.cols()) {
        throw InvalidMap("offset length must equal the source dimension");
    }
    if (!projection.allFinite() || !offset.allFinite()) {
        throw InvalidMap("map entries must be finite");
    }
    const double err = orthonormality_error(projection);
    if (err > tolerance) {
        throw InvalidMap("projection rows are not orthonormal (max |W W^T - I| = " +
                         std::to_string(err) + ")");
    }
    EmbeddingMap m;
    m.kind_ = EmbeddingKind::LinearOrthonormal;
    m.source_dim_ = projection.cols();
    m.latent_dim_ = projection.rows();
    m.projection_ = std::move(projection);
    m.offset_ = std::move(offset);
    return m;
}

VectorXd EmbeddingMap::encode(const Eigen::Ref<const VectorXd>& x) const {
    if (x.size() != source_dim_) {
        throw InvalidInput("encode: expected dimension " + std::to_string(source_dim_) + ", got " +
                           std::to_string(x.size()));
    }
    if (kind_ == EmbeddingKind::Identity) return x;
    return projection_ * (x - offset_);
}

VectorXd EmbeddingMap::decode(const Eigen::Ref<const VectorXd>& z) const {
    if (z.size() != latent_dim_) {
        throw InvalidInput("decode: expected dimension " + std::to_string(latent_dim_) + ", got " +
                           std::to_string(z.size()));
    }
    if (kind_ == EmbeddingKind::Identity) return z;
    return projection_.transpose() * z + offset_;
}

MatrixXd EmbeddingMap::encode_rows(const MatrixXd& xs) const {
    if (xs.cols() != source_dim_) {
        throw InvalidInput("encode: expected " + std::to_string(source_dim_) + " columns");
    }
    if (kind_ == EmbeddingKind::Identity) return xs;
    return (xs.rowwise() - offset_.transpose()) * projection_.transpose();
}

MatrixXd EmbeddingMap::decode_rows(const MatrixXd& zs) const {
    if (zs.cols() != latent_dim_) {
        throw InvalidInput("decode: expected " + std::to_string(latent_dim_) + " columns");
    }
    if (kind_ == EmbeddingKind::Identity) return zs;
    return (zs * projection_).rowwise() + offset_.transpose();
}

bool EmbeddingMap::operator==(const EmbeddingMap& other) const {
    if (kind_ != other.kind_ || source_dim_ != other.source_dim_ || latent_dim_ != other.latent_dim_) {
        return false;
    }
    if (kind_ == EmbeddingKind::Identity) return true;
    return projection_.cwiseEqual(other.projection_).all() && offset_.cwiseEqual(other.offset_).all();
}

double orthonormality_error(const MatrixXd& projection) {
    const MatrixXd gram = projection * projection.transpose();
    return (gram - MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

EmbeddingMap fit_pca(const MatrixXd& data, Eigen::Index latent_dim, bool strict) {
    const Eigen::Index n = data.rows();
    const Eigen::Index dim = data.cols();
    if (latent_dim < 1 || latent_dim > dim || n <= latent_dim) {
        throw InvalidInput("fit_pca requires 1 <= d <= D and N > d");
    }
    if (!data.allFinite()) {
        throw InvalidInput("fit_pca: non-finite data");
    }
    const VectorXd mean = data.colwise().mean();
    const MatrixXd centered = data.rowwise() - mean.transpose();
    Eigen::BDCSVD<MatrixXd> svd(centered, Eigen::ComputeFullV);
    const VectorXd& sv = svd.singularValues();
    const double tol = std::max<double>(n, dim) * std::numeric_limits<double>::epsilon() *
                       (sv.size() > 0 ? sv(0) : 0.0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > tol) ++rank;
    }
    if (rank < latent_dim && strict) {
        throw DegenerateData("fit_pca: data rank " + std::to_string(rank) + " is below latent dim " +
                             std::to_string(latent_dim));
    }
    // Full V is orthonormal, so columns beyond the rank already form an
    // orthonormal complement.
    MatrixXd w = svd.matrixV().leftCols(latent_dim).transpose();
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            if (std::abs(w(r, c)) > 1e-12) {
                if (w(r, c) < 0.0) w.row(r) *= -1.0;
                break;
            }
        }
    }
    EmbeddingMap m = EmbeddingMap::linear(std::move(w), mean, 1e-8);
    m.component_variances_ = VectorXd::Zero(latent_dim);
    for (Eigen::Index i = 0; i < latent_dim && i < sv.size(); ++i) {
        m.component_variances_(i) = sv(i) * sv(i) / static_cast<double>(n - 1);
    }
    m.degenerate_ = rank < latent_dim;
    return m;
}

trust_region::Box latent_bounding_box(const EmbeddingMap& map, const MatrixXd& xs) {
    if (xs.rows() == 0) {
        throw InvalidInput("latent_bounding_box: no points");
    }
    const MatrixXd zs = map.encode_rows(xs);
    trust_region::Box box{zs.colwise().minCoeff().transpose(), zs.colwise().maxCoeff().transpose()};
    for (Eigen::Index i = 0; i < box.dim(); ++i) {
        if (box.upper(i) - box.lower(i) <= 0.0) {
            const double pad = 1e-9 * std::max(1.0, std::abs(box.lower(i)));
            box.lower(i) -= pad;
            box.upper(i) += pad;
        }
    }
    return box;
}

double distance_correlation(const MatrixXd& xs, const MatrixXd& zs) {
    if (xs.rows() != zs.rows()) {
        throw InvalidInput("distance_correlation: point sets differ in size");
    }
    if (xs.rows() < 2) {
        throw InvalidInput("distance_correlation needs at least two points");
    }
    const Eigen::Index s = xs.rows();
    const Eigen::Index pairs = s * (s - 1) / 2;
    VectorXd dx(pairs), dz(pairs);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < s; ++i) {
        for (Eigen::Index j = i + 1; j < s; ++j, ++k) {
            dx(k) = (xs.row(i) - xs.row(j)).norm();
            dz(k) = (zs.row(i) - zs.row(j)).norm();
        }
    }
    const VectorXd cx = dx.array() - dx.mean();
    const VectorXd cz = dz.array() - dz.mean();
    const double denom = std::sqrt(cx.squaredNorm() * cz.squaredNorm());
    if (denom == 0.0) {
        // All pairs equidistant in both spaces: perfectly related iff proportional.
        return (dx - dz).cwiseAbs().maxCoeff() == 0.0 ? 1.0 : 0.0;
    }
    return std::clamp(cx.dot(cz) / denom, -1.0, 1.0);
}

IsometryReport isometry_report(const MatrixXd& xs, const MatrixXd& zs, const gp::KernelSpec& kernel,
                               const gp::GpDataset& probe_x, const MatrixXd& probe_z) {
    IsometryReport report;
    report.distance_correlation = distance_correlation(xs, zs);
    report.sample_count = static_cast<std::size_t>(xs.rows());
    if (probe_z.rows() != probe_x.size()) {
        throw InvalidInput("isometry_report: probe data differs in size between spaces");
    }
    const gp::GpPosterior post_x = gp::fit_posterior(probe_x, kernel);
    const gp::GpPosterior post_z =
        gp::fit_posterior(gp::GpDataset{probe_z, probe_x.targets, probe_x.noise_variance}, kernel);
    const gp::PosteriorMoments mx = post_x.query(xs);
    const gp::PosteriorMoments mz = post_z.query(zs);
    report.mean_gp_mean_gap = (mx.means - mz.means).cwiseAbs().mean();
    report.mean_gp_var_gap = (mx.variances - mz.variances).cwiseAbs().mean();
    return report;
}

IsometryReport isometry_diagnostics(const EmbeddingMap& map, const MatrixXd& points,
                                    const gp::KernelSpec& kernel, const gp::GpDataset& probe_data) {
    if (points.rows() < 2) {
        throw InvalidInput("isometry_diagnostics needs at least two points");
    }
    return isometry_report(points, map.encode_rows(points), kernel, probe_data,
                           map.encode_rows(probe_data.inputs));
}

std::string format_map(const EmbeddingMap& map) {
    std::string out;
    out += kMagic;
    out += ' ';
    out += kVersion;
    out += "\nkind ";
    out += embedding_kind_name(map.kind());
    out += "\nsource_dim " + std::to_string(map.source_dim());
    out += "\nlatent_dim " + std::to_string(map.latent_dim()) + "\n";
    if (map.kind() == EmbeddingKind::LinearOrthonormal) {
        out += "matrix\n";
        for (Eigen::Index r = 0; r < map.projection().rows(); ++r) {
            for (Eigen::Index c = 0; c < map.projection().cols(); ++c) {
                if (c > 0) out += ' ';
                append_double(out, map.projection()(r, c));
            }
            out += '\n';
        }
        out += "offset\n";
        for (Eigen::Index c = 0; c < map.offset().size(); ++c) {
            if (c > 0) out += ' ';
            append_double(out, map.offset()(c));
        }
        out += '\n';
    }
    out += "end\n";
    return out;
}

EmbeddingMap parse_map(std::string_view text) {
    const std::vector<Line> lines = tokenize(text);
    std::size_t i = 0;
    const auto expect_key = [&](std::string_view key, std::size_t arity) -> const Line& {
        if (i >= lines.size()) {
            parse_fail(lines.empty() ? 1 : lines.back().number + 1, "missing '" + std::string(key) + "'");
        }
        const Line& l = lines[i++];
        if (l.tokens[0] != key || l.tokens.size() != arity + 1) {
            parse_fail(l.number, "expected '" + std::string(key) + "' with " + std::to_string(arity) +
                                     " value(s)");
        }
        return l;
    };

    const Line& header = expect_key(kMagic, 1);
    if (header.tokens[1] != kVersion) {
        parse_fail(header.number, "unsupported version '" + std::string(header.tokens[1]) + "'");
    }
    const Line& kind_line = expect_key("kind", 1);
    const Line& src_line = expect_key("source_dim", 1);
    const Line& lat_line = expect_key("latent_dim", 1);
    const Eigen::Index source_dim = parse_dim(src_line.tokens[1], src_line.number);
    const Eigen::Index latent_dim = parse_dim(lat_line.tokens[1], lat_line.number);

    EmbeddingMap map;
    if (kind_line.tokens[1] == "identity") {
        if (source_dim != latent_dim) {
            parse_fail(lat_line.number, "identity map requires latent_dim == source_dim");
        }
        map = EmbeddingMap::identity(source_dim);
    } else if (kind_line.tokens[1] == "linear_orthonormal") {
        if (latent_dim > source_dim) {
            parse_fail(lat_line.number, "latent_dim exceeds source_dim");
        }
        expect_key("matrix", 0);
        MatrixXd w(latent_dim, source_dim);
        for (Eigen::Index r = 0; r < latent_dim; ++r) {
            if (i >= lines.size()) parse_fail(lines.back().number + 1, "truncated matrix");
            const Line& l = lines[i++];
            if (static_cast<Eigen::Index>(l.tokens.size()) != source_dim) {
                parse_fail(l.number, "matrix row needs " + std::to_string(source_dim) + " entries");
            }
            for (Eigen::Index c = 0; c < source_dim; ++c) {
                w(r, c) = parse_double(l.tokens[static_cast<std::size_t>(c)], l.number);
            }
        }
        expect_key("offset", 0);
        if (i >= lines.size()) parse_fail(lines.back().number + 1, "missing offset values");
        const Line& ol = lines[i++];
        if (static_cast<Eigen::Index>(ol.tokens.size()) != source_dim) {
            parse_fail(ol.number, "offset needs " + std::to_string(source_dim) + " entries");
        }
        VectorXd offset(source_dim);
        for (Eigen::Index c = 0; c < source_dim; ++c) {
            offset(c) = parse_double(ol.tokens[static_cast<std::size_t>(c)], ol.number);
        }
        map = EmbeddingMap::linear(std::move(w), std::move(offset), kLoadTolerance);
    } else {
        parse_fail(kind_line.number, "unknown kind '" + std::string(kind_line.tokens[1]) + "'");
    }
    expect_key("end", 0);
    if (i != lines.size()) {
        parse_fail(lines[i].number, "unexpected content after 'end'");
    }
    return map;
}

void save_map(const EmbeddingMap& map, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw InvalidInput("cannot open '" + path.string() + "' for writing");
    }
    out << format_map(map);
    if (!out.flush()) {
        throw InvalidInput("failed writing '" + path.string() + "'");
    }
}

EmbeddingMap load_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open linear map file '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_map(ss.str());
}

}  // namespace hdsafebo::embedding
