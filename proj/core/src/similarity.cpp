#include "propopt/similarity.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <fstream>
#include <sstream>

namespace propopt {

SimilarityKind similarity_kind_from_string(const std::string& s) {
  if (s == "threshold") return SimilarityKind::threshold;
  if (s == "gaussian") return SimilarityKind::gaussian;
  if (s == "precision") return SimilarityKind::precision;
  if (s == "custom") return SimilarityKind::custom;
  throw ConfigError("unknown similarity kind '" + s + "'");
}

std::string similarity_kind_to_string(SimilarityKind k) {
  switch (k) {
    case SimilarityKind::threshold: return "threshold";
    case SimilarityKind::gaussian: return "gaussian";
    case SimilarityKind::precision: return "precision";
    case SimilarityKind::custom: return "custom";
  }
  throw ConfigError("invalid similarity kind enum value");
}

void SimilaritySpec::validate() const {
  if (kind == SimilarityKind::custom) {
    if (custom.size() == 0) throw ConfigError("custom similarity requires a matrix");
    return;
  }
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw ConfigError("similarity scale must be positive and finite");
  if (kind == SimilarityKind::precision && (!(ridge >= 0.0) || !std::isfinite(ridge)))
    throw ConfigError("precision ridge must be >= 0 and finite");
}

double kernel_eval(SimilarityKind kind, const Eigen::VectorXd& x, const Eigen::VectorXd& x_prime,
                   double scale) {
  if (x.size() != x_prime.size()) throw ConfigError("kernel_eval inputs must share a dimension");
  if (!x.allFinite() || !x_prime.allFinite())
    throw ConfigError("kernel_eval inputs must be finite");
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw ConfigError("kernel scale must be positive and finite");
  const double d2 = (x - x_prime).squaredNorm();
  switch (kind) {
    case SimilarityKind::threshold:
      return d2 <= scale ? 1.0 : 0.0;  // boundary inclusive
    case SimilarityKind::gaussian:
      return std::exp(-d2 / (2.0 * scale * scale));
    default:
      throw ConfigError("kernel_eval applies to threshold and gaussian kinds only");
  }
}

namespace {

void require_symmetric(const Eigen::MatrixXd& M, const char* what) {
  if (M.rows() != M.cols()) throw ConfigError(std::string(what) + " must be square");
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = i + 1; j < M.cols(); ++j)
      if (M(i, j) != M(j, i))
        throw ConfigError(std::string(what) + " must be symmetric");
  if (!M.allFinite()) throw ConfigError(std::string(what) + " must be finite");
}

Eigen::MatrixXd zero_diagonal(Eigen::MatrixXd M) {
  M.diagonal().setZero();
  return M;
}

Eigen::MatrixXd gaussian_kernel_matrix(const PointSet& points, double scale) {
  const int n = points.size();
  Eigen::MatrixXd k(n, n);
  for (int i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      const double v = std::exp(-(points.points().row(i) - points.points().row(j)).squaredNorm() /
                                (2.0 * scale * scale));
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

}  // namespace

Eigen::MatrixXd build_similarity(const PointSet& points, const SimilaritySpec& spec) {
  spec.validate();
  const int n = points.size();
  switch (spec.kind) {
    case SimilarityKind::threshold:
    case SimilarityKind::gaussian: {
      Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          const double v = kernel_eval(spec.kind, points.point(i), points.point(j), spec.scale);
          S(i, j) = v;
          S(j, i) = v;
        }
      }
      return S;
    }
    case SimilarityKind::precision: {
      Eigen::MatrixXd k = gaussian_kernel_matrix(points, spec.scale);
      k.diagonal().array() += spec.ridge;
      Eigen::LLT<Eigen::MatrixXd> llt(k);
      if (llt.info() != Eigen::Success)
        throw FactorizationError(
            "kernel matrix is not positive definite; increase the ridge epsilon");
      Eigen::MatrixXd S = -llt.solve(Eigen::MatrixXd::Identity(n, n));
      S = 0.5 * (S + S.transpose()).eval();  // enforce exact symmetry
      return zero_diagonal(std::move(S));
    }
    case SimilarityKind::custom: {
      require_symmetric(spec.custom, "custom similarity");
      if (spec.custom.rows() != n)
        throw ConfigError("custom similarity size must match the point count");
      return zero_diagonal(spec.custom);
    }
  }
  throw ConfigError("invalid similarity kind enum value");
}

Eigen::MatrixXd build_laplacian(const Eigen::MatrixXd& S) {
  require_symmetric(S, "similarity matrix");
  const Eigen::Index n = S.rows();
  Eigen::MatrixXd L = -S;
  for (Eigen::Index i = 0; i < n; ++i) {
    // Diagonal set so the row sums vanish by construction; summed in the
    // same left-to-right order a matrix-vector product uses.
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) acc += S(i, j);
    L(i, i) = acc;
  }
  return L;
}

Eigen::MatrixXd build_dimension_similarity(int dimension, const DimSimilaritySpec& spec) {
  if (dimension < 1) throw ConfigError("dimension must be >= 1");
  switch (spec.scheme) {
    case DimScheme::chain: {
      Eigen::MatrixXd S = Eigen::MatrixXd::Zero(dimension, dimension);
      for (int d = 0; d + 1 < dimension; ++d) {
        S(d, d + 1) = 1.0;
        S(d + 1, d) = 1.0;
      }
      return S;
    }
    case DimScheme::image_grid: {
      if (spec.height < 1 || spec.width < 1)
        throw ConfigError("image grid requires positive height and width");
      if (spec.height * spec.width != dimension)
        throw ConfigError("image grid height*width must equal the dimension");
      Eigen::MatrixXd S = Eigen::MatrixXd::Zero(dimension, dimension);
      auto at = [&](int r, int c) { return r * spec.width + c; };
      for (int r = 0; r < spec.height; ++r) {
        for (int c = 0; c < spec.width; ++c) {
          if (c + 1 < spec.width) {
            S(at(r, c), at(r, c + 1)) = 1.0;
            S(at(r, c + 1), at(r, c)) = 1.0;
          }
          if (r + 1 < spec.height) {
            S(at(r, c), at(r + 1, c)) = 1.0;
            S(at(r + 1, c), at(r, c)) = 1.0;
          }
        }
      }
      return S;
    }
    case DimScheme::custom: {
      require_symmetric(spec.custom, "custom dimension similarity");
      if (spec.custom.rows() != dimension)
        throw ConfigError("custom dimension similarity size must match the dimension");
      Eigen::MatrixXd S = spec.custom;
      S.diagonal().setZero();
      return S;
    }
  }
  throw ConfigError("invalid dimension similarity scheme");
}

SimilarityBundle build_bundle(const PointSet& points, const SimilaritySpec& spec,
                              const DimSimilaritySpec& dim_spec) {
  SimilarityBundle bundle;
  bundle.S = build_similarity(points, spec);
  bundle.S_tilde = build_dimension_similarity(points.dimension(), dim_spec);
  bundle.laplacian = build_laplacian(bundle.S);
  bundle.laplacian_tilde = build_laplacian(bundle.S_tilde);
  return bundle;
}

SimilarityBundle bundle_from_matrices(Eigen::MatrixXd S, Eigen::MatrixXd S_tilde) {
  require_symmetric(S, "similarity matrix");
  require_symmetric(S_tilde, "dimension similarity matrix");
  SimilarityBundle bundle;
  bundle.S = zero_diagonal(std::move(S));
  bundle.S_tilde = zero_diagonal(std::move(S_tilde));
  bundle.laplacian = build_laplacian(bundle.S);
  bundle.laplacian_tilde = build_laplacian(bundle.S_tilde);
  return bundle;
}

Eigen::MatrixXd build_joint_precision(const SimilarityBundle& bundle, double lambda_robust,
                                      double lambda_smooth) {
  if (lambda_robust < 0.0 || lambda_smooth < 0.0)
    throw ConfigError("joint precision weights must be >= 0");
  const Eigen::Index n = bundle.laplacian.rows();
  const Eigen::Index d = bundle.laplacian_tilde.rows();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n * d, n * d);
  // Row-major flattening: entry (n, d) of W sits at index n*D + d.
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (bundle.laplacian(i, j) != 0.0)
        for (Eigen::Index k = 0; k < d; ++k)
          Q(i * d + k, j * d + k) += 2.0 * lambda_robust * bundle.laplacian(i, j);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < d; ++k)
      for (Eigen::Index m = 0; m < d; ++m)
        if (bundle.laplacian_tilde(k, m) != 0.0)
          Q(i * d + k, i * d + m) += 2.0 * lambda_smooth * bundle.laplacian_tilde(k, m);
  return Q;
}

Eigen::MatrixXd load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open matrix CSV '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t pos = 0;
        const double v = std::stod(cell, &pos);
        row.push_back(v);
      } catch (const std::exception&) {
        throw ConfigError("non-numeric cell '" + cell + "' in matrix CSV '" + path + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ConfigError("ragged rows in matrix CSV '" + path + "'");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("matrix CSV '" + path + "' is empty");
  Eigen::MatrixXd M(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j)
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return M;
}

}  // namespace propopt
