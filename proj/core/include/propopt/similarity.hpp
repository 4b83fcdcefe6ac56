#pragma once

#include <Eigen/Dense>
#include <string>

#include "propopt/functions.hpp"

namespace propopt {

enum class SimilarityKind { threshold, gaussian, precision, custom };

SimilarityKind similarity_kind_from_string(const std::string& s);
std::string similarity_kind_to_string(SimilarityKind k);

/// How point-to-point similarity S is built.
///   threshold: 1{ ||x - x'||^2 <= scale }, boundary inclusive
///   gaussian:  exp(-||x - x'||^2 / (2 scale^2))
///   precision: -(K + ridge I)^{-1} of the gaussian kernel matrix K, diagonal
///              zeroed; entries may be negative
///   custom:    validated pass-through of a user matrix
struct SimilaritySpec {
  SimilarityKind kind = SimilarityKind::gaussian;
  double scale = 1.0;   // kernel length scale
  double ridge = 1e-8;  // stabilizer for the precision kind
  Eigen::MatrixXd custom;

  void validate() const;
};

/// Pointwise kernel value for the threshold and gaussian kinds.
/// Throws ConfigError for other kinds or non-finite inputs.
double kernel_eval(SimilarityKind kind, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& x_prime, double scale);

/// N x N symmetric similarity with zero diagonal.
Eigen::MatrixXd build_similarity(const PointSet& points, const SimilaritySpec& spec);

/// Graph Laplacian L = diag(S 1) - S. Row sums vanish by construction;
/// rejects asymmetric input.
Eigen::MatrixXd build_laplacian(const Eigen::MatrixXd& S);

enum class DimScheme { chain, image_grid, custom };

/// Similarity between *dimensions* (for the smoothness property).
///   chain:      |d - d'| == 1 -> 1, used for generic vector features
///   image_grid: 4-neighbor adjacency on a height x width pixel grid
///   custom:     validated pass-through
struct DimSimilaritySpec {
  DimScheme scheme = DimScheme::chain;
  int height = 0;
  int width = 0;
  Eigen::MatrixXd custom;
};

Eigen::MatrixXd build_dimension_similarity(int dimension, const DimSimilaritySpec& spec);

/// Everything solvers need about the similarity structure of one problem.
struct SimilarityBundle {
  Eigen::MatrixXd S;                // N x N, symmetric, zero diagonal
  Eigen::MatrixXd S_tilde;          // D x D, symmetric, zero diagonal
  Eigen::MatrixXd laplacian;        // diag(S 1) - S
  Eigen::MatrixXd laplacian_tilde;  // diag(S~ 1) - S~
};

SimilarityBundle build_bundle(const PointSet& points, const SimilaritySpec& spec,
                              const DimSimilaritySpec& dim_spec = {});

/// Bundle from explicit matrices (diagonals are zeroed, symmetry enforced).
SimilarityBundle bundle_from_matrices(Eigen::MatrixXd S, Eigen::MatrixXd S_tilde);

/// Dense prior precision over row-major-flattened explanations
/// (index n*D + d):
///   Q = 2 lambda_robust (L (x) I_D) + 2 lambda_smooth (I_N (x) L~)
/// so that vec(W)' Q vec(W) = lambda_robust * pairwise-robustness(W)
///                          + lambda_smooth * smoothness(W).
Eigen::MatrixXd build_joint_precision(const SimilarityBundle& bundle, double lambda_robust,
                                      double lambda_smooth);

/// Header-free numeric CSV -> matrix. Used for custom similarity matrices.
Eigen::MatrixXd load_matrix_csv(const std::string& path);

}  // namespace propopt
