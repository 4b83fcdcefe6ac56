#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "propopt/losses.hpp"

namespace propopt {

struct SolveOptions {
  double tol = 1e-8;       // convergence / residual tolerance
  int max_iters = 200000;  // iteration cap for the iterative paths
  /// Iterative solvers start from the closed-form quadratic solution when
  /// possible; disable to start from the raw gradients instead.
  bool warm_start = true;
  /// Stall tolerance for the max-difference subgradient solver, which cannot
  /// certify gaps as tight as the smooth solvers: it stops when a
  /// 500-iteration window improves the best objective by less than
  /// stall_tol * (1 + |best|).
  double stall_tol = 1e-6;
};

/// One explanation problem over a fixed point set: match the gradients G
/// while trading off the similarity-coupled properties.
struct TransductiveProblem {
  PointSet points;
  Eigen::MatrixXd gradients;  // N x D target attributions
  SimilarityBundle bundle;
  PropertyWeights weights;
  SolveOptions options;
};

/// The lambda-weighted objective the transductive solvers minimize
/// (gradient-match faithfulness plus the configured robustness form plus
/// smoothness plus complexity).
double transductive_objective(const TransductiveProblem& problem, const ExplanationMatrix& W);

/// Exact minimizer of
///   lf ||W - G||_F^2 + lr * pairwise-robustness + ls * smoothness
/// via the stationarity system
///   (lf I + 2 lr L) W + 2 ls W L~ = lf G,
/// solved by eigendecomposing L~ and factorizing one shifted N x N matrix per
/// distinct eigenvalue. Requires lambda_faithful > 0, pairwise robustness,
/// gradient-match faithfulness, lambda_complex == 0.
/// Throws ConvexityError when the system matrix is not positive definite.
ExplanationMatrix solve_quadratic(const TransductiveProblem& problem);

/// Adds lambda_complex * ||W||_1 on top of the quadratic objective and
/// minimizes it with a monotone accelerated proximal-gradient iteration
/// (soft-threshold prox, step 1/L from power iteration, restart on objective
/// violation). lambda_complex == 0 degenerates to the smooth problem.
/// Throws IterationLimitError if max_iters is hit before the successive
/// iterates differ by <= tol.
ExplanationMatrix solve_l1(const TransductiveProblem& problem);

/// Minimizes lf ||W - G||_F^2 + lr * max over masked pairs ||w_n - w_n'||^2
/// by subgradient descent with diminishing target-level steps
///   step_k = (J_k - J_best + gamma_k) / ||g_k||^2,
///   gamma_k = 0.05 (1 + J_0) / (k+1)^{3/4},
/// and best-iterate tracking; the masked max uses
/// mask_from_similarity(bundle.S). Convergence is declared on a progress
/// stall (see SolveOptions::stall_tol); hitting max_iters while still
/// improving raises IterationLimitError. Requires max-difference robustness,
/// lambda_smooth == lambda_complex == 0.
ExplanationMatrix solve_maxdiff(const TransductiveProblem& problem);

/// Result of fitting explanation functions on inducing points: the joint MAP
/// over inducing + query locations under the similarity prior.
struct InductiveModel {
  PointSet inducing;
  PointSet query;
  Eigen::MatrixXd inducing_gradients;  // M x D
  double lambda_robust = 0.0;
  double lambda_smooth = 0.0;
  double sigma2 = 1e6;
  SimilaritySpec similarity;
  DimSimilaritySpec dim_similarity;
  Eigen::MatrixXd joint_solution;  // (M + Q) x D, inducing rows first
};

/// Builds the joint precision over the union of inducing and query points
/// (inducing first) and solves the MAP system
///   (D_lik + Q) E = D_lik g,   D_lik = diag(1 on inducing points) (x) I_D.
/// The prior mean-marginalization correction
///   Sigma^{-1} = Q - (Q 1)(Q 1)' / (1' Q 1 + 1/sigma2)
/// vanishes identically here because the Laplacian-built Q annihilates
/// constants, so Q is used directly. Throws RankError when query points are
/// decoupled from all inducing data (lambda_robust == 0 with queries present,
/// or similarity components containing no inducing point) and ConvexityError
/// when the system matrix is indefinite.
InductiveModel fit_inductive(const PointSet& inducing, const DifferentiableFunction& f,
                             const PointSet& query, const SimilaritySpec& similarity,
                             double lambda_robust, double lambda_smooth, double sigma2 = 1e6,
                             const DimSimilaritySpec& dim_similarity = {},
                             const SolveOptions& options = {});

/// Explanations at the query points: the query block of the cached joint
/// solution. Deterministic: refitting the same model yields bit-identical
/// output.
ExplanationMatrix predict_inductive(const InductiveModel& model);

/// Generic dense precision-form MAP solve:
///   (diag(likelihood_diag) + Sigma^{-1}) E = diag(likelihood_diag) g
/// with Sigma^{-1} = Q - (Q 1)(Q 1)' / (1' Q 1 + 1/sigma2), the precision of
/// the prior after marginalizing a flat mean with variance sigma2. Used for
/// invertible prior precisions (e.g. Q = K^{-1} of a kernel matrix); the
/// correction is a no-op whenever Q 1 = 0.
Eigen::VectorXd solve_map_precision(const Eigen::MatrixXd& Q,
                                    const Eigen::VectorXd& likelihood_diag,
                                    const Eigen::VectorXd& g, double sigma2 = 1e6);

}  // namespace propopt
