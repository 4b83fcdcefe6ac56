#include "propopt/solvers.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "propopt/rng.hpp"

namespace propopt {

namespace {

void validate_problem(const TransductiveProblem& p, RobustnessForm required_robustness,
                      bool allow_complexity) {
  p.weights.validate();
  if (!(p.weights.lambda_faithful > 0.0))
    throw ConfigError("transductive solvers require lambda_faithful > 0");
  if (p.weights.faithfulness_form != FaithfulnessForm::gradient_match)
    throw ConfigError("transductive solvers optimize gradient-match faithfulness");
  if (p.weights.robustness_form != required_robustness)
    throw ConfigError("robustness form does not match the requested solver");
  if (!allow_complexity && p.weights.lambda_complex != 0.0)
    throw ConfigError("this solver requires lambda_complex == 0");
  const Eigen::Index n = p.gradients.rows();
  const Eigen::Index d = p.gradients.cols();
  if (n < 1 || d < 1) throw ConfigError("gradient matrix must be non-empty");
  if (!p.gradients.allFinite()) throw ConfigError("gradient matrix must be finite");
  if (p.points.size() != n || p.points.dimension() != d)
    throw ConfigError("point set shape must match the gradient matrix");
  if (p.bundle.S.rows() != n || p.bundle.S.cols() != n)
    throw ConfigError("similarity matrix size must match the gradient row count");
  if (p.bundle.laplacian.rows() != n || p.bundle.laplacian.cols() != n)
    throw ConfigError("laplacian size must match the gradient row count");
  if (p.bundle.S_tilde.rows() != d || p.bundle.S_tilde.cols() != d)
    throw ConfigError("dimension similarity size must match the gradient column count");
  if (p.bundle.laplacian_tilde.rows() != d || p.bundle.laplacian_tilde.cols() != d)
    throw ConfigError("dimension laplacian size must match the gradient column count");
  if (!(p.options.tol > 0.0)) throw ConfigError("solver tolerance must be > 0");
  if (!(p.options.stall_tol > 0.0)) throw ConfigError("solver stall_tol must be > 0");
  if (p.options.max_iters < 1) throw ConfigError("max_iters must be >= 1");
}

/// Solves A0 W + c W Ltilde = B for symmetric A0 and Ltilde by diagonalizing
/// Ltilde = V diag(mu) V' and factorizing A0 + c mu I once per distinct
/// eigenvalue. factorize() reports false when a shifted matrix is not
/// positive definite.
class ShiftedSylvesterSolver {
 public:
  bool factorize(const Eigen::MatrixXd& A0, double c, const Eigen::MatrixXd& Ltilde) {
    A0_ = A0;
    c_ = c;
    Ltilde_ = Ltilde;
    diagonal_path_ = (c == 0.0) || Ltilde.cwiseAbs().maxCoeff() == 0.0;
    if (diagonal_path_) {
      llts_.clear();
      llts_.emplace_back(A0);
      return llts_.front().info() == Eigen::Success;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ltilde);
    if (es.info() != Eigen::Success) return false;
    V_ = es.eigenvectors();
    mu_ = es.eigenvalues();
    llts_.clear();
    groups_.clear();
    const Eigen::Index d = mu_.size();
    Eigen::Index begin = 0;
    while (begin < d) {
      Eigen::Index end = begin + 1;
      while (end < d && std::abs(mu_(end) - mu_(begin)) <= 1e-12 * (1.0 + std::abs(mu_(begin))))
        ++end;
      Eigen::MatrixXd shifted = A0;
      shifted.diagonal().array() += c * mu_(begin);
      llts_.emplace_back(shifted);
      if (llts_.back().info() != Eigen::Success) return false;
      groups_.emplace_back(begin, end);
      begin = end;
    }
    return true;
  }

  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const {
    if (diagonal_path_) return llts_.front().solve(B);
    Eigen::MatrixXd Bt = B * V_;
    Eigen::MatrixXd Wt(B.rows(), B.cols());
    for (std::size_t i = 0; i < groups_.size(); ++i) {
      const auto [begin, end] = groups_[i];
      Wt.middleCols(begin, end - begin) = llts_[i].solve(Bt.middleCols(begin, end - begin));
    }
    return Wt * V_.transpose();
  }

  /// Residual B - A0 W - c W Ltilde of a candidate solution.
  Eigen::MatrixXd residual(const Eigen::MatrixXd& W, const Eigen::MatrixXd& B) const {
    Eigen::MatrixXd R = B - A0_ * W;
    if (!diagonal_path_) R -= c_ * W * Ltilde_;
    return R;
  }

 private:
  bool diagonal_path_ = false;
  double c_ = 0.0;
  Eigen::MatrixXd A0_, Ltilde_, V_;
  Eigen::VectorXd mu_;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> groups_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llts_;
};

/// Factorize + solve + iterative refinement until the residual meets
/// tol * (1 + ||B||_F).
Eigen::MatrixXd solve_sylvester_refined(const Eigen::MatrixXd& A0, double c,
                                        const Eigen::MatrixXd& Ltilde, const Eigen::MatrixXd& B,
                                        double tol, const std::string& not_pd_message,
                                        const std::string& no_converge_message) {
  ShiftedSylvesterSolver solver;
  if (!solver.factorize(A0, c, Ltilde)) throw ConvexityError(not_pd_message);
  Eigen::MatrixXd W = solver.solve(B);
  const double scale = 1.0 + B.norm();
  for (int pass = 0; pass < 4; ++pass) {
    const Eigen::MatrixXd R = solver.residual(W, B);
    if (R.norm() <= tol * scale) return W;
    W += solver.solve(R);
  }
  if (solver.residual(W, B).norm() <= tol * scale) return W;
  throw RankError(no_converge_message);
}

/// Exact minimizer of the smooth quadratic part (complexity ignored).
Eigen::MatrixXd quadratic_minimizer(const TransductiveProblem& p) {
  const double lf = p.weights.lambda_faithful;
  const double lr = p.weights.lambda_robust;
  const double ls = p.weights.lambda_smooth;
  if (lr == 0.0 && ls == 0.0) return p.gradients;
  Eigen::MatrixXd A0 = 2.0 * lr * p.bundle.laplacian;
  A0.diagonal().array() += lf;
  return solve_sylvester_refined(
      A0, 2.0 * ls, p.bundle.laplacian_tilde, lf * p.gradients, p.options.tol,
      "quadratic system matrix is not positive definite; the similarity carries "
      "negative weight that outweighs the faithfulness term",
      "quadratic system is numerically singular; solution did not reach the "
      "residual tolerance");
}

/// Largest eigenvalue of the smooth-part Hessian
///   H(X) = 2 lf X + 4 lr L X + 4 ls X L~
/// by power iteration with a deterministic seeded start.
double smooth_hessian_norm(const Eigen::MatrixXd& L, const Eigen::MatrixXd& Ltilde, double lf,
                           double lr, double ls, Eigen::Index n, Eigen::Index d) {
  Rng rng(0xf157a5eedull);
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = rng.normal();
  X /= X.norm();
  double ray = 2.0 * lf;
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::MatrixXd Y = 2.0 * lf * X;
    if (lr != 0.0) Y += 4.0 * lr * (L * X);
    if (ls != 0.0) Y += 4.0 * ls * (X * Ltilde);
    const double new_ray = (X.array() * Y.array()).sum();
    const double norm = Y.norm();
    if (norm == 0.0) break;
    X = Y / norm;
    if (std::abs(new_ray - ray) <= 1e-13 * std::abs(new_ray)) {
      ray = new_ray;
      break;
    }
    ray = new_ray;
  }
  return std::abs(ray);
}

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

}  // namespace

double transductive_objective(const TransductiveProblem& problem, const ExplanationMatrix& W) {
  const PropertyWeights& w = problem.weights;
  double value = w.lambda_faithful * loss_faithful_grad(W, problem.gradients);
  if (w.lambda_robust != 0.0) {
    if (w.robustness_form == RobustnessForm::pairwise) {
      value += w.lambda_robust * loss_robust_pairwise(W, problem.bundle.S);
    } else if (W.rows() > 1) {
      value += w.lambda_robust * loss_robust_maxdiff(W, mask_from_similarity(problem.bundle.S));
    }
  }
  if (w.lambda_smooth != 0.0) value += w.lambda_smooth * loss_smooth(W, problem.bundle.S_tilde);
  if (w.lambda_complex != 0.0) value += w.lambda_complex * loss_complexity(W);
  return value;
}

ExplanationMatrix solve_quadratic(const TransductiveProblem& problem) {
  validate_problem(problem, RobustnessForm::pairwise, /*allow_complexity=*/false);
  return quadratic_minimizer(problem);
}

ExplanationMatrix solve_l1(const TransductiveProblem& problem) {
  validate_problem(problem, RobustnessForm::pairwise, /*allow_complexity=*/true);
  const double lf = problem.weights.lambda_faithful;
  const double lr = problem.weights.lambda_robust;
  const double ls = problem.weights.lambda_smooth;
  const double lc = problem.weights.lambda_complex;
  const Eigen::MatrixXd& G = problem.gradients;
  const Eigen::MatrixXd& L = problem.bundle.laplacian;
  const Eigen::MatrixXd& Lt = problem.bundle.laplacian_tilde;

  // The warm start doubles as the mandated convexity check: the smooth part
  // must factorize positive definite before we iterate on it.
  const Eigen::MatrixXd W0 = quadratic_minimizer(problem);
  const Eigen::MatrixXd start = problem.options.warm_start ? W0 : G;

  auto smooth_grad = [&](const Eigen::MatrixXd& Y) {
    Eigen::MatrixXd grad = 2.0 * lf * (Y - G);
    if (lr != 0.0) grad += 4.0 * lr * (L * Y);
    if (ls != 0.0) grad += 4.0 * ls * (Y * Lt);
    return grad;
  };
  auto objective = [&](const Eigen::MatrixXd& W) {
    double v = lf * (W - G).squaredNorm();
    if (lr != 0.0) {
      const Eigen::MatrixXd LW = L * W;
      v += 2.0 * lr * (W.array() * LW.array()).sum();
    }
    if (ls != 0.0) {
      const Eigen::MatrixXd WLt = W * Lt;
      v += 2.0 * ls * (W.array() * WLt.array()).sum();
    }
    if (lc != 0.0) v += lc * W.cwiseAbs().sum();
    return v;
  };

  const double lipschitz =
      smooth_hessian_norm(L, Lt, lf, lr, ls, G.rows(), G.cols()) * 1.02 + 1e-30;
  const double step = 1.0 / lipschitz;
  const double shrink = step * lc;

  // Monotone accelerated proximal gradient: X is the monotone iterate, Z the
  // raw prox output, Y the extrapolation point.
  Eigen::MatrixXd X = start, Z = start, Zprev = start, Y = start;
  double fx = objective(X);
  double fz_prev = fx;
  double theta = 1.0;
  double gap = std::numeric_limits<double>::infinity();
  for (int k = 0; k < problem.options.max_iters; ++k) {
    Eigen::MatrixXd V = Y - step * smooth_grad(Y);
    Z = V.unaryExpr([shrink](double v) { return soft_threshold(v, shrink); });
    const double fz = objective(Z);
    const Eigen::MatrixXd Xold = X;
    if (fz <= fx) {
      X = Z;
      fx = fz;
    }
    gap = (Z - Zprev).norm();
    if (gap <= problem.options.tol) return X;
    if (k > 0 && fz > fz_prev) {
      // Objective increased along the prox sequence: drop the momentum.
      theta = 1.0;
      Y = X;
    } else {
      const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
      Y = X + (theta / theta_next) * (Z - X) + ((theta - 1.0) / theta_next) * (X - Xold);
      theta = theta_next;
    }
    fz_prev = fz;
    Zprev = Z;
  }
  throw IterationLimitError("l1 solver hit max_iters before successive iterates met tol (gap " +
                                std::to_string(gap) + ")",
                            gap);
}

ExplanationMatrix solve_maxdiff(const TransductiveProblem& problem) {
  validate_problem(problem, RobustnessForm::max_difference, /*allow_complexity=*/false);
  if (problem.weights.lambda_smooth != 0.0)
    throw ConfigError("max-difference solver requires lambda_smooth == 0");
  const double lf = problem.weights.lambda_faithful;
  const double lr = problem.weights.lambda_robust;
  const Eigen::MatrixXd& G = problem.gradients;
  const Eigen::Index n = G.rows();
  if (lr == 0.0 || n < 2) return G;

  const BoolMatrix mask = mask_from_similarity(problem.bundle.S);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a + 1; b < n; ++b)
      if (mask(a, b)) pairs.emplace_back(a, b);
  if (pairs.empty()) return G;

  auto max_pair = [&](const Eigen::MatrixXd& W) {
    double best = -1.0;
    std::pair<Eigen::Index, Eigen::Index> arg = pairs.front();
    for (const auto& [a, b] : pairs) {
      const double v = (W.row(a) - W.row(b)).squaredNorm();
      if (v > best) {
        best = v;
        arg = {a, b};
      }
    }
    return std::make_pair(best, arg);
  };
  auto objective = [&](const Eigen::MatrixXd& W) {
    return lf * (W - G).squaredNorm() + lr * max_pair(W).first;
  };

  // Warm start from the pairwise-quadratic minimizer of the same weights;
  // it is cheap and close to the max-difference optimum for smooth spectra.
  TransductiveProblem surrogate = problem;
  surrogate.weights.robustness_form = RobustnessForm::pairwise;
  Eigen::MatrixXd W = problem.options.warm_start ? quadratic_minimizer(surrogate) : G;

  Eigen::MatrixXd W_best = W;
  double j = objective(W);
  double j_best = j;
  if (j_best == 0.0) return W_best;

  // Subgradient descent with diminishing target-level steps:
  //   step_k = (J(W_k) - J_best + gamma_k) / ||g_k||^2,
  //   gamma_k = g0 / (k+1)^{3/4}.
  // The k^{-3/4} decay keeps the gamma sum divergent (required for level
  // methods to reach the optimum) while shrinking the terminal oscillation
  // band much faster than k^{-1/2}.
  const double gamma0 = 0.05 * (1.0 + j_best);
  const int window = 500;
  const double stall_tol = problem.options.stall_tol;
  double window_best = j_best;
  double window_gap = std::numeric_limits<double>::infinity();
  for (int k = 0; k < problem.options.max_iters; ++k) {
    const auto [maxval, arg] = max_pair(W);
    Eigen::MatrixXd g = 2.0 * lf * (W - G);
    const Eigen::RowVectorXd diff = W.row(arg.first) - W.row(arg.second);
    g.row(arg.first) += 2.0 * lr * diff;
    g.row(arg.second) -= 2.0 * lr * diff;
    const double gn2 = g.squaredNorm();
    if (gn2 <= 1e-30) break;
    const double gamma = gamma0 / std::pow(static_cast<double>(k + 1), 0.75);
    const double step = (j - j_best + gamma) / gn2;
    W -= step * g;
    j = objective(W);
    if (j < j_best) {
      j_best = j;
      W_best = W;
    }
    if ((k + 1) % window == 0) {
      window_gap = window_best - j_best;
      if (window_gap <= stall_tol * (1.0 + std::abs(j_best))) return W_best;
      window_best = j_best;
    }
  }
  if (window_gap <= stall_tol * (1.0 + std::abs(j_best))) return W_best;
  throw IterationLimitError(
      "max-difference solver hit max_iters while still improving (last window gain " +
          std::to_string(window_gap) + ")",
      window_gap);
}

namespace {

/// Indices of union points reachable from any inducing point along nonzero
/// similarity entries; used to diagnose decoupled query components.
std::vector<int> decoupled_points(const Eigen::MatrixXd& S, int n_inducing) {
  const Eigen::Index n = S.rows();
  std::vector<char> reached(static_cast<std::size_t>(n), 0);
  std::vector<Eigen::Index> stack;
  for (Eigen::Index i = 0; i < n_inducing; ++i) {
    reached[static_cast<std::size_t>(i)] = 1;
    stack.push_back(i);
  }
  while (!stack.empty()) {
    const Eigen::Index i = stack.back();
    stack.pop_back();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!reached[static_cast<std::size_t>(j)] && S(i, j) != 0.0) {
        reached[static_cast<std::size_t>(j)] = 1;
        stack.push_back(j);
      }
    }
  }
  std::vector<int> missing;
  for (Eigen::Index j = 0; j < n; ++j)
    if (!reached[static_cast<std::size_t>(j)]) missing.push_back(static_cast<int>(j));
  return missing;
}

std::string format_indices(const std::vector<int>& idx, int offset, std::size_t cap = 8) {
  std::string out;
  for (std::size_t i = 0; i < idx.size() && i < cap; ++i) {
    if (!out.empty()) out += ", ";
    out += std::to_string(idx[i] - offset);
  }
  if (idx.size() > cap) out += ", ...";
  return out;
}

}  // namespace

InductiveModel fit_inductive(const PointSet& inducing, const DifferentiableFunction& f,
                             const PointSet& query, const SimilaritySpec& similarity,
                             double lambda_robust, double lambda_smooth, double sigma2,
                             const DimSimilaritySpec& dim_similarity, const SolveOptions& options) {
  if (lambda_robust < 0.0 || lambda_smooth < 0.0)
    throw ConfigError("inductive weights must be >= 0");
  if (!(sigma2 > 0.0)) throw ConfigError("sigma2 must be > 0");
  if (!(options.tol > 0.0)) throw ConfigError("solver tolerance must be > 0");
  if (f.dimension() != inducing.dimension())
    throw ConfigError("function dimension must match the inducing points");
  const int m = inducing.size();
  const int q = query.size();
  const int d = inducing.dimension();
  if (q > 0 && query.dimension() != d)
    throw ConfigError("query dimension must match the inducing dimension");

  // Union point set, inducing rows first. Bounds become the per-dimension
  // hull so stacked points always validate.
  Eigen::MatrixXd stacked(m + q, d);
  stacked.topRows(m) = inducing.points();
  if (q > 0) stacked.bottomRows(q) = query.points();
  std::vector<Interval> hull(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) {
    const Interval& a = inducing.bounds()[static_cast<std::size_t>(k)];
    Interval b = a;
    if (q > 0) {
      const Interval& c = query.bounds()[static_cast<std::size_t>(k)];
      b.lo = std::min(a.lo, c.lo);
      b.hi = std::max(a.hi, c.hi);
    }
    hull[static_cast<std::size_t>(k)] = b;
  }
  PointSet union_points(std::move(stacked), std::move(hull));

  SimilarityBundle bundle = build_bundle(union_points, similarity, dim_similarity);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m + q, d);
  G.topRows(m) = f.gradients(inducing);

  if (q > 0 && lambda_robust == 0.0)
    throw RankError(
        "query explanations are unconstrained: lambda_robust is zero, so no "
        "similarity coupling reaches the query points");
  if (lambda_robust > 0.0 && q > 0) {
    const std::vector<int> missing = decoupled_points(bundle.S, m);
    if (!missing.empty())
      throw RankError("query points {" + format_indices(missing, m) +
                      "} share no similarity path with any inducing point");
  }

  // Joint MAP stationarity: (D_lik + 2 lr L) W + 2 ls W L~ = D_lik G.
  // The flat-mean marginalization correction is identically zero here since
  // the Laplacian-built precision annihilates constant vectors.
  Eigen::MatrixXd A0 = 2.0 * lambda_robust * bundle.laplacian;
  for (int i = 0; i < m; ++i) A0(i, i) += 1.0;

  Eigen::MatrixXd joint = solve_sylvester_refined(
      A0, 2.0 * lambda_smooth, bundle.laplacian_tilde, G, options.tol,
      "joint inductive system is not positive definite; the similarity carries "
      "negative weight that outweighs the inducing-point likelihood",
      "joint inductive system is numerically singular; some explanations are "
      "not determined by the inducing data");
  return InductiveModel{inducing,   query,      G.topRows(m),   lambda_robust,
                        lambda_smooth, sigma2, similarity, dim_similarity,
                        std::move(joint)};
}

ExplanationMatrix predict_inductive(const InductiveModel& model) {
  const int q = model.query.size();
  return model.joint_solution.bottomRows(q);
}

Eigen::VectorXd solve_map_precision(const Eigen::MatrixXd& Q,
                                    const Eigen::VectorXd& likelihood_diag,
                                    const Eigen::VectorXd& g, double sigma2) {
  const Eigen::Index n = Q.rows();
  if (Q.cols() != n) throw ConfigError("precision matrix must be square");
  if (!Q.allFinite()) throw ConfigError("precision matrix must be finite");
  const double asym = (Q - Q.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * (1.0 + Q.cwiseAbs().maxCoeff()))
    throw ConfigError("precision matrix must be symmetric");
  if (likelihood_diag.size() != n || g.size() != n)
    throw ConfigError("likelihood diagonal and observations must match the precision size");
  if (likelihood_diag.minCoeff() < 0.0)
    throw ConfigError("likelihood diagonal entries must be >= 0");
  if (!(sigma2 > 0.0)) throw ConfigError("sigma2 must be > 0");

  // Marginalize the flat prior mean: Sigma^{-1} = Q - (Q1)(Q1)'/(1'Q1 + 1/s2).
  const Eigen::VectorXd q1 = Q.rowwise().sum();
  const double denom = q1.sum() + 1.0 / sigma2;
  if (!(denom > 0.0))
    throw ConvexityError("prior precision is not positive along the constant direction");
  Eigen::MatrixXd A = Q - (q1 * q1.transpose()) / denom;
  A.diagonal() += likelihood_diag;
  const Eigen::VectorXd rhs = likelihood_diag.cwiseProduct(g);

  Eigen::LDLT<Eigen::MatrixXd> ldlt(0.5 * (A + A.transpose()));
  if (ldlt.info() != Eigen::Success)
    throw FactorizationError("posterior precision factorization failed");
  Eigen::VectorXd e = ldlt.solve(rhs);
  // One refinement pass, then a residual guard against singular systems.
  e += ldlt.solve(rhs - A * e);
  if ((rhs - A * e).norm() > 1e-8 * (1.0 + rhs.norm()))
    throw RankError("posterior system is numerically singular; observations do not "
                    "determine every coordinate");
  return e;
}

}  // namespace propopt
