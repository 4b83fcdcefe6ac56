#include "propopt/losses.hpp"

#include <cmath>

namespace propopt {

FaithfulnessForm faithfulness_form_from_string(const std::string& s) {
  if (s == "gradient-match") return FaithfulnessForm::gradient_match;
  if (s == "function-match") return FaithfulnessForm::function_match;
  throw ConfigError("unknown faithfulness form '" + s + "'");
}

RobustnessForm robustness_form_from_string(const std::string& s) {
  if (s == "pairwise") return RobustnessForm::pairwise;
  if (s == "max-difference") return RobustnessForm::max_difference;
  throw ConfigError("unknown robustness form '" + s + "'");
}

std::string to_string(FaithfulnessForm f) {
  return f == FaithfulnessForm::gradient_match ? "gradient-match" : "function-match";
}

std::string to_string(RobustnessForm r) {
  return r == RobustnessForm::pairwise ? "pairwise" : "max-difference";
}

void PropertyWeights::validate() const {
  const double ls[] = {lambda_faithful, lambda_robust, lambda_smooth, lambda_complex};
  double sum = 0.0;
  for (double l : ls) {
    if (!(l >= 0.0) || !std::isfinite(l))
      throw ConfigError("property weights must be finite and >= 0");
    sum += l;
  }
  if (!(sum > 0.0)) throw ConfigError("at least one property weight must be positive");
}

double LossReport::recompute_total(const PropertyWeights& weights) const {
  const double faithful =
      weights.faithfulness_form == FaithfulnessForm::gradient_match ? faithful_grad : faithful_fn;
  const double robust =
      weights.robustness_form == RobustnessForm::pairwise ? robust_pair : robust_max;
  return weights.lambda_faithful * faithful + weights.lambda_robust * robust +
         weights.lambda_smooth * smooth + weights.lambda_complex * complex_;
}

namespace {

void check_explanation(const ExplanationMatrix& W) {
  if (W.rows() < 1 || W.cols() < 1) throw ConfigError("explanation matrix must be non-empty");
  if (!W.allFinite()) throw ConfigError("explanation matrix must be finite");
}

}  // namespace

double loss_faithful_grad(const ExplanationMatrix& W, const Eigen::MatrixXd& gradients) {
  check_explanation(W);
  if (gradients.rows() != W.rows() || gradients.cols() != W.cols())
    throw ConfigError("gradient matrix shape must match the explanation matrix");
  return (W - gradients).squaredNorm();
}

double loss_faithful_fn(const ExplanationMatrix& W, const PointSet& points,
                        const DifferentiableFunction& f) {
  check_explanation(W);
  if (W.rows() != points.size() || W.cols() != points.dimension())
    throw ConfigError("explanation matrix shape must match the point set");
  double acc = 0.0;
  for (int n = 0; n < points.size(); ++n) {
    const double r = f.value(points.point(n)) - W.row(n).dot(points.points().row(n));
    acc += r * r;
  }
  return acc;
}

double loss_robust_pairwise(const ExplanationMatrix& W, const Eigen::MatrixXd& S) {
  check_explanation(W);
  if (S.rows() != W.rows() || S.cols() != W.rows())
    throw ConfigError("similarity matrix size must match the explanation row count");
  // Ordered pairs: each unordered pair contributes twice.
  double acc = 0.0;
  for (Eigen::Index n = 0; n < W.rows(); ++n) {
    for (Eigen::Index m = n + 1; m < W.rows(); ++m) {
      const double s = S(n, m) + S(m, n);
      if (s != 0.0) acc += (W.row(n) - W.row(m)).squaredNorm() * s;
    }
  }
  return acc;
}

double loss_robust_maxdiff(const ExplanationMatrix& W, const BoolMatrix& mask) {
  check_explanation(W);
  if (mask.rows() != W.rows() || mask.cols() != W.rows())
    throw ConfigError("mask size must match the explanation row count");
  double best = -1.0;
  for (Eigen::Index n = 0; n < W.rows(); ++n) {
    for (Eigen::Index m = n + 1; m < W.rows(); ++m) {
      if (mask(n, m) != mask(m, n))
        throw ConfigError("max-difference mask must be symmetric");
      if (!mask(n, m)) continue;
      best = std::max(best, (W.row(n) - W.row(m)).squaredNorm());
    }
  }
  if (best < 0.0)
    throw ConfigError("max-difference robustness requires at least one masked pair");
  return best;
}

double loss_smooth(const ExplanationMatrix& W, const Eigen::MatrixXd& S_tilde) {
  check_explanation(W);
  if (S_tilde.rows() != W.cols() || S_tilde.cols() != W.cols())
    throw ConfigError("dimension similarity size must match the explanation column count");
  double acc = 0.0;
  for (Eigen::Index d = 0; d < W.cols(); ++d) {
    for (Eigen::Index e = d + 1; e < W.cols(); ++e) {
      const double s = S_tilde(d, e) + S_tilde(e, d);
      if (s == 0.0) continue;
      acc += (W.col(d) - W.col(e)).squaredNorm() * s;
    }
  }
  return acc;
}

double loss_complexity(const ExplanationMatrix& W) {
  check_explanation(W);
  return W.cwiseAbs().sum();
}

BoolMatrix mask_from_similarity(const Eigen::MatrixXd& S) {
  if (S.rows() != S.cols()) throw ConfigError("similarity matrix must be square");
  const Eigen::Index n = S.rows();
  BoolMatrix mask(n, n);
  bool any = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      mask(i, j) = i != j && S(i, j) > 0.0;
      any = any || mask(i, j);
    }
  }
  if (!any) {
    // No positive neighbors to restrict to; fall back to all pairs.
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) mask(i, j) = i != j;
  }
  return mask;
}

LossReport evaluate_all(const ExplanationMatrix& W, const PointSet& points,
                        const DifferentiableFunction& f, const SimilarityBundle& bundle,
                        const PropertyWeights& weights) {
  weights.validate();
  check_explanation(W);
  if (W.rows() != points.size() || W.cols() != points.dimension())
    throw ConfigError("explanation matrix shape must match the point set");
  LossReport report;
  report.faithful_grad = loss_faithful_grad(W, f.gradients(points));
  report.faithful_fn = loss_faithful_fn(W, points, f);
  report.robust_pair = loss_robust_pairwise(W, bundle.S);
  report.robust_max =
      points.size() > 1 ? loss_robust_maxdiff(W, mask_from_similarity(bundle.S)) : 0.0;
  report.smooth = loss_smooth(W, bundle.S_tilde);
  report.complex_ = loss_complexity(W);
  report.total = report.recompute_total(weights);
  return report;
}

}  // namespace propopt
