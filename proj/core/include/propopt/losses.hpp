#pragma once

#include <Eigen/Dense>
#include <string>

#include "propopt/functions.hpp"
#include "propopt/similarity.hpp"

namespace propopt {

/// Row n is the attribution vector for point n (N x D).
using ExplanationMatrix = Eigen::MatrixXd;

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum class FaithfulnessForm { gradient_match, function_match };
enum class RobustnessForm { pairwise, max_difference };

FaithfulnessForm faithfulness_form_from_string(const std::string& s);
RobustnessForm robustness_form_from_string(const std::string& s);
std::string to_string(FaithfulnessForm f);
std::string to_string(RobustnessForm r);

/// Weights and forms of the combined objective. All weights must be >= 0 and
/// at least one positive.
struct PropertyWeights {
  double lambda_faithful = 1.0;
  double lambda_robust = 0.0;
  double lambda_smooth = 0.0;
  double lambda_complex = 0.0;
  FaithfulnessForm faithfulness_form = FaithfulnessForm::gradient_match;
  RobustnessForm robustness_form = RobustnessForm::pairwise;

  void validate() const;
};

/// All six property losses plus the weighted total.
struct LossReport {
  double faithful_grad = 0.0;
  double faithful_fn = 0.0;
  double robust_pair = 0.0;
  double robust_max = 0.0;
  double smooth = 0.0;
  double complex_ = 0.0;
  double total = 0.0;

  /// total recomputed from the stored fields; bitwise-equal to total.
  double recompute_total(const PropertyWeights& weights) const;
};

/// sum_n ||w_n - g_n||^2
double loss_faithful_grad(const ExplanationMatrix& W, const Eigen::MatrixXd& gradients);

/// sum_n (f(x_n) - w_n . x_n)^2
double loss_faithful_fn(const ExplanationMatrix& W, const PointSet& points,
                        const DifferentiableFunction& f);

/// sum over ordered pairs (n, n') of ||w_n - w_n'||^2 S_{nn'}; every
/// unordered pair contributes twice. Equals 2 tr(W' L W) for L built from S.
double loss_robust_pairwise(const ExplanationMatrix& W, const Eigen::MatrixXd& S);

/// max over masked ordered pairs of ||w_n - w_n'||^2. The mask must be
/// symmetric with at least one off-diagonal true entry.
double loss_robust_maxdiff(const ExplanationMatrix& W, const BoolMatrix& mask);

/// sum_n sum over ordered dimension pairs (d, d') of
/// |w_{nd} - w_{nd'}|^2 S~_{dd'}. Equals 2 tr(W L~ W').
double loss_smooth(const ExplanationMatrix& W, const Eigen::MatrixXd& S_tilde);

/// sum_n ||w_n||_1
double loss_complexity(const ExplanationMatrix& W);

/// Neighbor mask for max-difference robustness: true where S > 0 off the
/// diagonal; falls back to the complete off-diagonal mask when S has no
/// positive entries (e.g. precision-type similarities).
BoolMatrix mask_from_similarity(const Eigen::MatrixXd& S);

/// Fills every loss field and the weighted total. The max-difference mask is
/// derived from bundle.S via mask_from_similarity; with a single point the
/// max over the empty pair set is reported as 0.
LossReport evaluate_all(const ExplanationMatrix& W, const PointSet& points,
                        const DifferentiableFunction& f, const SimilarityBundle& bundle,
                        const PropertyWeights& weights);

}  // namespace propopt
