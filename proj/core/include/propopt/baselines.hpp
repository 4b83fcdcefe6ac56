#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "propopt/losses.hpp"

namespace propopt {

enum class PerturbationKind { gaussian, uniform_ball };

PerturbationKind perturbation_kind_from_string(const std::string& s);

/// Perturbation model shared by the sampling baselines.
///   gaussian:     eps = delta * z, z ~ N(0, I)
///   uniform_ball: eps uniform over the ball of radius delta^2
/// Draws are scaled standard draws, so runs with the same seed are coupled
/// across different delta values.
struct PerturbationSpec {
  PerturbationKind distribution = PerturbationKind::gaussian;
  double delta = 1.0;
  int samples = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Mean gradient under perturbation: (1/S) sum_s grad f(x + eps_s).
Eigen::VectorXd smoothgrad(const DifferentiableFunction& f, const Eigen::VectorXd& x,
                           const PerturbationSpec& pert);

struct LimeOptions {
  bool intercept = true;        // fit an offset term alongside the weights
  bool kernel_weights = false;  // gaussian proximity weighting of samples
  double kernel_scale = 1.0;
};

/// Local linear surrogate: least-squares fit of f on perturbed samples,
/// returning the linear coefficients (the intercept, when fitted, is
/// dropped). Unweighted by default; gaussian sample weighting is optional.
/// Throws SamplingError when the design is rank-deficient.
Eigen::VectorXd lime(const DifferentiableFunction& f, const Eigen::VectorXd& x,
                     const PerturbationSpec& pert, const LimeOptions& options = {});

struct ShapOptions {
  /// 0 enumerates all 2^D - 2 proper coalitions (exact for small D);
  /// otherwise the number of sampled coalitions.
  int sample_coalitions = 0;
  std::uint64_t seed = 0;
};

/// Kernel-weighted coalition regression attributions against a single
/// background point. The efficiency constraint
///   sum_d phi_d = f(x) - f(background)
/// is enforced exactly by eliminating one unknown. With exhaustive
/// coalitions this reproduces exact Shapley values.
Eigen::VectorXd kernel_shap(const DifferentiableFunction& f, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& background, const ShapOptions& options = {});

/// Center of the point set's bounding box; the default background.
Eigen::VectorXd domain_center(const PointSet& points);

/// Per-point application over a point set; point n uses the RNG stream
/// (pert.seed, n), so results do not depend on evaluation order.
ExplanationMatrix smoothgrad_matrix(const DifferentiableFunction& f, const PointSet& points,
                                    const PerturbationSpec& pert);
ExplanationMatrix lime_matrix(const DifferentiableFunction& f, const PointSet& points,
                              const PerturbationSpec& pert, const LimeOptions& options = {});
ExplanationMatrix kernel_shap_matrix(const DifferentiableFunction& f, const PointSet& points,
                                     const Eigen::VectorXd& background,
                                     const ShapOptions& options = {});

}  // namespace propopt
