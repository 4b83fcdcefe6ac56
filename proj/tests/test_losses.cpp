#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "propopt/errors.hpp"
#include "propopt/losses.hpp"
#include "propopt/rng.hpp"

using namespace propopt;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = 2.0 * rng.normal();
  return m;
}

struct Instance {
  PointSet points;
  DifferentiableFunction f;
  SimilarityBundle bundle;
};

Instance make_instance(int n, int d, std::uint64_t seed) {
  PointSet ps = generate_points(d, PointMode::uniform, n, Interval{-4.0, 4.0}, seed);
  auto f = make_benchmark("quadratic-plus-sin-3x", d);
  SimilaritySpec spec;
  spec.scale = 2.0;
  return Instance{ps, f, build_bundle(ps, spec)};
}

}  // namespace

TEST_CASE("each loss agrees with its brute-force double-loop counterpart") {
  Instance inst = make_instance(9, 3, 41);
  Eigen::MatrixXd W = random_matrix(9, 3, 8);
  Eigen::MatrixXd G = inst.f.gradients(inst.points);

  CHECK(loss_faithful_grad(W, G) ==
        doctest::Approx(oracle::brute_faithful_grad(W, G)).epsilon(1e-13));
  CHECK(loss_faithful_fn(W, inst.points, inst.f) ==
        doctest::Approx(oracle::brute_faithful_fn(W, inst.points.points(),
                                                  inst.f.values(inst.points)))
            .epsilon(1e-13));
  CHECK(loss_robust_pairwise(W, inst.bundle.S) ==
        doctest::Approx(oracle::brute_robust_pairwise(W, inst.bundle.S)).epsilon(1e-12));
  CHECK(loss_smooth(W, inst.bundle.S_tilde) ==
        doctest::Approx(oracle::brute_smooth(W, inst.bundle.S_tilde)).epsilon(1e-12));
  CHECK(loss_complexity(W) == doctest::Approx(oracle::brute_complexity(W)).epsilon(1e-13));
}

TEST_CASE("pairwise losses count every unordered pair twice") {
  Eigen::MatrixXd W(2, 1);
  W << 0.0, 3.0;
  Eigen::MatrixXd S(2, 2);
  S << 0.0, 0.5, 0.5, 0.0;
  // One unordered pair, squared difference 9, weight 0.5, both directions.
  CHECK(loss_robust_pairwise(W, S) == doctest::Approx(9.0).epsilon(1e-14));

  Eigen::MatrixXd W2(1, 2);
  W2 << 1.0, 4.0;
  Eigen::MatrixXd St(2, 2);
  St << 0.0, 1.0, 1.0, 0.0;
  CHECK(loss_smooth(W2, St) == doctest::Approx(18.0).epsilon(1e-14));
}

TEST_CASE("trace identities hold for the laplacian forms") {
  Instance inst = make_instance(7, 4, 13);
  Eigen::MatrixXd W = random_matrix(7, 4, 99);
  CHECK(loss_robust_pairwise(W, inst.bundle.S) ==
        doctest::Approx(2.0 * (W.transpose() * inst.bundle.laplacian * W).trace())
            .epsilon(1e-12));
  CHECK(loss_smooth(W, inst.bundle.S_tilde) ==
        doctest::Approx(2.0 * (W * inst.bundle.laplacian_tilde * W.transpose()).trace())
            .epsilon(1e-12));
}

TEST_CASE("max-difference robustness takes the largest masked gap") {
  Eigen::MatrixXd W(3, 2);
  W << 0.0, 0.0, 1.0, 1.0, 5.0, 0.0;
  BoolMatrix mask = BoolMatrix::Constant(3, 3, true);
  mask.diagonal().setConstant(false);
  // Pair (0,2): 25; pair (1,2): 17; pair (0,1): 2.
  CHECK(loss_robust_maxdiff(W, mask) == doctest::Approx(25.0).epsilon(1e-14));

  mask(0, 2) = mask(2, 0) = false;  // exclude the largest pair
  CHECK(loss_robust_maxdiff(W, mask) == doctest::Approx(17.0).epsilon(1e-14));

  BoolMatrix empty = BoolMatrix::Constant(3, 3, false);
  CHECK_THROWS_AS(loss_robust_maxdiff(W, empty), ConfigError);
}

TEST_CASE("neighbor masks follow positive similarity with a complete fallback") {
  Eigen::MatrixXd S(3, 3);
  S << 0.0, 0.7, 0.0, 0.7, 0.0, -0.2, 0.0, -0.2, 0.0;
  BoolMatrix mask = mask_from_similarity(S);
  CHECK(mask(0, 1));
  CHECK(mask(1, 0));
  CHECK_FALSE(mask(1, 2));  // negative similarity is not adjacency
  CHECK_FALSE(mask(0, 2));
  CHECK_FALSE(mask(0, 0));

  Eigen::MatrixXd allneg = -Eigen::MatrixXd::Ones(3, 3);
  allneg.diagonal().setZero();
  BoolMatrix fallback = mask_from_similarity(allneg);
  for (int n = 0; n < 3; ++n)
    for (int m = 0; m < 3; ++m) CHECK(fallback(n, m) == (n != m));
}

TEST_CASE("weight validation rejects negatives and the all-zero objective") {
  PropertyWeights w;
  CHECK_NOTHROW(w.validate());
  w.lambda_robust = -0.1;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w.lambda_robust = 0.0;
  w.lambda_faithful = 0.0;
  CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("full evaluation fills every field and weights the selected forms") {
  Instance inst = make_instance(6, 2, 55);
  Eigen::MatrixXd W = random_matrix(6, 2, 3);
  Eigen::MatrixXd G = inst.f.gradients(inst.points);

  PropertyWeights w;
  w.lambda_faithful = 1.5;
  w.lambda_robust = 0.25;
  w.lambda_smooth = 0.75;
  w.lambda_complex = 0.1;

  LossReport r = evaluate_all(W, inst.points, inst.f, inst.bundle, w);
  CHECK(r.faithful_grad == doctest::Approx(loss_faithful_grad(W, G)).epsilon(1e-13));
  CHECK(r.faithful_fn ==
        doctest::Approx(loss_faithful_fn(W, inst.points, inst.f)).epsilon(1e-13));
  CHECK(r.robust_pair == doctest::Approx(loss_robust_pairwise(W, inst.bundle.S)).epsilon(1e-13));
  CHECK(r.robust_max ==
        doctest::Approx(loss_robust_maxdiff(W, mask_from_similarity(inst.bundle.S)))
            .epsilon(1e-13));
  CHECK(r.smooth == doctest::Approx(loss_smooth(W, inst.bundle.S_tilde)).epsilon(1e-13));
  CHECK(r.complex_ == doctest::Approx(loss_complexity(W)).epsilon(1e-13));

  // Default forms: gradient match + pairwise robustness.
  CHECK(r.total == doctest::Approx(1.5 * r.faithful_grad + 0.25 * r.robust_pair +
                                   0.75 * r.smooth + 0.1 * r.complex_)
                       .epsilon(1e-13));
  CHECK(r.total == r.recompute_total(w));  // bitwise contract

  PropertyWeights alt = w;
  alt.faithfulness_form = FaithfulnessForm::function_match;
  alt.robustness_form = RobustnessForm::max_difference;
  LossReport r2 = evaluate_all(W, inst.points, inst.f, inst.bundle, alt);
  CHECK(r2.total == doctest::Approx(1.5 * r2.faithful_fn + 0.25 * r2.robust_max +
                                    0.75 * r2.smooth + 0.1 * r2.complex_)
                        .epsilon(1e-13));
}

TEST_CASE("a single point has zero pair losses and a zero max gap") {
  Instance inst = make_instance(1, 3, 2);
  Eigen::MatrixXd W = random_matrix(1, 3, 4);
  PropertyWeights w;
  w.lambda_robust = 1.0;
  LossReport r = evaluate_all(W, inst.points, inst.f, inst.bundle, w);
  CHECK(r.robust_pair == 0.0);
  CHECK(r.robust_max == 0.0);
}

TEST_CASE("string round trips for forms") {
  CHECK(faithfulness_form_from_string("gradient-match") == FaithfulnessForm::gradient_match);
  CHECK(faithfulness_form_from_string("function-match") == FaithfulnessForm::function_match);
  CHECK(robustness_form_from_string("pairwise") == RobustnessForm::pairwise);
  CHECK(robustness_form_from_string("max-difference") == RobustnessForm::max_difference);
  CHECK(to_string(FaithfulnessForm::gradient_match) == "gradient-match");
  CHECK(to_string(RobustnessForm::max_difference) == "max-difference");
  CHECK_THROWS_AS(faithfulness_form_from_string("nope"), ConfigError);
  CHECK_THROWS_AS(robustness_form_from_string("nope"), ConfigError);
}
