#include <benchmark/benchmark.h>

#include "propopt/harness.hpp"

namespace {

using namespace propopt;

struct Fixture {
  DifferentiableFunction f;
  PointSet points;
  SimilarityBundle bundle;
  Eigen::MatrixXd gradients;

  explicit Fixture(int n_points, int dimension = 3)
      : f(make_benchmark("quadratic-plus-sin-3x", dimension)),
        points(generate_points(dimension, PointMode::uniform, n_points, {-5.0, 5.0}, 7)),
        bundle(build_bundle(points, SimilaritySpec{SimilarityKind::gaussian, 2.0, 1e-8, {}})),
        gradients(f.gradients(points)) {}

  TransductiveProblem problem(double lr, double ls, double lc,
                              RobustnessForm form = RobustnessForm::pairwise) const {
    PropertyWeights w;
    w.lambda_faithful = 1.0;
    w.lambda_robust = lr;
    w.lambda_smooth = ls;
    w.lambda_complex = lc;
    w.robustness_form = form;
    return TransductiveProblem{points, gradients, bundle, w, SolveOptions{}};
  }
};

void BM_SolveQuadratic(benchmark::State& state) {
  Fixture fx(static_cast<int>(state.range(0)));
  const TransductiveProblem p = fx.problem(0.5, 0.1, 0.0);
  for (auto _ : state) benchmark::DoNotOptimize(solve_quadratic(p));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SolveQuadratic)->Arg(16)->Arg(64)->Arg(256)->Complexity(benchmark::oNCubed);

void BM_SolveL1(benchmark::State& state) {
  Fixture fx(static_cast<int>(state.range(0)));
  const TransductiveProblem p = fx.problem(0.5, 0.0, 0.05);
  for (auto _ : state) benchmark::DoNotOptimize(solve_l1(p));
}
BENCHMARK(BM_SolveL1)->Arg(16)->Arg(64);

void BM_EvaluateAll(benchmark::State& state) {
  Fixture fx(static_cast<int>(state.range(0)));
  PropertyWeights w;
  w.lambda_robust = 0.5;
  w.lambda_smooth = 0.1;
  w.lambda_complex = 0.05;
  for (auto _ : state)
    benchmark::DoNotOptimize(evaluate_all(fx.gradients, fx.points, fx.f, fx.bundle, w));
}
BENCHMARK(BM_EvaluateAll)->Arg(64)->Arg(256)->Arg(1024);

void BM_Smoothgrad(benchmark::State& state) {
  Fixture fx(16);
  PerturbationSpec pert;
  pert.delta = 0.5;
  pert.samples = static_cast<int>(state.range(0));
  pert.seed = 11;
  const Eigen::VectorXd x = fx.points.point(0);
  for (auto _ : state) benchmark::DoNotOptimize(smoothgrad(fx.f, x, pert));
}
BENCHMARK(BM_Smoothgrad)->Arg(100)->Arg(1000)->Arg(10000);

void BM_KernelShapExhaustive(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  DifferentiableFunction f = make_benchmark("polynomial-with-cross-terms", d);
  PointSet points = generate_points(d, PointMode::uniform, 4, {-5.0, 5.0}, 3);
  const Eigen::VectorXd x = points.point(0);
  const Eigen::VectorXd background = domain_center(points);
  for (auto _ : state) benchmark::DoNotOptimize(kernel_shap(f, x, background, ShapOptions{}));
}
BENCHMARK(BM_KernelShapExhaustive)->Arg(4)->Arg(8)->Arg(12);

}  // namespace

BENCHMARK_MAIN();
