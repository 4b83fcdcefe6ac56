#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "propopt/harness.hpp"
#include "propopt/rng.hpp"

namespace {

using namespace propopt;

void write_matrix_csv(const Eigen::MatrixXd& M, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  char buf[40];
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.12g", M(i, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

DifferentiableFunction build_function(const SweepConfig& cfg) {
  if (!cfg.function.mlp_file.empty()) return mlp_from_spec(load_mlp(cfg.function.mlp_file));
  return make_benchmark(cfg.function.name, cfg.function.dimension, cfg.function.params);
}

PointSet build_points(const SweepConfig& cfg, const DifferentiableFunction& f) {
  PointSet points = generate_points(f.dimension(), cfg.points.mode, cfg.points.count,
                                    cfg.points.bounds, cfg.points.seed);
  if (cfg.points.subsample > 0 && cfg.points.subsample < points.size())
    points = subsample_points(points, cfg.points.subsample, cfg.points.seed);
  return points;
}

int run_sweep_command(const std::string& cfg_path, const std::string& out_path, int workers,
                      bool seed_set, std::uint64_t seed, bool timing) {
  SweepConfig cfg = load_sweep_config(cfg_path);
  if (workers >= 0) cfg.workers = workers;
  if (seed_set) cfg.seed = seed;
  if (timing) cfg.measured_timing = true;
  const SweepResult result = run_sweep(cfg);
  emit_csv(result, out_path, cfg.measured_timing);
  std::size_t ok = 0;
  for (const SweepRow& row : result.rows) ok += row.status == "ok";
  std::cout << "wrote " << result.rows.size() << " rows (" << ok << " ok, "
            << result.rows.size() - ok << " failed) to " << out_path << "\n";
  return 0;
}

int run_pareto_command(const std::string& in_path, const std::string& out_path,
                       const std::string& x, const std::string& y) {
  if (!is_loss_name(x)) throw ConfigError("unknown loss name '" + x + "' for --x");
  if (!is_loss_name(y)) throw ConfigError("unknown loss name '" + y + "' for --y");
  const SweepResult input = parse_result_csv(in_path);
  const SweepResult front = pareto_front(input, x, y);
  emit_csv(front, out_path);
  std::cout << front.rows.size() << " of " << input.rows.size() << " rows are non-dominated on ("
            << x << ", " << y << "); wrote " << out_path << "\n";
  return 0;
}

int run_plot_command(const std::string& in_path, const std::string& out_path, const std::string& x,
                     const std::string& y, bool log_axes) {
  if (!is_loss_name(x)) throw ConfigError("unknown loss name '" + x + "' for --x");
  if (!is_loss_name(y)) throw ConfigError("unknown loss name '" + y + "' for --y");
  emit_svg_scatter(parse_result_csv(in_path), x, y, out_path, log_axes);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int run_explain_command(const std::string& cfg_path, const std::string& method_name,
                        const std::string& out_path) {
  SweepConfig cfg = load_sweep_config(cfg_path);
  const MethodSpec* method = nullptr;
  for (const MethodSpec& m : cfg.methods)
    if (method_name.empty() || m.name == method_name) {
      method = &m;
      break;
    }
  if (!method)
    throw ConfigError("method '" + method_name + "' is not listed in the sweep config");

  const DifferentiableFunction f = build_function(cfg);
  const PointSet points = build_points(cfg, f);
  const SimilarityBundle bundle = build_bundle(points, cfg.similarity, cfg.dim_similarity);

  // One explanation matrix at the first grid point of every hyperparameter.
  ExplanationMatrix W;
  PropertyWeights weights = cfg.evaluation.weights.front();
  if (method->name == "quadratic" || method->name == "l1" || method->name == "maxdiff") {
    weights.lambda_faithful = method->lambda_faithful.front();
    weights.lambda_robust = method->lambda_robust.front();
    weights.lambda_smooth = method->lambda_smooth.front();
    weights.lambda_complex = method->lambda_complex.front();
    weights.faithfulness_form = FaithfulnessForm::gradient_match;
    weights.robustness_form = method->name == "maxdiff" ? RobustnessForm::max_difference
                                                        : RobustnessForm::pairwise;
    TransductiveProblem problem{points, f.gradients(points), bundle, weights, cfg.solver};
    if (method->name == "quadratic")
      W = solve_quadratic(problem);
    else if (method->name == "l1")
      W = solve_l1(problem);
    else
      W = solve_maxdiff(problem);
  } else {
    const std::uint64_t method_seed = mix_seed(cfg.seed, hash_string(method->name));
    if (method->name == "kernel-shap") {
      Eigen::VectorXd background;
      if (method->background.empty()) {
        background = domain_center(points);
      } else {
        if (static_cast<int>(method->background.size()) != f.dimension())
          throw ConfigError("kernel-shap background dimension does not match the function");
        background = Eigen::Map<const Eigen::VectorXd>(
            method->background.data(), static_cast<Eigen::Index>(method->background.size()));
      }
      ShapOptions opts;
      opts.sample_coalitions = method->exhaustive ? 0 : method->samples.front();
      opts.seed = mix_seed(method_seed, static_cast<std::uint64_t>(method->samples.front()));
      W = kernel_shap_matrix(f, points, background, opts);
    } else {
      PerturbationSpec pert;
      pert.distribution = method->distribution;
      pert.delta = method->delta.front();
      pert.samples = method->samples.front();
      pert.seed = mix_seed(method_seed, static_cast<std::uint64_t>(method->samples.front()));
      if (method->name == "smoothgrad") {
        W = smoothgrad_matrix(f, points, pert);
      } else {
        LimeOptions opts;
        opts.intercept = method->intercept;
        W = lime_matrix(f, points, pert, opts);
      }
    }
  }
  write_matrix_csv(W, out_path);
  const LossReport report = evaluate_all(W, points, f, bundle, weights);
  std::cout << method->name << " on " << f.name() << ": N=" << points.size()
            << " D=" << f.dimension() << "\n"
            << "  faithful_grad=" << report.faithful_grad << " faithful_fn=" << report.faithful_fn
            << " robust_pair=" << report.robust_pair << " robust_max=" << report.robust_max
            << "\n  smooth=" << report.smooth << " complex=" << report.complex_
            << " total=" << report.total << "\n"
            << "wrote " << W.rows() << "x" << W.cols() << " matrix to " << out_path << "\n";
  return 0;
}

int run_check_command(const std::string& cfg_path) {
  const SweepConfig cfg = load_sweep_config(cfg_path);
  const DifferentiableFunction f = build_function(cfg);
  const PointSet points = build_points(cfg, f);
  build_bundle(points, cfg.similarity, cfg.dim_similarity);
  const PointSet probe =
      points.size() > 64 ? subsample_points(points, 64, 0) : points;
  const double err = gradient_check(f, probe);
  std::cout << "config ok: " << f.name() << " D=" << f.dimension() << ", " << points.size()
            << " points, " << cfg.methods.size() << " methods\n"
            << "gradient check (max relative error over " << probe.size()
            << " points): " << err << "\n";
  if (err > 1e-3) {
    std::cerr << "gradient check exceeds 1e-3; analytic and numeric gradients disagree\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"propopt: feature attributions optimized directly for explanation properties"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "propopt 0.1.0");

  std::string cfg_path, in_path, out_path, method_name;
  std::string x_name = "faithful_grad", y_name = "robust_pair";
  int workers = -1;
  std::uint64_t seed = 0;
  bool timing = false, log_axes = false;

  CLI::App* sweep = app.add_subcommand("sweep", "Run a sweep config and write a results CSV");
  sweep->add_option("--config", cfg_path, "sweep config JSON")->required();
  sweep->add_option("--out", out_path, "output CSV path")->required();
  sweep->add_option("--workers", workers, "override the worker count");
  CLI::Option* seed_opt = sweep->add_option("--seed", seed, "override the base seed");
  sweep->add_flag("--timing", timing, "serialize measured wall times (output no longer "
                                      "byte-reproducible)");

  CLI::App* pareto = app.add_subcommand("pareto", "Filter a results CSV to its Pareto front");
  pareto->add_option("--in", in_path, "input results CSV")->required();
  pareto->add_option("--out", out_path, "output CSV path")->required();
  pareto->add_option("--x", x_name, "x-axis loss column");
  pareto->add_option("--y", y_name, "y-axis loss column");

  CLI::App* plot = app.add_subcommand("plot", "Render a results CSV as an SVG scatter plot");
  plot->add_option("--in", in_path, "input results CSV")->required();
  plot->add_option("--out", out_path, "output SVG path")->required();
  plot->add_option("--x", x_name, "x-axis loss column");
  plot->add_option("--y", y_name, "y-axis loss column");
  plot->add_flag("--log", log_axes, "logarithmic axes");

  CLI::App* explain = app.add_subcommand(
      "explain", "Run one method at its first grid point and write the explanation matrix");
  explain->add_option("--config", cfg_path, "sweep config JSON")->required();
  explain->add_option("--method", method_name, "method name (default: first in the config)");
  explain->add_option("--out", out_path, "output matrix CSV path")->required();

  CLI::App* check = app.add_subcommand("check", "Validate a config and its analytic gradients");
  check->add_option("--config", cfg_path, "sweep config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (sweep->parsed())
      return run_sweep_command(cfg_path, out_path, workers, seed_opt->count() > 0, seed, timing);
    if (pareto->parsed()) return run_pareto_command(in_path, out_path, x_name, y_name);
    if (plot->parsed()) return run_plot_command(in_path, out_path, x_name, y_name, log_axes);
    if (explain->parsed()) return run_explain_command(cfg_path, method_name, out_path);
    if (check->parsed()) return run_check_command(cfg_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << error_kind(e) << ": " << e.what() << "\n";
    return 2;
  }
  return 0;
}
