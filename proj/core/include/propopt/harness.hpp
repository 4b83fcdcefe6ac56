#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "propopt/baselines.hpp"
#include "propopt/solvers.hpp"

namespace propopt {

/// Which function a sweep explains: a registry family or an MLP weights file.
struct FunctionSpec {
  std::string name;            // registry name, empty when mlp_file is set
  int dimension = 0;
  std::vector<double> params;  // registry parameters (e.g. the power exponent)
  std::string mlp_file;        // path to MLP weights JSON
};

struct PointsSpec {
  PointMode mode = PointMode::grid;
  int count = 5;  // per dimension for grid, total for uniform
  Interval bounds{-5.0, 5.0};
  std::uint64_t seed = 0;
  int subsample = 0;  // optional seeded subsample (0 = keep all)
};

/// One method plus its hyperparameter grid. Our solvers take lambda grids;
/// sampling baselines take delta/samples grids and are scored under every
/// evaluation weight setting.
struct MethodSpec {
  std::string name;  // quadratic | l1 | maxdiff | smoothgrad | lime | kernel-shap
  std::vector<double> lambda_faithful{1.0};
  std::vector<double> lambda_robust{0.0};
  std::vector<double> lambda_smooth{0.0};
  std::vector<double> lambda_complex{0.0};
  std::vector<double> delta{1.0};
  std::vector<int> samples{1000};
  PerturbationKind distribution = PerturbationKind::gaussian;
  bool intercept = true;          // lime
  bool exhaustive = false;        // kernel-shap coalition enumeration
  std::vector<double> background; // kernel-shap; empty = domain center
};

struct EvaluationSpec {
  FaithfulnessForm faithfulness_form = FaithfulnessForm::gradient_match;
  RobustnessForm robustness_form = RobustnessForm::pairwise;
  /// Weight settings baselines are scored under; defaults to the distinct
  /// lambda grid points of the solver methods in the config.
  std::vector<PropertyWeights> weights;
};

struct SweepConfig {
  int schema = 1;
  std::uint64_t seed = 0;
  int workers = 0;              // 0 = PROPOPT_WORKERS env or hardware count
  bool measured_timing = false; // serialize measured wall_ms (breaks byte reproducibility)
  FunctionSpec function;
  PointsSpec points;
  SimilaritySpec similarity;
  DimSimilaritySpec dim_similarity;
  EvaluationSpec evaluation;
  std::vector<MethodSpec> methods;
  SolveOptions solver;

  void validate() const;  // throws ConfigError before any solve work starts
};

SweepConfig load_sweep_config(const std::string& path);
SweepConfig parse_sweep_config(const std::string& json_text);

struct SweepRow {
  std::string method;
  std::string function;
  int dimension = 0;
  int n_points = 0;
  std::optional<double> lambda_faithful, lambda_robust, lambda_smooth, lambda_complex;
  std::optional<double> delta;
  std::optional<int> samples;
  std::uint64_t seed = 0;
  std::optional<LossReport> report;  // absent on error rows
  double wall_ms = 0.0;
  std::string status = "ok";
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

/// Expands every method grid into rows and evaluates them on a worker pool.
/// Rows are ordered by grid enumeration order regardless of worker count,
/// and all randomness is derived from (config.seed, method, position), so
/// results are bit-identical across runs and thread counts. Individual solve
/// failures become rows with an error status instead of aborting the sweep.
SweepResult run_sweep(const SweepConfig& config);

/// Loss column accessor by name ("faithful_grad", ..., "total"; the
/// loss_-prefixed CSV spellings are accepted too).
double loss_field(const LossReport& report, const std::string& name);
bool is_loss_name(const std::string& name);

/// Rows not weakly dominated on (loss_x, loss_y): a row is dropped iff some
/// other row is <= on both losses and < on at least one. Exact duplicates
/// keep their earliest row. Error rows are excluded. Result is stably sorted
/// by loss_x ascending. Applying it twice is a no-op.
SweepResult pareto_front(const SweepResult& result, const std::string& loss_x,
                         const std::string& loss_y);

/// Exact column set, in order:
///   method,function,D,N,lambda_faithful,lambda_robust,lambda_smooth,
///   lambda_complex,delta,samples,seed,loss_faithful_grad,loss_faithful_fn,
///   loss_robust_pair,loss_robust_max,loss_smooth,loss_complex,total,
///   wall_ms,status
/// Floats carry 12 significant digits; absent fields are empty. wall_ms is
/// serialized as 0 unless measured_timing is set, keeping output
/// byte-reproducible.
void emit_csv(const SweepResult& result, const std::string& path, bool measured_timing = false);
std::string csv_header();

/// Reads back a CSV produced by emit_csv.
SweepResult parse_result_csv(const std::string& path);

/// Standalone SVG scatter of loss_x vs loss_y, one color per method, with
/// axes, tick labels and a legend. With log axes, non-positive values are
/// clamped to the axis minimum and annotated. Throws ConfigError when no row
/// has finite values for the requested losses.
void emit_svg_scatter(const SweepResult& result, const std::string& loss_x,
                      const std::string& loss_y, const std::string& path,
                      bool log_axes = false);

/// Worker count resolution: explicit config value, else PROPOPT_WORKERS,
/// else std::thread::hardware_concurrency().
int resolve_workers(const SweepConfig& config);

}  // namespace propopt
