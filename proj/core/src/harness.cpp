#include "propopt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "propopt/rng.hpp"

namespace propopt {

namespace {

using nlohmann::json;

[[noreturn]] void bad_config(const std::string& message) { throw ConfigError(message); }

void check_keys(const json& j, const char* where, std::initializer_list<std::string_view> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (std::string_view a : allowed)
      if (it.key() == a) {
        known = true;
        break;
      }
    if (!known) bad_config("unknown key '" + it.key() + "' in " + where);
  }
}

const json& member(const json& j, const char* key, const char* where) {
  auto it = j.find(key);
  if (it == j.end()) bad_config(std::string("missing key '") + key + "' in " + where);
  return *it;
}

double as_double(const json& j, const char* where) {
  if (!j.is_number()) bad_config(std::string(where) + " must be a number");
  return j.get<double>();
}

int as_int(const json& j, const char* where) {
  if (!j.is_number_integer()) bad_config(std::string(where) + " must be an integer");
  return j.get<int>();
}

bool as_bool(const json& j, const char* where) {
  if (!j.is_boolean()) bad_config(std::string(where) + " must be a boolean");
  return j.get<bool>();
}

std::string as_string(const json& j, const char* where) {
  if (!j.is_string()) bad_config(std::string(where) + " must be a string");
  return j.get<std::string>();
}

/// A grid field: a single number or a non-empty array of numbers.
std::vector<double> as_double_list(const json& j, const char* where) {
  if (j.is_number()) return {j.get<double>()};
  if (!j.is_array() || j.empty())
    bad_config(std::string(where) + " must be a number or a non-empty array of numbers");
  std::vector<double> out;
  for (const auto& el : j) {
    if (!el.is_number()) bad_config(std::string(where) + " entries must be numbers");
    out.push_back(el.get<double>());
  }
  return out;
}

std::vector<int> as_int_list(const json& j, const char* where) {
  if (j.is_number_integer()) return {j.get<int>()};
  if (!j.is_array() || j.empty())
    bad_config(std::string(where) + " must be an integer or a non-empty array of integers");
  std::vector<int> out;
  for (const auto& el : j) {
    if (!el.is_number_integer()) bad_config(std::string(where) + " entries must be integers");
    out.push_back(el.get<int>());
  }
  return out;
}

FunctionSpec parse_function(const json& j) {
  if (!j.is_object()) bad_config("'function' must be an object");
  check_keys(j, "'function'", {"name", "dimension", "params", "mlp_file"});
  FunctionSpec spec;
  if (j.contains("name")) spec.name = as_string(j.at("name"), "function.name");
  if (j.contains("mlp_file")) spec.mlp_file = as_string(j.at("mlp_file"), "function.mlp_file");
  if (j.contains("dimension")) spec.dimension = as_int(j.at("dimension"), "function.dimension");
  if (j.contains("params")) spec.params = as_double_list(j.at("params"), "function.params");
  return spec;
}

PointsSpec parse_points(const json& j) {
  if (!j.is_object()) bad_config("'points' must be an object");
  check_keys(j, "'points'", {"mode", "count", "bounds", "seed", "subsample"});
  PointsSpec spec;
  if (j.contains("mode")) {
    const std::string mode = as_string(j.at("mode"), "points.mode");
    if (mode == "grid")
      spec.mode = PointMode::grid;
    else if (mode == "uniform")
      spec.mode = PointMode::uniform;
    else
      bad_config("points.mode must be 'grid' or 'uniform'");
  }
  if (j.contains("count")) spec.count = as_int(j.at("count"), "points.count");
  if (j.contains("bounds")) {
    const json& b = j.at("bounds");
    if (!b.is_array() || b.size() != 2) bad_config("points.bounds must be [lo, hi]");
    spec.bounds.lo = as_double(b.at(0), "points.bounds[0]");
    spec.bounds.hi = as_double(b.at(1), "points.bounds[1]");
  }
  if (j.contains("seed")) spec.seed = member(j, "seed", "'points'").get<std::uint64_t>();
  if (j.contains("subsample")) spec.subsample = as_int(j.at("subsample"), "points.subsample");
  return spec;
}

SimilaritySpec parse_similarity(const json& j) {
  if (!j.is_object()) bad_config("'similarity' must be an object");
  check_keys(j, "'similarity'", {"kind", "scale", "ridge", "custom_file"});
  SimilaritySpec spec;
  if (j.contains("kind"))
    spec.kind = similarity_kind_from_string(as_string(j.at("kind"), "similarity.kind"));
  if (j.contains("scale")) spec.scale = as_double(j.at("scale"), "similarity.scale");
  if (j.contains("ridge")) spec.ridge = as_double(j.at("ridge"), "similarity.ridge");
  if (j.contains("custom_file"))
    spec.custom = load_matrix_csv(as_string(j.at("custom_file"), "similarity.custom_file"));
  return spec;
}

DimSimilaritySpec parse_dim_similarity(const json& j) {
  if (!j.is_object()) bad_config("'dim_similarity' must be an object");
  check_keys(j, "'dim_similarity'", {"scheme", "height", "width", "custom_file"});
  DimSimilaritySpec spec;
  if (j.contains("scheme")) {
    const std::string s = as_string(j.at("scheme"), "dim_similarity.scheme");
    if (s == "chain")
      spec.scheme = DimScheme::chain;
    else if (s == "image-grid" || s == "image_grid")
      spec.scheme = DimScheme::image_grid;
    else if (s == "custom")
      spec.scheme = DimScheme::custom;
    else
      bad_config("dim_similarity.scheme must be 'chain', 'image-grid' or 'custom'");
  }
  if (j.contains("height")) spec.height = as_int(j.at("height"), "dim_similarity.height");
  if (j.contains("width")) spec.width = as_int(j.at("width"), "dim_similarity.width");
  if (j.contains("custom_file"))
    spec.custom = load_matrix_csv(as_string(j.at("custom_file"), "dim_similarity.custom_file"));
  return spec;
}

MethodSpec parse_method(const json& j, std::size_t index) {
  const std::string where = "methods[" + std::to_string(index) + "]";
  if (!j.is_object()) bad_config("'" + where + "' must be an object");
  check_keys(j, where.c_str(),
             {"name", "lambda_faithful", "lambda_robust", "lambda_smooth", "lambda_complex",
              "delta", "samples", "distribution", "intercept", "exhaustive", "background"});
  MethodSpec m;
  m.name = as_string(member(j, "name", where.c_str()), (where + ".name").c_str());
  if (m.name == "kernel_shap") m.name = "kernel-shap";
  if (j.contains("lambda_faithful"))
    m.lambda_faithful = as_double_list(j.at("lambda_faithful"), (where + ".lambda_faithful").c_str());
  if (j.contains("lambda_robust"))
    m.lambda_robust = as_double_list(j.at("lambda_robust"), (where + ".lambda_robust").c_str());
  if (j.contains("lambda_smooth"))
    m.lambda_smooth = as_double_list(j.at("lambda_smooth"), (where + ".lambda_smooth").c_str());
  if (j.contains("lambda_complex"))
    m.lambda_complex = as_double_list(j.at("lambda_complex"), (where + ".lambda_complex").c_str());
  if (j.contains("delta")) m.delta = as_double_list(j.at("delta"), (where + ".delta").c_str());
  if (j.contains("samples")) m.samples = as_int_list(j.at("samples"), (where + ".samples").c_str());
  if (j.contains("distribution"))
    m.distribution = perturbation_kind_from_string(
        as_string(j.at("distribution"), (where + ".distribution").c_str()));
  if (j.contains("intercept")) m.intercept = as_bool(j.at("intercept"), (where + ".intercept").c_str());
  if (j.contains("exhaustive"))
    m.exhaustive = as_bool(j.at("exhaustive"), (where + ".exhaustive").c_str());
  if (j.contains("background"))
    m.background = as_double_list(j.at("background"), (where + ".background").c_str());
  return m;
}

bool is_solver_method(const std::string& name) {
  return name == "quadratic" || name == "l1" || name == "maxdiff";
}

bool is_baseline_method(const std::string& name) {
  return name == "smoothgrad" || name == "lime" || name == "kernel-shap";
}

EvaluationSpec parse_evaluation(const json& j) {
  if (!j.is_object()) bad_config("'evaluation' must be an object");
  check_keys(j, "'evaluation'", {"faithfulness", "robustness", "weights"});
  EvaluationSpec spec;
  if (j.contains("faithfulness"))
    spec.faithfulness_form =
        faithfulness_form_from_string(as_string(j.at("faithfulness"), "evaluation.faithfulness"));
  if (j.contains("robustness"))
    spec.robustness_form =
        robustness_form_from_string(as_string(j.at("robustness"), "evaluation.robustness"));
  if (j.contains("weights")) {
    const json& w = j.at("weights");
    if (!w.is_array()) bad_config("evaluation.weights must be an array of weight objects");
    for (std::size_t i = 0; i < w.size(); ++i) {
      const json& e = w.at(i);
      const std::string where = "evaluation.weights[" + std::to_string(i) + "]";
      if (!e.is_object()) bad_config(where + " must be an object");
      check_keys(e, where.c_str(),
                 {"lambda_faithful", "lambda_robust", "lambda_smooth", "lambda_complex"});
      PropertyWeights pw;
      if (e.contains("lambda_faithful"))
        pw.lambda_faithful = as_double(e.at("lambda_faithful"), (where + ".lambda_faithful").c_str());
      if (e.contains("lambda_robust"))
        pw.lambda_robust = as_double(e.at("lambda_robust"), (where + ".lambda_robust").c_str());
      if (e.contains("lambda_smooth"))
        pw.lambda_smooth = as_double(e.at("lambda_smooth"), (where + ".lambda_smooth").c_str());
      if (e.contains("lambda_complex"))
        pw.lambda_complex = as_double(e.at("lambda_complex"), (where + ".lambda_complex").c_str());
      spec.weights.push_back(pw);
    }
  }
  return spec;
}

SolveOptions parse_solver(const json& j) {
  if (!j.is_object()) bad_config("'solver' must be an object");
  check_keys(j, "'solver'", {"tol", "max_iters", "warm_start", "stall_tol"});
  SolveOptions opts;
  if (j.contains("tol")) opts.tol = as_double(j.at("tol"), "solver.tol");
  if (j.contains("max_iters")) opts.max_iters = as_int(j.at("max_iters"), "solver.max_iters");
  if (j.contains("warm_start")) opts.warm_start = as_bool(j.at("warm_start"), "solver.warm_start");
  if (j.contains("stall_tol")) opts.stall_tol = as_double(j.at("stall_tol"), "solver.stall_tol");
  return opts;
}

bool same_lambdas(const PropertyWeights& a, const PropertyWeights& b) {
  return a.lambda_faithful == b.lambda_faithful && a.lambda_robust == b.lambda_robust &&
         a.lambda_smooth == b.lambda_smooth && a.lambda_complex == b.lambda_complex;
}

}  // namespace

SweepConfig parse_sweep_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    bad_config(std::string("sweep config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) bad_config("sweep config must be a JSON object");
  check_keys(j, "the sweep config",
             {"schema", "seed", "workers", "measured_timing", "function", "points", "similarity",
              "dim_similarity", "evaluation", "methods", "solver"});

  SweepConfig config;
  if (j.contains("schema")) config.schema = as_int(j.at("schema"), "schema");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_integer() && !j.at("seed").is_number_unsigned())
      bad_config("seed must be an integer");
    config.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("workers")) config.workers = as_int(j.at("workers"), "workers");
  if (j.contains("measured_timing"))
    config.measured_timing = as_bool(j.at("measured_timing"), "measured_timing");
  config.function = parse_function(member(j, "function", "the sweep config"));
  if (j.contains("points")) config.points = parse_points(j.at("points"));
  if (j.contains("similarity")) config.similarity = parse_similarity(j.at("similarity"));
  if (j.contains("dim_similarity"))
    config.dim_similarity = parse_dim_similarity(j.at("dim_similarity"));
  if (j.contains("evaluation")) config.evaluation = parse_evaluation(j.at("evaluation"));
  const json& methods = member(j, "methods", "the sweep config");
  if (!methods.is_array() || methods.empty())
    bad_config("'methods' must be a non-empty array");
  for (std::size_t i = 0; i < methods.size(); ++i)
    config.methods.push_back(parse_method(methods.at(i), i));
  if (j.contains("solver")) config.solver = parse_solver(j.at("solver"));

  // Scoring weights default to the distinct lambda combinations of the
  // solver methods, in grid enumeration order.
  if (config.evaluation.weights.empty()) {
    for (const MethodSpec& m : config.methods) {
      if (!is_solver_method(m.name)) continue;
      for (double lf : m.lambda_faithful)
        for (double lr : m.lambda_robust)
          for (double ls : m.lambda_smooth)
            for (double lc : m.lambda_complex) {
              PropertyWeights pw;
              pw.lambda_faithful = lf;
              pw.lambda_robust = lr;
              pw.lambda_smooth = ls;
              pw.lambda_complex = lc;
              bool seen = false;
              for (const PropertyWeights& q : config.evaluation.weights)
                if (same_lambdas(q, pw)) {
                  seen = true;
                  break;
                }
              if (!seen) config.evaluation.weights.push_back(pw);
            }
    }
    if (config.evaluation.weights.empty()) config.evaluation.weights.push_back(PropertyWeights{});
  }
  for (PropertyWeights& pw : config.evaluation.weights) {
    pw.faithfulness_form = config.evaluation.faithfulness_form;
    pw.robustness_form = config.evaluation.robustness_form;
  }

  config.validate();
  return config;
}

SweepConfig load_sweep_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) bad_config("cannot open sweep config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_sweep_config(buf.str());
}

void SweepConfig::validate() const {
  if (schema != 1) bad_config("unsupported sweep config schema " + std::to_string(schema));
  if (workers < 0) bad_config("workers must be >= 0");
  const bool has_name = !function.name.empty();
  const bool has_mlp = !function.mlp_file.empty();
  if (has_name == has_mlp)
    bad_config("function must set exactly one of 'name' and 'mlp_file'");
  if (has_name && function.dimension < 1)
    bad_config("function.dimension must be >= 1 for registry functions");
  if (function.dimension < 0) bad_config("function.dimension must be >= 0");
  if (points.count < 1) bad_config("points.count must be >= 1");
  if (!(points.bounds.lo < points.bounds.hi))
    bad_config("points.bounds must satisfy lo < hi");
  if (points.subsample < 0) bad_config("points.subsample must be >= 0");
  similarity.validate();
  if (methods.empty()) bad_config("at least one method is required");
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const MethodSpec& m = methods[i];
    const std::string where = "methods[" + std::to_string(i) + "] (" + m.name + ")";
    if (!is_solver_method(m.name) && !is_baseline_method(m.name))
      bad_config("unknown method '" + m.name +
                 "' (expected quadratic, l1, maxdiff, smoothgrad, lime or kernel-shap)");
    for (double v : m.lambda_faithful)
      if (!(v > 0.0) || !std::isfinite(v))
        bad_config(where + ": lambda_faithful entries must be positive and finite");
    for (double v : m.lambda_robust)
      if (v < 0.0 || !std::isfinite(v)) bad_config(where + ": lambda_robust entries must be >= 0");
    for (double v : m.lambda_smooth)
      if (v < 0.0 || !std::isfinite(v)) bad_config(where + ": lambda_smooth entries must be >= 0");
    for (double v : m.lambda_complex)
      if (v < 0.0 || !std::isfinite(v)) bad_config(where + ": lambda_complex entries must be >= 0");
    if (m.name == "quadratic" || m.name == "maxdiff") {
      for (double v : m.lambda_complex)
        if (v != 0.0) bad_config(where + " does not accept lambda_complex > 0");
    }
    if (m.name == "maxdiff") {
      for (double v : m.lambda_smooth)
        if (v != 0.0) bad_config(where + " does not accept lambda_smooth > 0");
    }
    if (is_baseline_method(m.name)) {
      for (double v : m.delta)
        if (!(v > 0.0) || !std::isfinite(v)) bad_config(where + ": delta entries must be > 0");
      for (int v : m.samples)
        if (v < 1) bad_config(where + ": samples entries must be >= 1");
    }
  }
  for (const PropertyWeights& w : evaluation.weights) w.validate();
  if (!(solver.tol > 0.0)) bad_config("solver.tol must be > 0");
  if (!(solver.stall_tol > 0.0)) bad_config("solver.stall_tol must be > 0");
  if (solver.max_iters < 1) bad_config("solver.max_iters must be >= 1");
}

int resolve_workers(const SweepConfig& config) {
  if (config.workers > 0) return config.workers;
  const char* env = std::getenv("PROPOPT_WORKERS");
  if (env != nullptr && *env != '\0') {  // an empty value counts as unset
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1 || v > 4096)
      bad_config("PROPOPT_WORKERS must be a positive integer");
    return static_cast<int>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

namespace {

/// One unit of work: a solver grid point (one row) or a baseline
/// (delta, samples) grid point scored under every evaluation weight setting
/// (one row per setting).
struct WorkItem {
  std::string method;
  PropertyWeights solve_weights;          // solver items
  PerturbationSpec pert;                  // smoothgrad / lime
  LimeOptions lime_options;               // lime
  ShapOptions shap_options;               // kernel-shap
  Eigen::VectorXd background;             // kernel-shap
  std::vector<PropertyWeights> scoring;   // one per output row
  std::size_t row_begin = 0;
};

struct SweepContext {
  const SweepConfig* config = nullptr;
  const DifferentiableFunction* f = nullptr;
  const PointSet* points = nullptr;
  const SimilarityBundle* bundle = nullptr;
  const Eigen::MatrixXd* gradients = nullptr;
};

void run_item(const SweepContext& ctx, const WorkItem& item, std::vector<SweepRow>& rows) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    ExplanationMatrix W;
    if (is_solver_method(item.method)) {
      TransductiveProblem problem{*ctx.points, *ctx.gradients, *ctx.bundle, item.solve_weights,
                                  ctx.config->solver};
      if (item.method == "quadratic")
        W = solve_quadratic(problem);
      else if (item.method == "l1")
        W = solve_l1(problem);
      else
        W = solve_maxdiff(problem);
    } else if (item.method == "smoothgrad") {
      W = smoothgrad_matrix(*ctx.f, *ctx.points, item.pert);
    } else if (item.method == "lime") {
      W = lime_matrix(*ctx.f, *ctx.points, item.pert, item.lime_options);
    } else {
      W = kernel_shap_matrix(*ctx.f, *ctx.points, item.background, item.shap_options);
    }
    for (std::size_t k = 0; k < item.scoring.size(); ++k) {
      SweepRow& row = rows[item.row_begin + k];
      row.report = evaluate_all(W, *ctx.points, *ctx.f, *ctx.bundle, item.scoring[k]);
      row.status = "ok";
    }
  } catch (const std::exception& e) {
    for (std::size_t k = 0; k < item.scoring.size(); ++k)
      rows[item.row_begin + k].status = error_kind(e);
  } catch (...) {
    for (std::size_t k = 0; k < item.scoring.size(); ++k)
      rows[item.row_begin + k].status = "error";
  }
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  for (std::size_t k = 0; k < item.scoring.size(); ++k) rows[item.row_begin + k].wall_ms = ms;
}

}  // namespace

SweepResult run_sweep(const SweepConfig& config) {
  config.validate();

  DifferentiableFunction f = [&] {
    if (!config.function.mlp_file.empty()) {
      const MlpSpec spec = load_mlp(config.function.mlp_file);
      if (config.function.dimension != 0 && config.function.dimension != spec.input_dim)
        bad_config("function.dimension does not match the MLP input dimension");
      return mlp_from_spec(spec);
    }
    return make_benchmark(config.function.name, config.function.dimension, config.function.params);
  }();

  PointSet points =
      generate_points(f.dimension(), config.points.mode, config.points.count, config.points.bounds,
                      config.points.seed);
  if (config.points.subsample > 0 && config.points.subsample < points.size())
    points = subsample_points(points, config.points.subsample, config.points.seed);

  const SimilarityBundle bundle = build_bundle(points, config.similarity, config.dim_similarity);
  const Eigen::MatrixXd gradients = f.gradients(points);

  // Build the full deterministic row plan up front; workers only fill in
  // results, so row order never depends on scheduling.
  std::vector<WorkItem> items;
  std::vector<SweepRow> rows;
  auto identity_row = [&](const std::string& method) {
    SweepRow row;
    row.method = method;
    row.function = f.name();
    row.dimension = f.dimension();
    row.n_points = points.size();
    row.seed = config.seed;
    row.status = "pending";
    return row;
  };

  for (const MethodSpec& m : config.methods) {
    if (is_solver_method(m.name)) {
      for (double lf : m.lambda_faithful)
        for (double lr : m.lambda_robust)
          for (double ls : m.lambda_smooth)
            for (double lc : m.lambda_complex) {
              WorkItem item;
              item.method = m.name;
              item.solve_weights.lambda_faithful = lf;
              item.solve_weights.lambda_robust = lr;
              item.solve_weights.lambda_smooth = ls;
              item.solve_weights.lambda_complex = lc;
              item.solve_weights.faithfulness_form = FaithfulnessForm::gradient_match;
              item.solve_weights.robustness_form = m.name == "maxdiff"
                                                       ? RobustnessForm::max_difference
                                                       : RobustnessForm::pairwise;
              item.scoring = {item.solve_weights};
              item.row_begin = rows.size();
              SweepRow row = identity_row(m.name);
              row.lambda_faithful = lf;
              row.lambda_robust = lr;
              row.lambda_smooth = ls;
              row.lambda_complex = lc;
              rows.push_back(std::move(row));
              items.push_back(std::move(item));
            }
      continue;
    }

    // Baselines: randomness is keyed on (config seed, method name, sample
    // count) but never on delta, so noise-scale sweeps share their draws.
    const std::uint64_t method_seed = mix_seed(config.seed, hash_string(m.name));
    if (m.name == "kernel-shap") {
      Eigen::VectorXd background;
      if (m.background.empty()) {
        background = domain_center(points);
      } else {
        if (static_cast<int>(m.background.size()) != f.dimension())
          bad_config("kernel-shap background dimension does not match the function");
        background = Eigen::Map<const Eigen::VectorXd>(m.background.data(),
                                                       static_cast<Eigen::Index>(m.background.size()));
      }
      for (int samples : m.samples) {
        WorkItem item;
        item.method = m.name;
        item.background = background;
        item.shap_options.sample_coalitions = m.exhaustive ? 0 : samples;
        item.shap_options.seed = mix_seed(method_seed, static_cast<std::uint64_t>(samples));
        item.scoring = config.evaluation.weights;
        item.row_begin = rows.size();
        std::optional<int> samples_column;
        if (m.exhaustive) {
          if (f.dimension() <= 20) samples_column = (1 << f.dimension()) - 2;
        } else {
          samples_column = samples;
        }
        for (const PropertyWeights& w : config.evaluation.weights) {
          SweepRow row = identity_row(m.name);
          row.lambda_faithful = w.lambda_faithful;
          row.lambda_robust = w.lambda_robust;
          row.lambda_smooth = w.lambda_smooth;
          row.lambda_complex = w.lambda_complex;
          row.samples = samples_column;
          row.seed = item.shap_options.seed;
          rows.push_back(std::move(row));
        }
        items.push_back(std::move(item));
        if (m.exhaustive) break;  // the samples grid is irrelevant when enumerating
      }
      continue;
    }

    for (double delta : m.delta)
      for (int samples : m.samples) {
        WorkItem item;
        item.method = m.name;
        item.pert.distribution = m.distribution;
        item.pert.delta = delta;
        item.pert.samples = samples;
        item.pert.seed = mix_seed(method_seed, static_cast<std::uint64_t>(samples));
        if (m.name == "lime") item.lime_options.intercept = m.intercept;
        item.scoring = config.evaluation.weights;
        item.row_begin = rows.size();
        for (const PropertyWeights& w : config.evaluation.weights) {
          SweepRow row = identity_row(m.name);
          row.lambda_faithful = w.lambda_faithful;
          row.lambda_robust = w.lambda_robust;
          row.lambda_smooth = w.lambda_smooth;
          row.lambda_complex = w.lambda_complex;
          row.delta = delta;
          row.samples = samples;
          row.seed = item.pert.seed;
          rows.push_back(std::move(row));
        }
        items.push_back(std::move(item));
      }
  }

  SweepContext ctx{&config, &f, &points, &bundle, &gradients};
  const int workers =
      std::min<int>(resolve_workers(config), static_cast<int>(std::max<std::size_t>(items.size(), 1)));
  if (workers <= 1) {
    for (const WorkItem& item : items) run_item(ctx, item, rows);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= items.size()) return;
        run_item(ctx, items[i], rows);
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  return SweepResult{std::move(rows)};
}

double loss_field(const LossReport& report, const std::string& name) {
  if (name == "faithful_grad" || name == "loss_faithful_grad") return report.faithful_grad;
  if (name == "faithful_fn" || name == "loss_faithful_fn") return report.faithful_fn;
  if (name == "robust_pair" || name == "loss_robust_pair") return report.robust_pair;
  if (name == "robust_max" || name == "loss_robust_max") return report.robust_max;
  if (name == "smooth" || name == "loss_smooth") return report.smooth;
  if (name == "complex" || name == "loss_complex") return report.complex_;
  if (name == "total") return report.total;
  throw ConfigError("unknown loss name '" + name + "'");
}

bool is_loss_name(const std::string& name) {
  static const char* names[] = {"faithful_grad", "loss_faithful_grad", "faithful_fn",
                                "loss_faithful_fn", "robust_pair", "loss_robust_pair",
                                "robust_max", "loss_robust_max", "smooth", "loss_smooth",
                                "complex", "loss_complex", "total"};
  for (const char* n : names)
    if (name == n) return true;
  return false;
}

SweepResult pareto_front(const SweepResult& result, const std::string& loss_x,
                         const std::string& loss_y) {
  struct Candidate {
    const SweepRow* row;
    double x, y;
  };
  std::vector<Candidate> cand;
  for (const SweepRow& row : result.rows) {
    if (row.status != "ok" || !row.report) continue;
    const double x = loss_field(*row.report, loss_x);
    const double y = loss_field(*row.report, loss_y);
    if (!std::isfinite(x) || !std::isfinite(y)) continue;
    cand.push_back({&row, x, y});
  }
  std::vector<Candidate> kept;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    bool drop = false;
    for (std::size_t j = 0; j < cand.size() && !drop; ++j) {
      if (j == i) continue;
      const bool leq = cand[j].x <= cand[i].x && cand[j].y <= cand[i].y;
      const bool strict = cand[j].x < cand[i].x || cand[j].y < cand[i].y;
      if (leq && strict) drop = true;                       // weakly dominated
      if (j < i && cand[j].x == cand[i].x && cand[j].y == cand[i].y)
        drop = true;                                        // duplicate keeps its first row
    }
    if (!drop) kept.push_back(cand[i]);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const Candidate& a, const Candidate& b) { return a.x < b.x; });
  SweepResult out;
  out.rows.reserve(kept.size());
  for (const Candidate& c : kept) out.rows.push_back(*c.row);
  return out;
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); }

std::string fmt_opt(const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); }

}  // namespace

std::string csv_header() {
  return "method,function,D,N,lambda_faithful,lambda_robust,lambda_smooth,lambda_complex,"
         "delta,samples,seed,loss_faithful_grad,loss_faithful_fn,loss_robust_pair,"
         "loss_robust_max,loss_smooth,loss_complex,total,wall_ms,status";
}

void emit_csv(const SweepResult& result, const std::string& path, bool measured_timing) {
  std::ostringstream out;
  out << csv_header() << '\n';
  for (const SweepRow& row : result.rows) {
    out << row.method << ',' << row.function << ',' << row.dimension << ',' << row.n_points << ','
        << fmt_opt(row.lambda_faithful) << ',' << fmt_opt(row.lambda_robust) << ','
        << fmt_opt(row.lambda_smooth) << ',' << fmt_opt(row.lambda_complex) << ','
        << fmt_opt(row.delta) << ',' << fmt_opt(row.samples) << ',' << row.seed << ',';
    if (row.report) {
      const LossReport& r = *row.report;
      out << fmt_double(r.faithful_grad) << ',' << fmt_double(r.faithful_fn) << ','
          << fmt_double(r.robust_pair) << ',' << fmt_double(r.robust_max) << ','
          << fmt_double(r.smooth) << ',' << fmt_double(r.complex_) << ',' << fmt_double(r.total);
    } else {
      out << ",,,,,,";
    }
    out << ',' << (measured_timing ? fmt_double(row.wall_ms) : std::string("0")) << ','
        << row.status << '\n';
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) bad_config("cannot open '" + path + "' for writing");
  file << out.str();
  if (!file) throw std::runtime_error("failed writing '" + path + "'");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double_field(const std::string& s, int line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    bad_config("line " + std::to_string(line_no) + ": bad numeric field '" + s + "'");
  }
}

int parse_int_field(const std::string& s, int line_no) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    bad_config("line " + std::to_string(line_no) + ": bad integer field '" + s + "'");
  }
}

}  // namespace

SweepResult parse_result_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) bad_config("cannot open results CSV '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) bad_config("results CSV '" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != csv_header()) bad_config("results CSV '" + path + "' has an unexpected header");

  SweepResult result;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 20)
      bad_config("line " + std::to_string(line_no) + ": expected 20 fields, got " +
                 std::to_string(f.size()));
    SweepRow row;
    row.method = f[0];
    row.function = f[1];
    row.dimension = parse_int_field(f[2], line_no);
    row.n_points = parse_int_field(f[3], line_no);
    if (!f[4].empty()) row.lambda_faithful = parse_double_field(f[4], line_no);
    if (!f[5].empty()) row.lambda_robust = parse_double_field(f[5], line_no);
    if (!f[6].empty()) row.lambda_smooth = parse_double_field(f[6], line_no);
    if (!f[7].empty()) row.lambda_complex = parse_double_field(f[7], line_no);
    if (!f[8].empty()) row.delta = parse_double_field(f[8], line_no);
    if (!f[9].empty()) row.samples = parse_int_field(f[9], line_no);
    try {
      row.seed = std::stoull(f[10]);
    } catch (const std::exception&) {
      bad_config("line " + std::to_string(line_no) + ": bad seed field '" + f[10] + "'");
    }
    int n_empty = 0;
    for (std::size_t k = 11; k <= 17; ++k)
      if (f[k].empty()) ++n_empty;
    if (n_empty != 0 && n_empty != 7)
      bad_config("line " + std::to_string(line_no) + ": partial loss fields");
    if (!f[11].empty()) {
      LossReport r;
      r.faithful_grad = parse_double_field(f[11], line_no);
      r.faithful_fn = parse_double_field(f[12], line_no);
      r.robust_pair = parse_double_field(f[13], line_no);
      r.robust_max = parse_double_field(f[14], line_no);
      r.smooth = parse_double_field(f[15], line_no);
      r.complex_ = parse_double_field(f[16], line_no);
      r.total = parse_double_field(f[17], line_no);
      row.report = r;
    }
    row.wall_ms = parse_double_field(f[18], line_no);
    row.status = f[19];
    result.rows.push_back(std::move(row));
  }
  return result;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

void emit_svg_scatter(const SweepResult& result, const std::string& loss_x,
                      const std::string& loss_y, const std::string& path, bool log_axes) {
  struct Point {
    double x, y;
    std::size_t method;
    bool clamped = false;
  };
  std::vector<std::string> methods;
  std::vector<Point> pts;
  for (const SweepRow& row : result.rows) {
    if (row.status != "ok" || !row.report) continue;
    const double x = loss_field(*row.report, loss_x);
    const double y = loss_field(*row.report, loss_y);
    if (!std::isfinite(x) || !std::isfinite(y)) continue;
    std::size_t m = methods.size();
    for (std::size_t i = 0; i < methods.size(); ++i)
      if (methods[i] == row.method) {
        m = i;
        break;
      }
    if (m == methods.size()) methods.push_back(row.method);
    pts.push_back({x, y, m, false});
  }
  if (pts.empty())
    bad_config("no rows with finite '" + loss_x + "' and '" + loss_y + "' values to plot");

  // Axis transforms. On log axes non-positive values are clamped to the
  // smallest positive value present and flagged in an annotation.
  int clamped = 0;
  auto prepare_axis = [&](auto get, auto set) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    if (log_axes) {
      for (const Point& p : pts) {
        const double v = get(p);
        if (v > 0.0) {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
      if (!std::isfinite(lo))
        bad_config("log axes requested but no positive values on one axis");
      for (Point& p : pts)
        if (get(p) <= 0.0) {
          set(p, lo);
          p.clamped = true;
          ++clamped;
        }
      return std::make_pair(std::log10(lo), std::log10(hi));
    }
    for (const Point& p : pts) {
      lo = std::min(lo, get(p));
      hi = std::max(hi, get(p));
    }
    return std::make_pair(lo, hi);
  };
  auto [tx_lo, tx_hi] = prepare_axis([](const Point& p) { return p.x; },
                                     [](Point& p, double v) { p.x = v; });
  auto [ty_lo, ty_hi] = prepare_axis([](const Point& p) { return p.y; },
                                     [](Point& p, double v) { p.y = v; });
  if (tx_hi - tx_lo < 1e-12) {
    tx_lo -= 0.5;
    tx_hi += 0.5;
  }
  if (ty_hi - ty_lo < 1e-12) {
    ty_lo -= 0.5;
    ty_hi += 0.5;
  }

  const double width = 760, height = 520;
  const double ml = 80, mr = 170, mt = 30, mb = 60;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto X = [&](double v) {
    const double t = log_axes ? std::log10(v) : v;
    return ml + (t - tx_lo) / (tx_hi - tx_lo) * pw;
  };
  auto Y = [&](double v) {
    const double t = log_axes ? std::log10(v) : v;
    return mt + ph - (t - ty_lo) / (ty_hi - ty_lo) * ph;
  };

  static const char* palette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44",
                                  "#66ccee", "#aa3377", "#bbbbbb", "#222222"};
  const std::size_t n_colors = sizeof(palette) / sizeof(palette[0]);

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  svg << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";

  // Frame.
  svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#999\"/>\n";

  // Ticks: decades on log axes, five even splits otherwise.
  auto emit_ticks = [&](bool horizontal, double t_lo, double t_hi) {
    std::vector<double> ticks;  // transformed coordinates
    if (log_axes) {
      const int k_lo = static_cast<int>(std::ceil(t_lo - 1e-9));
      const int k_hi = static_cast<int>(std::floor(t_hi + 1e-9));
      const int span = std::max(k_hi - k_lo, 0);
      const int step = span > 8 ? (span + 7) / 8 : 1;
      for (int k = k_lo; k <= k_hi; k += step) ticks.push_back(static_cast<double>(k));
      if (ticks.empty()) ticks = {t_lo, t_hi};
    } else {
      for (int i = 0; i <= 4; ++i) ticks.push_back(t_lo + (t_hi - t_lo) * i / 4.0);
    }
    for (double t : ticks) {
      const double value = log_axes ? std::pow(10.0, t) : t;
      const std::string label = fmt_tick(value);
      if (horizontal) {
        const double px = ml + (t - t_lo) / (t_hi - t_lo) * pw;
        svg << "<line x1=\"" << px << "\" y1=\"" << mt + ph << "\" x2=\"" << px << "\" y2=\""
            << mt + ph + 5 << "\" stroke=\"#999\"/>\n";
        svg << "<text x=\"" << px << "\" y=\"" << mt + ph + 18
            << "\" text-anchor=\"middle\">" << xml_escape(label) << "</text>\n";
      } else {
        const double py = mt + ph - (t - t_lo) / (t_hi - t_lo) * ph;
        svg << "<line x1=\"" << ml - 5 << "\" y1=\"" << py << "\" x2=\"" << ml << "\" y2=\"" << py
            << "\" stroke=\"#999\"/>\n";
        svg << "<text x=\"" << ml - 8 << "\" y=\"" << py + 4
            << "\" text-anchor=\"end\">" << xml_escape(label) << "</text>\n";
      }
    }
  };
  emit_ticks(true, tx_lo, tx_hi);
  emit_ticks(false, ty_lo, ty_hi);

  // Axis titles.
  svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 14
      << "\" text-anchor=\"middle\" font-size=\"13\">" << xml_escape(loss_x)
      << (log_axes ? " (log)" : "") << "</text>\n";
  svg << "<text x=\"18\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 " << mt + ph / 2
      << ")\">" << xml_escape(loss_y) << (log_axes ? " (log)" : "") << "</text>\n";

  // Data points.
  for (const Point& p : pts) {
    svg << "<circle class=\"pt\" cx=\"" << X(p.x) << "\" cy=\"" << Y(p.y)
        << "\" r=\"4\" fill=\"" << palette[p.method % n_colors] << "\" fill-opacity=\"0.75\""
        << (p.clamped ? " stroke=\"#d33\" stroke-width=\"1\"" : "") << "/>\n";
  }

  // Legend.
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const double ly = mt + 10 + 18 * static_cast<double>(i);
    svg << "<rect x=\"" << ml + pw + 14 << "\" y=\"" << ly - 9
        << "\" width=\"10\" height=\"10\" fill=\"" << palette[i % n_colors] << "\"/>\n";
    svg << "<text x=\"" << ml + pw + 30 << "\" y=\"" << ly << "\">" << xml_escape(methods[i])
        << "</text>\n";
  }
  if (clamped > 0) {
    svg << "<text x=\"" << ml << "\" y=\"" << height - 34 << "\" fill=\"#d33\">" << clamped
        << " non-positive value(s) clamped to the axis minimum (outlined)</text>\n";
  }
  svg << "</g>\n</svg>\n";

  std::ofstream file(path, std::ios::binary);
  if (!file) bad_config("cannot open '" + path + "' for writing");
  file << svg.str();
  if (!file) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace propopt
