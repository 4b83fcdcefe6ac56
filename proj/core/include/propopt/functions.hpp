#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "propopt/errors.hpp"

namespace propopt {

/// Closed interval [lo, hi].
struct Interval {
  double lo = -5.0;
  double hi = 5.0;
};

/// An ordered set of N points in R^D with per-dimension closed bounds.
/// Row n of points() is the n-th input location.
class PointSet {
 public:
  PointSet(Eigen::MatrixXd points, Interval bounds);
  PointSet(Eigen::MatrixXd points, std::vector<Interval> bounds);

  int size() const { return static_cast<int>(points_.rows()); }
  int dimension() const { return static_cast<int>(points_.cols()); }
  const Eigen::MatrixXd& points() const { return points_; }
  const std::vector<Interval>& bounds() const { return bounds_; }
  Eigen::VectorXd point(int n) const { return points_.row(n).transpose(); }

 private:
  void validate() const;

  Eigen::MatrixXd points_;         // N x D
  std::vector<Interval> bounds_;   // size D
};

/// A scalar function f: R^D -> R with an analytic gradient.
class DifferentiableFunction {
 public:
  using Eval = std::function<double(const Eigen::VectorXd&)>;
  using Grad = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

  DifferentiableFunction(std::string name, int dimension, Eval value, Grad gradient);

  const std::string& name() const { return name_; }
  int dimension() const { return dimension_; }

  double value(const Eigen::VectorXd& x) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;

  /// Stacked gradients, one row per point: N x D.
  Eigen::MatrixXd gradients(const PointSet& points) const;
  /// Function values at every point: length N.
  Eigen::VectorXd values(const PointSet& points) const;

 private:
  std::string name_;
  int dimension_;
  Eval value_;
  Grad gradient_;
};

/// Instantiates one of the built-in benchmark families by name.
///
/// Families (all separable sums over dimensions unless noted):
///   power                      sum_d x_d^K, exponent K = params[0], integer K >= 1
///   polynomial-with-cross-terms sum_d x_d^2 + sum_{d,d'} x_d x_{d'}  (all ordered pairs)
///   sum-sin                    sum_d sin(x_d)
///   sum-exp                    sum_d exp(x_d)
///   sin-of-exp                 sum_d sin(exp(x_d))
///   linear-plus-sin-exp        sum_d x_d + sin(exp(x_d))
///   quadratic-plus-sin-3x      sum_d x_d^2/10 + sin(3 x_d)
///   linear-plus-sin-3x         sum_d x_d + sin(3 x_d)
///
/// Throws ConfigError for unknown names or invalid params.
DifferentiableFunction make_benchmark(const std::string& name, int dimension,
                                      const std::vector<double>& params = {});

/// Names accepted by make_benchmark.
std::vector<std::string> benchmark_names();

enum class Activation { tanh, relu, identity };

Activation activation_from_string(const std::string& s);
std::string activation_to_string(Activation a);

struct MlpLayer {
  Eigen::MatrixXd weights;  // fan_out x fan_in
  Eigen::VectorXd bias;     // fan_out
  Activation activation = Activation::tanh;
};

/// A fully connected scalar-output network. The final layer must have a
/// single output row.
struct MlpSpec {
  int input_dim = 0;
  std::vector<MlpLayer> layers;

  void validate() const;  // throws ConfigError on shape mismatches
};

/// JSON schema:
///   {"input_dim": D, "layers": [{"W": [[...]], "b": [...], "activation": "tanh"}]}
MlpSpec load_mlp(const std::string& path);
void save_mlp(const MlpSpec& spec, const std::string& path);

/// Random network with tanh/relu/identity activation, He-style 1/sqrt(fan_in)
/// weight scale. hidden lists the hidden layer widths; output is scalar.
MlpSpec make_random_mlp(int input_dim, const std::vector<int>& hidden, Activation activation,
                        std::uint64_t seed);

/// Wraps an MLP as a DifferentiableFunction; the gradient is exact
/// reverse-mode differentiation. relu uses subgradient 0 at exactly 0.
DifferentiableFunction mlp_from_spec(const MlpSpec& spec);

/// Max over points and dimensions of the relative disagreement between the
/// analytic gradient and a central finite difference with the given step:
///   |analytic - numeric| / (1 + |analytic|).
double gradient_check(const DifferentiableFunction& f, const PointSet& points,
                      double step = 1e-5);

enum class PointMode { grid, uniform };

/// grid: count points per dimension, inclusive equally spaced lattice over
/// bounds (count^D total, rejected above 1e7). Last dimension varies fastest.
/// uniform: count i.i.d. uniform draws from the box, seeded.
PointSet generate_points(int dimension, PointMode mode, int count, Interval bounds,
                         std::uint64_t seed = 0);

/// Seeded subsample without replacement; keeps the original relative order.
PointSet subsample_points(const PointSet& points, int count, std::uint64_t seed);

}  // namespace propopt
