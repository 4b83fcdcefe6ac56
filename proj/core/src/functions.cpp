#include "propopt/functions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>

#include <nlohmann/json.hpp>

#include "propopt/rng.hpp"

namespace propopt {

namespace {

void check_dimension(int dimension) {
  if (dimension < 1) throw ConfigError("dimension must be >= 1");
}

std::vector<Interval> replicate_bounds(Interval bounds, int dimension) {
  if (!(bounds.lo <= bounds.hi)) throw ConfigError("interval must satisfy lo <= hi");
  if (!std::isfinite(bounds.lo) || !std::isfinite(bounds.hi))
    throw ConfigError("interval bounds must be finite");
  return std::vector<Interval>(static_cast<std::size_t>(dimension), bounds);
}

}  // namespace

PointSet::PointSet(Eigen::MatrixXd points, Interval bounds)
    : points_(std::move(points)),
      bounds_(replicate_bounds(bounds, static_cast<int>(points_.cols()))) {
  validate();
}

PointSet::PointSet(Eigen::MatrixXd points, std::vector<Interval> bounds)
    : points_(std::move(points)), bounds_(std::move(bounds)) {
  validate();
}

void PointSet::validate() const {
  if (points_.rows() < 1) throw ConfigError("point set must contain at least one point");
  if (points_.cols() < 1) throw ConfigError("points must have dimension >= 1");
  if (bounds_.size() != static_cast<std::size_t>(points_.cols()))
    throw ConfigError("bounds size must match point dimension");
  for (const Interval& b : bounds_) {
    if (!(b.lo <= b.hi) || !std::isfinite(b.lo) || !std::isfinite(b.hi))
      throw ConfigError("interval must be finite with lo <= hi");
  }
  for (Eigen::Index n = 0; n < points_.rows(); ++n) {
    for (Eigen::Index d = 0; d < points_.cols(); ++d) {
      const double v = points_(n, d);
      if (!std::isfinite(v)) throw ConfigError("points must be finite");
      const Interval& b = bounds_[static_cast<std::size_t>(d)];
      if (v < b.lo || v > b.hi) throw ConfigError("point lies outside its bounds");
    }
  }
}

DifferentiableFunction::DifferentiableFunction(std::string name, int dimension, Eval value,
                                               Grad gradient)
    : name_(std::move(name)),
      dimension_(dimension),
      value_(std::move(value)),
      gradient_(std::move(gradient)) {
  check_dimension(dimension_);
  if (!value_ || !gradient_) throw ConfigError("function requires value and gradient callables");
}

double DifferentiableFunction::value(const Eigen::VectorXd& x) const {
  if (x.size() != dimension_) throw ConfigError("input dimension mismatch for " + name_);
  return value_(x);
}

Eigen::VectorXd DifferentiableFunction::gradient(const Eigen::VectorXd& x) const {
  if (x.size() != dimension_) throw ConfigError("input dimension mismatch for " + name_);
  Eigen::VectorXd g = gradient_(x);
  if (g.size() != dimension_)
    throw ConfigError("gradient dimension mismatch for " + name_);
  return g;
}

Eigen::MatrixXd DifferentiableFunction::gradients(const PointSet& points) const {
  if (points.dimension() != dimension_)
    throw ConfigError("point set dimension mismatch for " + name_);
  Eigen::MatrixXd G(points.size(), dimension_);
  for (int n = 0; n < points.size(); ++n) G.row(n) = gradient(points.point(n)).transpose();
  return G;
}

Eigen::VectorXd DifferentiableFunction::values(const PointSet& points) const {
  if (points.dimension() != dimension_)
    throw ConfigError("point set dimension mismatch for " + name_);
  Eigen::VectorXd v(points.size());
  for (int n = 0; n < points.size(); ++n) v(n) = value(points.point(n));
  return v;
}

namespace {

/// Separable family: f = sum_d unary(x_d), grad_d = unary'(x_d).
DifferentiableFunction make_separable(const std::string& name, int dimension,
                                      double (*unary)(double), double (*unary_grad)(double)) {
  return DifferentiableFunction(
      name, dimension,
      [unary](const Eigen::VectorXd& x) {
        double acc = 0.0;
        for (Eigen::Index d = 0; d < x.size(); ++d) acc += unary(x(d));
        return acc;
      },
      [unary_grad](const Eigen::VectorXd& x) {
        Eigen::VectorXd g(x.size());
        for (Eigen::Index d = 0; d < x.size(); ++d) g(d) = unary_grad(x(d));
        return g;
      });
}

void require_no_params(const std::string& name, const std::vector<double>& params) {
  if (!params.empty())
    throw ConfigError("benchmark '" + name + "' takes no parameters");
}

}  // namespace

DifferentiableFunction make_benchmark(const std::string& name, int dimension,
                                      const std::vector<double>& params) {
  check_dimension(dimension);
  if (name == "power") {
    if (params.size() != 1) throw ConfigError("power requires one parameter: the exponent");
    const double kd = params[0];
    if (!(kd >= 1.0) || kd != std::floor(kd))
      throw ConfigError("power exponent must be an integer >= 1");
    const int k = static_cast<int>(kd);
    return DifferentiableFunction(
        "power", dimension,
        [k](const Eigen::VectorXd& x) {
          double acc = 0.0;
          for (Eigen::Index d = 0; d < x.size(); ++d) acc += std::pow(x(d), k);
          return acc;
        },
        [k](const Eigen::VectorXd& x) {
          Eigen::VectorXd g(x.size());
          for (Eigen::Index d = 0; d < x.size(); ++d)
            g(d) = static_cast<double>(k) * std::pow(x(d), k - 1);
          return g;
        });
  }
  if (name == "polynomial-with-cross-terms") {
    require_no_params(name, params);
    // f = sum_d x_d^2 + sum_{d,d'} x_d x_d' = ||x||^2 + (sum x)^2
    // grad_j = 2 x_j + 2 sum_d x_d
    return DifferentiableFunction(
        name, dimension,
        [](const Eigen::VectorXd& x) {
          const double s = x.sum();
          return x.squaredNorm() + s * s;
        },
        [](const Eigen::VectorXd& x) {
          const double s = x.sum();
          return Eigen::VectorXd(2.0 * x.array() + 2.0 * s);
        });
  }
  if (name == "sum-sin") {
    require_no_params(name, params);
    return make_separable(name, dimension, [](double v) { return std::sin(v); },
                          [](double v) { return std::cos(v); });
  }
  if (name == "sum-exp") {
    require_no_params(name, params);
    return make_separable(name, dimension, [](double v) { return std::exp(v); },
                          [](double v) { return std::exp(v); });
  }
  if (name == "sin-of-exp") {
    require_no_params(name, params);
    return make_separable(
        name, dimension, [](double v) { return std::sin(std::exp(v)); },
        [](double v) { return std::cos(std::exp(v)) * std::exp(v); });
  }
  if (name == "linear-plus-sin-exp") {
    require_no_params(name, params);
    return make_separable(
        name, dimension, [](double v) { return v + std::sin(std::exp(v)); },
        [](double v) { return 1.0 + std::cos(std::exp(v)) * std::exp(v); });
  }
  if (name == "quadratic-plus-sin-3x") {
    require_no_params(name, params);
    return make_separable(
        name, dimension, [](double v) { return v * v / 10.0 + std::sin(3.0 * v); },
        [](double v) { return v / 5.0 + 3.0 * std::cos(3.0 * v); });
  }
  if (name == "linear-plus-sin-3x") {
    require_no_params(name, params);
    return make_separable(
        name, dimension, [](double v) { return v + std::sin(3.0 * v); },
        [](double v) { return 1.0 + 3.0 * std::cos(3.0 * v); });
  }
  throw ConfigError("unknown benchmark function '" + name + "'");
}

std::vector<std::string> benchmark_names() {
  return {"power",         "polynomial-with-cross-terms",
          "sum-sin",       "sum-exp",
          "sin-of-exp",    "linear-plus-sin-exp",
          "quadratic-plus-sin-3x", "linear-plus-sin-3x"};
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

std::string activation_to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  throw ConfigError("invalid activation enum value");
}

void MlpSpec::validate() const {
  if (input_dim < 1) throw ConfigError("MLP input_dim must be >= 1");
  if (layers.empty()) throw ConfigError("MLP must have at least one layer");
  Eigen::Index fan_in = input_dim;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const MlpLayer& layer = layers[l];
    if (layer.weights.cols() != fan_in)
      throw ConfigError("MLP layer " + std::to_string(l) + " expects fan-in " +
                        std::to_string(fan_in) + ", got " +
                        std::to_string(layer.weights.cols()));
    if (layer.weights.rows() < 1)
      throw ConfigError("MLP layer " + std::to_string(l) + " has no outputs");
    if (layer.bias.size() != layer.weights.rows())
      throw ConfigError("MLP layer " + std::to_string(l) + " bias size mismatch");
    if (!layer.weights.allFinite() || !layer.bias.allFinite())
      throw ConfigError("MLP weights must be finite");
    fan_in = layer.weights.rows();
  }
  if (fan_in != 1) throw ConfigError("MLP output layer must be scalar");
}

MlpSpec load_mlp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open MLP weights file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid JSON in '" + path + "': " + e.what());
  }
  MlpSpec spec;
  try {
    spec.input_dim = j.at("input_dim").get<int>();
    for (const auto& jl : j.at("layers")) {
      MlpLayer layer;
      const auto& w = jl.at("W");
      const std::size_t rows = w.size();
      if (rows == 0) throw ConfigError("MLP layer has empty weight matrix");
      const std::size_t cols = w.at(0).size();
      layer.weights.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      for (std::size_t r = 0; r < rows; ++r) {
        if (w.at(r).size() != cols)
          throw ConfigError("MLP weight matrix rows have inconsistent lengths");
        for (std::size_t c = 0; c < cols; ++c)
          layer.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
              w.at(r).at(c).get<double>();
      }
      const auto& b = jl.at("b");
      layer.bias.resize(static_cast<Eigen::Index>(b.size()));
      for (std::size_t r = 0; r < b.size(); ++r)
        layer.bias(static_cast<Eigen::Index>(r)) = b.at(r).get<double>();
      layer.activation = activation_from_string(jl.at("activation").get<std::string>());
      spec.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed MLP weights in '" + path + "': " + e.what());
  }
  spec.validate();
  return spec;
}

void save_mlp(const MlpSpec& spec, const std::string& path) {
  spec.validate();
  nlohmann::json j;
  j["input_dim"] = spec.input_dim;
  j["layers"] = nlohmann::json::array();
  for (const MlpLayer& layer : spec.layers) {
    nlohmann::json jl;
    auto w = nlohmann::json::array();
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      auto row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) row.push_back(layer.weights(r, c));
      w.push_back(std::move(row));
    }
    jl["W"] = std::move(w);
    auto b = nlohmann::json::array();
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) b.push_back(layer.bias(r));
    jl["b"] = std::move(b);
    jl["activation"] = activation_to_string(layer.activation);
    j["layers"].push_back(std::move(jl));
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write MLP weights file '" + path + "'");
  out << j.dump(2) << "\n";
}

MlpSpec make_random_mlp(int input_dim, const std::vector<int>& hidden, Activation activation,
                        std::uint64_t seed) {
  check_dimension(input_dim);
  Rng rng(mix_seed(seed, 0x6d6c70));
  MlpSpec spec;
  spec.input_dim = input_dim;
  int fan_in = input_dim;
  std::vector<int> widths = hidden;
  widths.push_back(1);  // scalar head
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const int fan_out = widths[l];
    if (fan_out < 1) throw ConfigError("hidden layer widths must be >= 1");
    MlpLayer layer;
    layer.weights.resize(fan_out, fan_in);
    layer.bias.resize(fan_out);
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.weights(r, c) = scale * rng.normal();
      layer.bias(r) = 0.1 * rng.normal();
    }
    layer.activation = (l + 1 == widths.size()) ? Activation::identity : activation;
    spec.layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  spec.validate();
  return spec;
}

namespace {

double apply_activation(Activation a, double z) {
  switch (a) {
    case Activation::tanh: return std::tanh(z);
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::identity: return z;
  }
  return z;
}

// relu derivative at exactly 0 is taken as 0 (subgradient choice).
double activation_derivative(Activation a, double z) {
  switch (a) {
    case Activation::tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

}  // namespace

DifferentiableFunction mlp_from_spec(const MlpSpec& spec) {
  spec.validate();
  auto layers = std::make_shared<std::vector<MlpLayer>>(spec.layers);
  const int dim = spec.input_dim;

  auto value = [layers](const Eigen::VectorXd& x) {
    Eigen::VectorXd a = x;
    for (const MlpLayer& layer : *layers) {
      Eigen::VectorXd z = layer.weights * a + layer.bias;
      for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = apply_activation(layer.activation, z(i));
      a = std::move(z);
    }
    return a(0);
  };

  // Reverse-mode: forward stores pre-activations, backward pulls the scalar
  // sensitivity through diag(act'(z_l)) and W_l.
  auto gradient = [layers](const Eigen::VectorXd& x) {
    std::vector<Eigen::VectorXd> pre;  // z per layer
    pre.reserve(layers->size());
    Eigen::VectorXd a = x;
    for (const MlpLayer& layer : *layers) {
      Eigen::VectorXd z = layer.weights * a + layer.bias;
      pre.push_back(z);
      for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = apply_activation(layer.activation, z(i));
      a = std::move(z);
    }
    Eigen::VectorXd delta = Eigen::VectorXd::Ones(1);
    for (std::size_t l = layers->size(); l-- > 0;) {
      const MlpLayer& layer = (*layers)[l];
      Eigen::VectorXd dz = pre[l];
      for (Eigen::Index i = 0; i < dz.size(); ++i)
        dz(i) = activation_derivative(layer.activation, dz(i));
      delta = layer.weights.transpose() * (delta.cwiseProduct(dz)).eval();
    }
    return delta;
  };

  return DifferentiableFunction("mlp", dim, std::move(value), std::move(gradient));
}

double gradient_check(const DifferentiableFunction& f, const PointSet& points, double step) {
  if (!(step > 0.0)) throw ConfigError("gradient_check step must be > 0");
  if (points.dimension() != f.dimension())
    throw ConfigError("gradient_check point set dimension mismatch");
  double worst = 0.0;
  for (int n = 0; n < points.size(); ++n) {
    const Eigen::VectorXd x = points.point(n);
    const Eigen::VectorXd g = f.gradient(x);
    for (int d = 0; d < points.dimension(); ++d) {
      Eigen::VectorXd xp = x, xm = x;
      xp(d) += step;
      xm(d) -= step;
      const double numeric = (f.value(xp) - f.value(xm)) / (2.0 * step);
      const double rel = std::abs(g(d) - numeric) / (1.0 + std::abs(g(d)));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

PointSet generate_points(int dimension, PointMode mode, int count, Interval bounds,
                         std::uint64_t seed) {
  check_dimension(dimension);
  if (count < 1) throw ConfigError("point count must be >= 1");
  if (!(bounds.lo <= bounds.hi)) throw ConfigError("interval must satisfy lo <= hi");

  if (mode == PointMode::grid) {
    const double total = std::pow(static_cast<double>(count), dimension);
    if (total > 1e7)
      throw ConfigError("grid would contain " + std::to_string(total) +
                        " points; limit is 1e7");
    const int n_total = static_cast<int>(std::llround(total));
    Eigen::VectorXd axis(count);
    if (count == 1) {
      axis(0) = bounds.lo;
    } else {
      for (int i = 0; i < count; ++i)
        axis(i) = bounds.lo + (bounds.hi - bounds.lo) * static_cast<double>(i) /
                                  static_cast<double>(count - 1);
    }
    Eigen::MatrixXd pts(n_total, dimension);
    // Odometer order: the last dimension varies fastest.
    std::vector<int> idx(static_cast<std::size_t>(dimension), 0);
    for (int n = 0; n < n_total; ++n) {
      for (int d = 0; d < dimension; ++d) pts(n, d) = axis(idx[static_cast<std::size_t>(d)]);
      for (int d = dimension - 1; d >= 0; --d) {
        if (++idx[static_cast<std::size_t>(d)] < count) break;
        idx[static_cast<std::size_t>(d)] = 0;
      }
    }
    return PointSet(std::move(pts), bounds);
  }

  Rng rng(mix_seed(seed, 0x706f696e747373ull));
  Eigen::MatrixXd pts(count, dimension);
  for (int n = 0; n < count; ++n)
    for (int d = 0; d < dimension; ++d) pts(n, d) = rng.uniform(bounds.lo, bounds.hi);
  return PointSet(std::move(pts), bounds);
}

PointSet subsample_points(const PointSet& points, int count, std::uint64_t seed) {
  if (count < 1) throw ConfigError("subsample count must be >= 1");
  if (count > points.size())
    throw ConfigError("subsample count exceeds available points");
  if (count == points.size()) return points;
  // Partial Fisher-Yates over the index range, then restore original order.
  std::vector<int> idx(static_cast<std::size_t>(points.size()));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix_seed(seed, 0x73756273616d70ull));
  for (int i = 0; i < count; ++i) {
    const std::size_t j =
        static_cast<std::size_t>(i) + rng.uniform_index(idx.size() - static_cast<std::size_t>(i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
  }
  std::vector<int> chosen(idx.begin(), idx.begin() + count);
  std::sort(chosen.begin(), chosen.end());
  Eigen::MatrixXd pts(count, points.dimension());
  for (int i = 0; i < count; ++i) pts.row(i) = points.points().row(chosen[static_cast<std::size_t>(i)]);
  return PointSet(std::move(pts), points.bounds());
}

}  // namespace propopt
