#include "propopt/baselines.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "propopt/errors.hpp"
#include "propopt/rng.hpp"

namespace propopt {

namespace {

void check_query_point(const DifferentiableFunction& f, const Eigen::VectorXd& x,
                       const char* what) {
  if (x.size() != f.dimension())
    throw ConfigError(std::string(what) + " dimension does not match the function");
  if (!x.allFinite()) throw ConfigError(std::string(what) + " must be finite");
}

/// One perturbation offset. Standard draws are scaled afterwards, so equal
/// seeds line up sample-for-sample across different delta values.
Eigen::VectorXd draw_offset(Rng& rng, const PerturbationSpec& pert, Eigen::Index d) {
  Eigen::VectorXd z(d);
  switch (pert.distribution) {
    case PerturbationKind::gaussian:
      for (Eigen::Index i = 0; i < d; ++i) z(i) = rng.normal();
      return pert.delta * z;
    case PerturbationKind::uniform_ball: {
      double norm = 0.0;
      do {
        for (Eigen::Index i = 0; i < d; ++i) z(i) = rng.normal();
        norm = z.norm();
      } while (norm == 0.0);
      const double u = rng.uniform_pos();
      const double radius = pert.delta * pert.delta;
      return z * (radius * std::pow(u, 1.0 / static_cast<double>(d)) / norm);
    }
  }
  throw ConfigError("unknown perturbation distribution");
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double v = 1.0;
  for (int i = 1; i <= k; ++i) v = v * static_cast<double>(n - k + i) / static_cast<double>(i);
  return v;
}

}  // namespace

PerturbationKind perturbation_kind_from_string(const std::string& s) {
  if (s == "gaussian") return PerturbationKind::gaussian;
  if (s == "uniform-ball" || s == "uniform_ball") return PerturbationKind::uniform_ball;
  throw ConfigError("unknown perturbation distribution '" + s +
                    "' (expected 'gaussian' or 'uniform-ball')");
}

void PerturbationSpec::validate() const {
  if (!(delta > 0.0) || !std::isfinite(delta))
    throw ConfigError("perturbation delta must be a positive finite number");
  if (samples < 1) throw ConfigError("perturbation samples must be >= 1");
}

Eigen::VectorXd smoothgrad(const DifferentiableFunction& f, const Eigen::VectorXd& x,
                           const PerturbationSpec& pert) {
  check_query_point(f, x, "query point");
  pert.validate();
  const Eigen::Index d = x.size();
  Rng rng(pert.seed);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
  for (int s = 0; s < pert.samples; ++s) acc += f.gradient(x + draw_offset(rng, pert, d));
  return acc / static_cast<double>(pert.samples);
}

Eigen::VectorXd lime(const DifferentiableFunction& f, const Eigen::VectorXd& x,
                     const PerturbationSpec& pert, const LimeOptions& options) {
  check_query_point(f, x, "query point");
  pert.validate();
  if (options.kernel_weights && !(options.kernel_scale > 0.0))
    throw ConfigError("lime kernel_scale must be > 0");
  const Eigen::Index d = x.size();
  const Eigen::Index cols = d + (options.intercept ? 1 : 0);
  if (pert.samples < cols)
    throw SamplingError("lime needs at least " + std::to_string(cols) +
                        " samples to identify the surrogate coefficients");

  // Regress f(x + eps) on the offsets eps (plus an optional constant column),
  // so the linear coefficients estimate the local slope at x.
  Rng rng(pert.seed);
  Eigen::MatrixXd design(pert.samples, cols);
  Eigen::VectorXd target(pert.samples);
  for (int s = 0; s < pert.samples; ++s) {
    const Eigen::VectorXd eps = draw_offset(rng, pert, d);
    design.row(s).head(d) = eps.transpose();
    if (options.intercept) design(s, d) = 1.0;
    target(s) = f.value(x + eps);
    if (options.kernel_weights) {
      const double w =
          std::exp(-eps.squaredNorm() / (2.0 * options.kernel_scale * options.kernel_scale));
      const double sw = std::sqrt(w);
      design.row(s) *= sw;
      target(s) *= sw;
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < cols)
    throw SamplingError("lime perturbation design is rank-deficient; increase the sample "
                        "count or the perturbation scale");
  const Eigen::VectorXd coef = qr.solve(target);
  return coef.head(d);
}

Eigen::VectorXd kernel_shap(const DifferentiableFunction& f, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& background, const ShapOptions& options) {
  check_query_point(f, x, "query point");
  if (background.size() != x.size() || !background.allFinite())
    throw ConfigError("background point must be finite and match the query dimension");
  if (options.sample_coalitions < 0)
    throw ConfigError("sample_coalitions must be >= 0 (0 enumerates all coalitions)");
  const int d = static_cast<int>(x.size());

  auto coalition_value = [&](const std::vector<char>& mask) {
    Eigen::VectorXd h = background;
    for (int i = 0; i < d; ++i)
      if (mask[static_cast<std::size_t>(i)]) h(i) = x(i);
    return f.value(h);
  };
  const double f_x = f.value(x);
  const double f_b = f.value(background);
  const double total = f_x - f_b;
  if (d == 1) return Eigen::VectorXd::Constant(1, total);

  // Rows of the constrained regression. Eliminating phi_{d-1} via the
  // efficiency constraint sum phi = f(x) - f(b) turns each coalition z into
  //   y = v(z) - f(b) - z_{d-1} * total,  row_j = z_j - z_{d-1}  (j < d-1).
  std::vector<std::vector<char>> masks;
  std::vector<double> weights;
  if (options.sample_coalitions == 0) {
    if (d > 20)
      throw ConfigError("exhaustive coalition enumeration is infeasible beyond 20 features; "
                        "set sample_coalitions");
    for (std::uint64_t bits = 1; bits + 1 < (std::uint64_t{1} << d); ++bits) {
      std::vector<char> mask(static_cast<std::size_t>(d), 0);
      int size = 0;
      for (int i = 0; i < d; ++i)
        if (bits & (std::uint64_t{1} << i)) {
          mask[static_cast<std::size_t>(i)] = 1;
          ++size;
        }
      masks.push_back(std::move(mask));
      weights.push_back(static_cast<double>(d - 1) /
                        (binomial(d, size) * static_cast<double>(size) *
                         static_cast<double>(d - size)));
    }
  } else {
    // Coalition sizes drawn proportional to the kernel mass 1/(k(d-k)) and
    // members uniformly within a size, so plain least squares over the draws
    // already targets the kernel-weighted objective.
    std::vector<double> cdf(static_cast<std::size_t>(d - 1));
    double mass = 0.0;
    for (int k = 1; k < d; ++k) {
      mass += 1.0 / (static_cast<double>(k) * static_cast<double>(d - k));
      cdf[static_cast<std::size_t>(k - 1)] = mass;
    }
    Rng rng(mix_seed(options.seed, 0x73686170ull));
    std::vector<int> indices(static_cast<std::size_t>(d));
    for (int s = 0; s < options.sample_coalitions; ++s) {
      const double u = rng.uniform() * mass;
      int size = d - 1;
      for (int k = 1; k < d; ++k)
        if (u <= cdf[static_cast<std::size_t>(k - 1)]) {
          size = k;
          break;
        }
      for (int i = 0; i < d; ++i) indices[static_cast<std::size_t>(i)] = i;
      std::vector<char> mask(static_cast<std::size_t>(d), 0);
      for (int i = 0; i < size; ++i) {
        const std::size_t j =
            static_cast<std::size_t>(i) + rng.uniform_index(static_cast<std::uint64_t>(d - i));
        std::swap(indices[static_cast<std::size_t>(i)], indices[j]);
        mask[static_cast<std::size_t>(indices[static_cast<std::size_t>(i)])] = 1;
      }
      masks.push_back(std::move(mask));
      weights.push_back(1.0);
    }
  }

  const Eigen::Index rows = static_cast<Eigen::Index>(masks.size());
  Eigen::MatrixXd design(rows, d - 1);
  Eigen::VectorXd target(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::vector<char>& mask = masks[static_cast<std::size_t>(r)];
    const double z_last = mask[static_cast<std::size_t>(d - 1)] ? 1.0 : 0.0;
    for (int j = 0; j + 1 < d; ++j)
      design(r, j) = (mask[static_cast<std::size_t>(j)] ? 1.0 : 0.0) - z_last;
    target(r) = coalition_value(mask) - f_b - z_last * total;
    const double sw = std::sqrt(weights[static_cast<std::size_t>(r)]);
    design.row(r) *= sw;
    target(r) *= sw;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < d - 1)
    throw SamplingError("sampled coalitions do not identify the attributions; increase "
                        "sample_coalitions");
  const Eigen::VectorXd head = qr.solve(target);
  Eigen::VectorXd phi(d);
  phi.head(d - 1) = head;
  phi(d - 1) = total - head.sum();
  return phi;
}

Eigen::VectorXd domain_center(const PointSet& points) {
  const int d = points.dimension();
  Eigen::VectorXd c(d);
  for (int k = 0; k < d; ++k) {
    const Interval& b = points.bounds()[static_cast<std::size_t>(k)];
    c(k) = 0.5 * (b.lo + b.hi);
  }
  return c;
}

ExplanationMatrix smoothgrad_matrix(const DifferentiableFunction& f, const PointSet& points,
                                    const PerturbationSpec& pert) {
  ExplanationMatrix W(points.size(), points.dimension());
  for (int n = 0; n < points.size(); ++n) {
    PerturbationSpec stream = pert;
    stream.seed = mix_seed(pert.seed, static_cast<std::uint64_t>(n));
    W.row(n) = smoothgrad(f, points.point(n), stream).transpose();
  }
  return W;
}

ExplanationMatrix lime_matrix(const DifferentiableFunction& f, const PointSet& points,
                              const PerturbationSpec& pert, const LimeOptions& options) {
  ExplanationMatrix W(points.size(), points.dimension());
  for (int n = 0; n < points.size(); ++n) {
    PerturbationSpec stream = pert;
    stream.seed = mix_seed(pert.seed, static_cast<std::uint64_t>(n));
    W.row(n) = lime(f, points.point(n), stream, options).transpose();
  }
  return W;
}

ExplanationMatrix kernel_shap_matrix(const DifferentiableFunction& f, const PointSet& points,
                                     const Eigen::VectorXd& background,
                                     const ShapOptions& options) {
  ExplanationMatrix W(points.size(), points.dimension());
  for (int n = 0; n < points.size(); ++n) {
    ShapOptions stream = options;
    stream.seed = mix_seed(options.seed, static_cast<std::uint64_t>(n));
    W.row(n) = kernel_shap(f, points.point(n), background, stream).transpose();
  }
  return W;
}

}  // namespace propopt
