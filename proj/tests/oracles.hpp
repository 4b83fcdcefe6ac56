#pragma once

// Independent reference implementations used only by the tests. Every oracle
// recomputes its quantity by a different route than the library (plain loops,
// dense eigensolves, first-order reference iterations, exhaustive
// enumeration) so agreement is evidence, not tautology.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace oracle {

inline bool close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * (1.0 + std::max(std::abs(a), std::abs(b)));
}

/// Central finite-difference gradient of a scalar function.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd hi = x, lo = x;
    hi(i) += h;
    lo(i) -= h;
    g(i) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Brute-force property losses: direct translations of their definitions as
// plain loops over ordered pairs.

inline double brute_faithful_grad(const Eigen::MatrixXd& W, const Eigen::MatrixXd& G) {
  double v = 0.0;
  for (Eigen::Index n = 0; n < W.rows(); ++n)
    for (Eigen::Index d = 0; d < W.cols(); ++d) v += (W(n, d) - G(n, d)) * (W(n, d) - G(n, d));
  return v;
}

inline double brute_faithful_fn(const Eigen::MatrixXd& W, const Eigen::MatrixXd& X,
                                const Eigen::VectorXd& fvals) {
  double v = 0.0;
  for (Eigen::Index n = 0; n < W.rows(); ++n) {
    double dot = 0.0;
    for (Eigen::Index d = 0; d < W.cols(); ++d) dot += W(n, d) * X(n, d);
    v += (fvals(n) - dot) * (fvals(n) - dot);
  }
  return v;
}

inline double brute_robust_pairwise(const Eigen::MatrixXd& W, const Eigen::MatrixXd& S) {
  double v = 0.0;
  for (Eigen::Index n = 0; n < W.rows(); ++n)
    for (Eigen::Index m = 0; m < W.rows(); ++m) {
      if (n == m) continue;
      v += S(n, m) * (W.row(n) - W.row(m)).squaredNorm();
    }
  return v;
}

inline double brute_smooth(const Eigen::MatrixXd& W, const Eigen::MatrixXd& St) {
  double v = 0.0;
  for (Eigen::Index n = 0; n < W.rows(); ++n)
    for (Eigen::Index d = 0; d < W.cols(); ++d)
      for (Eigen::Index e = 0; e < W.cols(); ++e) {
        if (d == e) continue;
        v += St(d, e) * (W(n, d) - W(n, e)) * (W(n, d) - W(n, e));
      }
  return v;
}

inline double brute_complexity(const Eigen::MatrixXd& W) {
  double v = 0.0;
  for (Eigen::Index n = 0; n < W.rows(); ++n)
    for (Eigen::Index d = 0; d < W.cols(); ++d) v += std::abs(W(n, d));
  return v;
}

// ---------------------------------------------------------------------------
// Reference minimizers for the smooth quadratic objective
//   J(W) = lf ||W - G||^2 + 2 lr tr(W' L W) + 2 ls tr(W Lt W').

inline double smooth_objective(const Eigen::MatrixXd& W, const Eigen::MatrixXd& G,
                               const Eigen::MatrixXd& L, const Eigen::MatrixXd& Lt, double lf,
                               double lr, double ls) {
  double v = lf * (W - G).squaredNorm();
  v += 2.0 * lr * (W.transpose() * L * W).trace();
  v += 2.0 * ls * (W * Lt * W.transpose()).trace();
  return v;
}

inline Eigen::MatrixXd smooth_gradient(const Eigen::MatrixXd& W, const Eigen::MatrixXd& G,
                                       const Eigen::MatrixXd& L, const Eigen::MatrixXd& Lt,
                                       double lf, double lr, double ls) {
  return 2.0 * lf * (W - G) + 4.0 * lr * (L * W) + 4.0 * ls * (W * Lt);
}

/// Largest Hessian eigenvalue of the smooth objective. The left and right
/// multiplications commute, so the spectrum is {2 lf + 4 lr mu_i + 4 ls nu_j}.
inline double smooth_operator_norm(const Eigen::MatrixXd& L, const Eigen::MatrixXd& Lt, double lf,
                                   double lr, double ls) {
  double mu_max = 0.0, nu_max = 0.0;
  if (lr != 0.0 && L.rows() > 0)
    mu_max = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(L).eigenvalues().maxCoeff();
  if (ls != 0.0 && Lt.rows() > 0)
    nu_max = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Lt).eigenvalues().maxCoeff();
  return 2.0 * lf + 4.0 * lr * std::max(mu_max, 0.0) + 4.0 * ls * std::max(nu_max, 0.0);
}

/// Fixed-step gradient descent from W = G.
inline Eigen::MatrixXd gd_minimize(const Eigen::MatrixXd& G, const Eigen::MatrixXd& L,
                                   const Eigen::MatrixXd& Lt, double lf, double lr, double ls,
                                   long steps) {
  const double step = 1.0 / smooth_operator_norm(L, Lt, lf, lr, ls);
  Eigen::MatrixXd W = G;
  for (long k = 0; k < steps; ++k) W -= step * smooth_gradient(W, G, L, Lt, lf, lr, ls);
  return W;
}

inline double soft(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

/// Plain proximal gradient (no momentum, no restarts) for the objective with
/// an added lc ||W||_1 term.
inline Eigen::MatrixXd ista_minimize(const Eigen::MatrixXd& G, const Eigen::MatrixXd& L,
                                     const Eigen::MatrixXd& Lt, double lf, double lr, double ls,
                                     double lc, long steps, double tol) {
  const double step = 1.0 / (1.05 * smooth_operator_norm(L, Lt, lf, lr, ls));
  const double shrink = step * lc;
  Eigen::MatrixXd W = G;
  for (long k = 0; k < steps; ++k) {
    Eigen::MatrixXd V = W - step * smooth_gradient(W, G, L, Lt, lf, lr, ls);
    Eigen::MatrixXd Wn = V.unaryExpr([shrink](double v) { return soft(v, shrink); });
    const double gap = (Wn - W).norm();
    W = Wn;
    if (gap <= tol) break;
  }
  return W;
}

// ---------------------------------------------------------------------------
// Max-difference duality bound. The objective
//   J(W) = lf ||W - G||^2 + lr max_p ||w_{a_p} - w_{b_p}||^2
// equals max over alpha in the scaled simplex {alpha >= 0, sum = lr} of
//   g(alpha) = min_W lf ||W - G||^2 + sum_p alpha_p ||w_{a_p} - w_{b_p}||^2,
// so g(alpha) at ANY feasible alpha is a certified lower bound on J*.

inline Eigen::VectorXd project_simplex(Eigen::VectorXd v, double radius) {
  // Euclidean projection onto {x >= 0, sum x = radius} (sort-based).
  const Eigen::Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, theta = 0.0;
  int rho = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    css += u[static_cast<std::size_t>(i)];
    const double t = (css - radius) / static_cast<double>(i + 1);
    if (u[static_cast<std::size_t>(i)] - t > 0.0) {
      rho = static_cast<int>(i + 1);
      theta = t;
    }
  }
  (void)rho;
  for (Eigen::Index i = 0; i < n; ++i) v(i) = std::max(v(i) - theta, 0.0);
  return v;
}

struct MaxdiffDual {
  double dual_value = 0.0;
  Eigen::MatrixXd W;  // primal minimizer at the best alpha
};

inline MaxdiffDual maxdiff_dual_bound(const Eigen::MatrixXd& G,
                                      const std::vector<std::pair<int, int>>& pairs, double lf,
                                      double lr, int iters) {
  const Eigen::Index n = G.rows();
  const Eigen::Index p = static_cast<Eigen::Index>(pairs.size());
  Eigen::VectorXd alpha = Eigen::VectorXd::Constant(p, lr / static_cast<double>(p));
  auto inner = [&](const Eigen::VectorXd& a) {
    Eigen::MatrixXd La = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index q = 0; q < p; ++q) {
      const auto [i, j] = pairs[static_cast<std::size_t>(q)];
      La(i, i) += a(q);
      La(j, j) += a(q);
      La(i, j) -= a(q);
      La(j, i) -= a(q);
    }
    Eigen::MatrixXd A = La;
    A.diagonal().array() += lf;
    const Eigen::MatrixXd W = A.ldlt().solve(lf * G);
    double g = lf * (W - G).squaredNorm();
    Eigen::VectorXd q_of_w(p);
    for (Eigen::Index q = 0; q < p; ++q) {
      const auto [i, j] = pairs[static_cast<std::size_t>(q)];
      q_of_w(q) = (W.row(i) - W.row(j)).squaredNorm();
      g += a(q) * q_of_w(q);
    }
    return std::make_tuple(g, W, q_of_w);
  };

  MaxdiffDual best;
  best.dual_value = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < iters; ++k) {
    auto [g, W, grad] = inner(alpha);
    if (g > best.dual_value) {
      best.dual_value = g;
      best.W = W;
    }
    // Projected gradient ascent (Danskin: dg/dalpha_p = q_p(W(alpha))).
    const double step = 0.05 * lr / (1.0 + grad.norm()) / std::sqrt(static_cast<double>(k + 1));
    alpha = project_simplex(alpha + step * grad, lr);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Exact Shapley values by subset enumeration.

inline Eigen::VectorXd shapley_enumerate(const std::function<double(const Eigen::VectorXd&)>& f,
                                         const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& background) {
  const int d = static_cast<int>(x.size());
  std::vector<double> fact(static_cast<std::size_t>(d) + 1, 1.0);
  for (int i = 1; i <= d; ++i)
    fact[static_cast<std::size_t>(i)] = fact[static_cast<std::size_t>(i - 1)] * i;
  auto value = [&](unsigned mask) {
    Eigen::VectorXd h = background;
    for (int i = 0; i < d; ++i)
      if (mask & (1u << i)) h(i) = x(i);
    return f(h);
  };
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < d; ++i) {
    for (unsigned mask = 0; mask < (1u << d); ++mask) {
      if (mask & (1u << i)) continue;
      const int s = __builtin_popcount(mask);
      const double weight = fact[static_cast<std::size_t>(s)] *
                            fact[static_cast<std::size_t>(d - s - 1)] /
                            fact[static_cast<std::size_t>(d)];
      phi(i) += weight * (value(mask | (1u << i)) - value(mask));
    }
  }
  return phi;
}

}  // namespace oracle
