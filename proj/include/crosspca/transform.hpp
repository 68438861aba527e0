// Copyright (c) 2026 crosspca contributors
//
// Element-wise transform pair for conditionally Poisson counts:
//   f with  E[f(X) | lambda] ~ log(lambda)
//   k with  E[k(X) | lambda] ~ Var(f(X) | lambda)
// Both are lookup tables on 0..M with analytic tails, f(x) = log x and
// k(x) = 1/x for x > M (the 1/x tail is the delta-method variance of log X).
//
// No exact f exists (log has no unbiased Poisson estimator), so the tables
// are calibrated by least squares against the defining identities on a
// lambda grid. The f fit runs in increment space with nonnegativity
// constraints, which makes the table strictly increasing by construction;
// grid rows below lambda = 1 are down-weighted because the contract only
// bounds bias at lambda >= 1 (small-lambda bias is intrinsic and reported).
// The k fit is a ridge toward a plug-in anchor built from the numerically
// computed conditional variance of the fitted f.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "crosspca/counts.hpp"
#include "crosspca/errors.hpp"
#include "crosspca/eigen.hpp"
#include "crosspca/matrix.hpp"

namespace crosspca {

inline double poisson_log_pmf(long long x, double lambda) {
  return static_cast<double>(x) * std::log(lambda) - lambda -
         std::lgamma(static_cast<double>(x) + 1.0);
}
inline double poisson_pmf(long long x, double lambda) {
  return std::exp(poisson_log_pmf(x, lambda));
}

struct TransformPair {
  int cutoff = 0;              // M
  std::vector<double> f_table;  // x = 0..M
  std::vector<double> k_table;  // x = 0..M
  std::vector<double> grid;     // calibration grid
  double max_log_bias = 0.0;        // sup over the whole grid of |E[f|lam] - log lam|
  double max_log_bias_ge1 = 0.0;    // same, restricted to grid lambda >= 1
  double max_k_rel_error_ge1 = 0.0; // sup over grid lambda >= 1 of k's relative error

  double f(long long x) const {
    return x <= cutoff ? f_table[static_cast<std::size_t>(x)]
                       : std::log(static_cast<double>(x));
  }
  double k(long long x) const {
    return x <= cutoff ? k_table[static_cast<std::size_t>(x)]
                       : 1.0 / static_cast<double>(x);
  }
};

namespace detail {

// Summation horizon for pmf expectations: covers all but ~1e-14 of the mass.
inline long long pmf_horizon(double lambda) {
  return static_cast<long long>(lambda + 100.0 * std::sqrt(lambda) + 300.0);
}

inline double expected_f(const TransformPair& t, double lambda) {
  const long long xm = pmf_horizon(lambda);
  double s = 0.0;
  for (long long x = 0; x <= xm; ++x) s += poisson_pmf(x, lambda) * t.f(x);
  return s;
}

inline double var_f(const TransformPair& t, double lambda) {
  const long long xm = pmf_horizon(lambda);
  double m1 = 0.0, m2 = 0.0;
  for (long long x = 0; x <= xm; ++x) {
    const double p = poisson_pmf(x, lambda);
    const double fx = t.f(x);
    m1 += p * fx;
    m2 += p * fx * fx;
  }
  return m2 - m1 * m1;
}

inline double expected_k(const TransformPair& t, double lambda) {
  const long long xm = pmf_horizon(lambda);
  double s = 0.0;
  for (long long x = 0; x <= xm; ++x) s += poisson_pmf(x, lambda) * t.k(x);
  return s;
}

}  // namespace detail

// Calibrate the transform pair on an ascending positive grid. The grid must
// span at least [0.25, 2M]; M >= 5.
inline TransformPair build_transform(int cutoff, const std::vector<double>& lambda_grid) {
  const int m = cutoff;
  if (m < 5) throw DataError("build_transform: cutoff must be at least 5");
  if (lambda_grid.size() < 2) throw DataError("build_transform: grid too small");
  for (std::size_t g = 0; g < lambda_grid.size(); ++g) {
    if (!(lambda_grid[g] > 0.0)) throw DataError("build_transform: grid must be positive");
    if (g > 0 && lambda_grid[g] <= lambda_grid[g - 1])
      throw DataError("build_transform: grid must be ascending");
  }
  if (lambda_grid.front() > 0.25 * (1.0 + 1e-9) || lambda_grid.back() < 2.0 * m * (1.0 - 1e-9))
    throw DataError("build_transform: grid must span [0.25, 2*cutoff]");

  const std::size_t nf = static_cast<std::size_t>(m) + 1;
  const std::size_t ng = lambda_grid.size();
  // pmf mass beyond this point is treated as zero during calibration
  const long long xmax = m + static_cast<long long>(std::ceil(50.0 * std::sqrt(double(m))));

  const double small_lambda_weight = 0.05;
  const double smooth_alpha = 0.003;
  const double continuity_weight = 5.0;
  const double increment_floor_scale = 0.1;
  const double k_ridge = 1e-4;

  // weighted data rows over the table columns, tail contribution moved to the target
  Matrix data(ng, nf);
  Vector target_f(ng), weights(ng);
  for (std::size_t g = 0; g < ng; ++g) {
    const double lam = lambda_grid[g];
    const double w = lam >= 1.0 ? 1.0 : small_lambda_weight;
    weights[g] = w;
    for (std::size_t x = 0; x < nf; ++x)
      data(g, x) = w * poisson_pmf(static_cast<long long>(x), lam);
    double tail = 0.0;
    for (long long x = m + 1; x <= xmax; ++x)
      tail += poisson_pmf(x, lam) * std::log(static_cast<double>(x));
    target_f[g] = w * (std::log(lam) - tail);
  }

  // stacked rows: data, second-difference smoothness, continuity at the cutoff
  const std::size_t nrows = ng + (nf - 2) + 1;
  Matrix full(nrows, nf);
  Vector rhs(nrows, 0.0);
  for (std::size_t g = 0; g < ng; ++g) {
    for (std::size_t x = 0; x < nf; ++x) full(g, x) = data(g, x);
    rhs[g] = target_f[g];
  }
  const double sa = std::sqrt(smooth_alpha);
  for (std::size_t i = 0; i + 2 < nf; ++i) {
    full(ng + i, i) = sa;
    full(ng + i, i + 1) = -2.0 * sa;
    full(ng + i, i + 2) = sa;
  }
  full(nrows - 1, nf - 1) = continuity_weight;
  rhs[nrows - 1] = continuity_weight * std::log(static_cast<double>(m));

  {  // conditioning gate on the assembled normal matrix
    SymmetricMatrix normal(full.transposed() * full);
    EigenDecomposition ed = eig_sym(normal);
    if (!(ed.values.back() > 0.0) || ed.values.front() / ed.values.back() > 1e12)
      throw NumericError(
          "build_transform: calibration system is ill-conditioned; "
          "use a larger cutoff or a denser grid");
  }

  // increment reparameterization keeps f strictly increasing:
  //   f(x) = (lo + h_base) + sum_{i<x} (delta_i + h_i),  h >= 0
  Vector delta(nf - 1);
  for (std::size_t i = 0; i + 1 < nf; ++i)
    delta[i] = increment_floor_scale *
               (std::log(static_cast<double>(i) + 1.5) - std::log(static_cast<double>(i) + 0.5));
  const double lo = -10.0;  // hard lower bound on f(0), far below any fit

  const std::size_t nv = nf;  // h_base plus nf-1 increments
  Matrix design(nrows, nv);
  Vector shifted = rhs;
  for (std::size_t r = 0; r < nrows; ++r) {
    double rowsum = 0.0;
    for (std::size_t x = 0; x < nf; ++x) rowsum += full(r, x);
    design(r, 0) = rowsum;  // h_base multiplies the all-ones direction
    for (std::size_t i = 0; i + 1 < nf; ++i) {
      double s = 0.0;
      for (std::size_t x = i + 1; x < nf; ++x) s += full(r, x);
      design(r, i + 1) = s;
      shifted[r] -= s * delta[i];
    }
    shifted[r] -= rowsum * lo;
  }
  Vector h = nnls(design, shifted);

  TransformPair t;
  t.cutoff = m;
  t.grid = lambda_grid;
  t.f_table.assign(nf, 0.0);
  t.f_table[0] = lo + h[0];
  for (std::size_t x = 1; x < nf; ++x)
    t.f_table[x] = t.f_table[x - 1] + delta[x - 1] + h[x];

  if (std::fabs(t.f_table[nf - 1] - std::log(static_cast<double>(m))) > 0.02)
    throw NumericError("build_transform: f does not meet the tail continuity bound");

  // conditional variance of the fitted f, used for k targets and its anchor
  Vector v(nf + 2);
  for (std::size_t x = 0; x < nf + 2; ++x)
    v[x] = detail::var_f(t, std::max(static_cast<double>(x), 0.5));
  Vector anchor(nf);
  for (std::size_t x = 0; x < nf; ++x) {
    if (x >= 1)
      anchor[x] = v[x] - 0.5 * static_cast<double>(x) * (v[x + 1] - 2.0 * v[x] + v[x - 1]);
    else
      anchor[x] = v[x];
  }

  Matrix kn(nf, nf);
  Vector kr(nf, 0.0);
  for (std::size_t c = 0; c < nf; ++c) {
    for (std::size_t d = c; d < nf; ++d) {
      double s = 0.0;
      for (std::size_t g = 0; g < ng; ++g) s += data(g, c) * data(g, d);
      kn(c, d) = s + (c == d ? k_ridge : 0.0);
      kn(d, c) = kn(c, d);
    }
  }
  for (std::size_t g = 0; g < ng; ++g) {
    const double lam = lambda_grid[g];
    double tail = 0.0;
    for (long long x = m + 1; x <= xmax; ++x)
      tail += poisson_pmf(x, lam) / static_cast<double>(x);
    const double tg = weights[g] * (detail::var_f(t, lam) - tail);
    for (std::size_t c = 0; c < nf; ++c) kr[c] += data(g, c) * tg;
  }
  for (std::size_t c = 0; c < nf; ++c) kr[c] += k_ridge * anchor[c];
  {
    Matrix l;
    if (!cholesky(kn, l))
      throw NumericError("build_transform: k calibration system is singular");
    t.k_table = chol_solve(l, kr);
  }

  // record achieved accuracy on the calibration grid
  for (double lam : lambda_grid) {
    const double bias = std::fabs(detail::expected_f(t, lam) - std::log(lam));
    t.max_log_bias = std::max(t.max_log_bias, bias);
    if (lam >= 1.0) {
      t.max_log_bias_ge1 = std::max(t.max_log_bias_ge1, bias);
      const double vf = detail::var_f(t, lam);
      t.max_k_rel_error_ge1 =
          std::max(t.max_k_rel_error_ge1, std::fabs(detail::expected_k(t, lam) - vf) / vf);
    }
  }
  if (t.max_log_bias_ge1 > 0.05)
    throw NumericError("build_transform: f bias bound not met on the grid at lambda >= 1");
  if (t.max_k_rel_error_ge1 > 0.10)
    throw NumericError("build_transform: k error bound not met on the grid at lambda >= 1");
  return t;
}

inline std::vector<double> default_lambda_grid(int cutoff = 30, std::size_t points = 60) {
  std::vector<double> g(points);
  const double lo = std::log(0.25), hi = std::log(2.0 * cutoff);
  for (std::size_t i = 0; i < points; ++i)
    g[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
  g.front() = 0.25;
  g.back() = 2.0 * cutoff;
  return g;
}

inline const TransformPair& default_transform() {
  static const TransformPair t = build_transform(30, default_lambda_grid());
  return t;
}

// Element-wise evaluation over a count matrix; returns the f image and the
// companion k image, both n x p.
struct TransformedCounts {
  Matrix f;
  Matrix k;
};

inline TransformedCounts apply_transform(const TransformPair& t, const CountMatrix& x) {
  TransformedCounts out;
  out.f = Matrix(x.n(), x.p());
  out.k = Matrix(x.n(), x.p());
  for (std::size_t i = 0; i < x.n(); ++i)
    for (std::size_t j = 0; j < x.p(); ++j) {
      const long long c = x(i, j);
      if (c < 0)
        throw DataError("apply_transform: negative count at row " + std::to_string(i) +
                        ", column " + std::to_string(j));
      out.f(i, j) = t.f(c);
      out.k(i, j) = t.k(c);
    }
  return out;
}

}  // namespace crosspca
