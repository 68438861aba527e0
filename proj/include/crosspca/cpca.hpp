// Copyright (c) 2026 crosspca contributors
//
// Common principal components across S study covariance estimates.
//
// fcpca: pairwise-rotation (FG) minimization of the Wishart criterion
//   sum_s w_s sum_j [log d_sj + v_j' S_s v_j / d_sj],  d_sj = v_j' S_s v_j.
// Each 2x2 subproblem is solved by bisecting the stationarity condition on
// the rotation angle in (-pi/4, pi/4]; among the stationary angles the one
// with the smallest pair objective is taken, so the full objective never
// increases across sweeps.
//
// scpca: sequential extraction. Component j is a fixed point of power
// iteration on the adaptively reweighted average sum_s w_s S_s / (v' S_s v),
// deflated against the accepted columns and started from the leading
// eigenvector of the projected plain weighted average. Tolerates indefinite
// inputs as long as every quadratic form stays positive along the path.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "crosspca/eigen.hpp"
#include "crosspca/errors.hpp"
#include "crosspca/matrix.hpp"
#include "crosspca/variance.hpp"

namespace crosspca {

enum class BasisMethod { fcpca, scpca, msfa };

inline const char* to_string(BasisMethod m) {
  switch (m) {
    case BasisMethod::fcpca: return "fcpca";
    case BasisMethod::scpca: return "scpca";
    default: return "msfa";
  }
}

struct CommonBasis {
  Matrix vectors;    // p x q, orthonormal columns
  Matrix variances;  // S x q, d_sj = v_j' S_s v_j against the input estimates
  Vector weights;    // S, (n_s - 1)
  BasisMethod method = BasisMethod::scpca;
  std::vector<double> objective_trace;
  std::size_t soft_order_violations = 0;  // scpca: pairs with d_sj < 0.95 d_{s,j+1}

  std::size_t p() const { return vectors.nrow; }
  std::size_t q() const { return vectors.ncol; }
  std::size_t studies() const { return variances.nrow; }
};

namespace detail {

inline void check_inputs(const std::vector<StudyVarianceEstimate>& sigmas, std::size_t q) {
  if (sigmas.empty()) throw DataError("common basis: no study estimates supplied");
  const std::size_t p = sigmas[0].sigma.dim();
  for (const auto& e : sigmas) {
    if (e.sigma.dim() != p) throw DataError("common basis: estimates differ in dimension");
    if (e.n < 2) throw DataError("common basis: study '" + e.study_label + "' has n < 2");
  }
  if (q < 1 || q > p) throw ConfigError("common basis: q must be in [1, p]");
}

inline Matrix weighted_average(const std::vector<StudyVarianceEstimate>& sigmas,
                               const Vector& wnorm) {
  const std::size_t p = sigmas[0].sigma.dim();
  Matrix a(p, p);
  for (std::size_t s = 0; s < sigmas.size(); ++s)
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j) a(i, j) += wnorm[s] * sigmas[s].sigma(i, j);
  return a;
}

struct PairBlock {
  double a, b, d;  // symmetric 2x2: [[a, b], [b, d]]
};

inline double pair_d1(const PairBlock& t, double c2, double s2) {
  return 0.5 * (t.a + t.d) + 0.5 * (t.a - t.d) * c2 + t.b * s2;
}
inline double pair_d2(const PairBlock& t, double c2, double s2) {
  return 0.5 * (t.a + t.d) - 0.5 * (t.a - t.d) * c2 - t.b * s2;
}
inline double pair_cross(const PairBlock& t, double c2, double s2) {
  return t.b * c2 + 0.5 * (t.d - t.a) * s2;
}

// Stationarity residual of the pair problem at angle theta.
inline double pair_g(const std::vector<PairBlock>& ts, const Vector& w, double theta) {
  const double c2 = std::cos(2.0 * theta), s2 = std::sin(2.0 * theta);
  double g = 0.0;
  for (std::size_t s = 0; s < ts.size(); ++s) {
    const double d1 = pair_d1(ts[s], c2, s2);
    const double d2 = pair_d2(ts[s], c2, s2);
    g += w[s] * ((d1 - d2) / (d1 * d2)) * pair_cross(ts[s], c2, s2);
  }
  return g;
}

inline double pair_objective(const std::vector<PairBlock>& ts, const Vector& w, double theta) {
  const double c2 = std::cos(2.0 * theta), s2 = std::sin(2.0 * theta);
  double f = 0.0;
  for (std::size_t s = 0; s < ts.size(); ++s) {
    const double d1 = pair_d1(ts[s], c2, s2);
    const double d2 = pair_d2(ts[s], c2, s2);
    if (!(d1 > 0.0) || !(d2 > 0.0)) return std::numeric_limits<double>::infinity();
    f += w[s] * (std::log(d1) + std::log(d2));
  }
  return f;
}

// Best stationary rotation angle for one pair, by scanning (-pi/4, pi/4]
// for sign changes of g and bisecting each bracket.
inline double pair_best_angle(const std::vector<PairBlock>& ts, const Vector& w) {
  constexpr int kScan = 128;
  constexpr double kQuarterPi = 0.78539816339744830961;
  double best_theta = 0.0;
  double best_obj = pair_objective(ts, w, 0.0);

  double prev_theta = -kQuarterPi;
  double prev_g = pair_g(ts, w, prev_theta);

  for (int k = 1; k <= kScan; ++k) {
    const double theta = -kQuarterPi + (2.0 * kQuarterPi * k) / kScan;
    const double gk = pair_g(ts, w, theta);
    if ((prev_g <= 0.0 && gk >= 0.0) || (prev_g >= 0.0 && gk <= 0.0)) {
      double lo = prev_theta, hi = theta, glo = prev_g;
      for (int it = 0; it < 80 && hi - lo > 1e-14; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double gm = pair_g(ts, w, mid);
        if ((glo <= 0.0 && gm <= 0.0) || (glo >= 0.0 && gm >= 0.0)) {
          lo = mid;
          glo = gm;
        } else {
          hi = mid;
        }
      }
      const double root = 0.5 * (lo + hi);
      const double obj = pair_objective(ts, w, root);
      if (obj < best_obj) {
        best_obj = obj;
        best_theta = root;
      }
    }
    prev_theta = theta;
    prev_g = gk;
  }
  return best_theta;
}

inline void fix_basis_signs(Matrix& v) { detail::fix_column_signs(v); }

}  // namespace detail

// Residual of the first-order optimality condition of the pairwise criterion;
// near zero at a converged solution.
inline double fg_symmetry_residual(const std::vector<StudyVarianceEstimate>& sigmas,
                                   const Matrix& v) {
  const std::size_t p = v.nrow, q = v.ncol, ns = sigmas.size();
  std::vector<Matrix> proj(ns);  // V' S_s V
  for (std::size_t s = 0; s < ns; ++s)
    proj[s] = v.transposed() * (sigmas[s].sigma.mat() * v);
  double res = 0.0;
  for (std::size_t h = 0; h < q; ++h)
    for (std::size_t j = 0; j < q; ++j) {
      if (h == j) continue;
      double acc = 0.0;
      for (std::size_t s = 0; s < ns; ++s) {
        const double dh = proj[s](h, h), dj = proj[s](j, j);
        acc += sigmas[s].weight() * ((dj - dh) / (dh * dj)) * proj[s](h, j);
      }
      res = std::max(res, std::fabs(acc));
    }
  (void)p;
  return res;
}

inline CommonBasis fcpca(const std::vector<StudyVarianceEstimate>& sigmas, std::size_t q) {
  detail::check_inputs(sigmas, q);
  const std::size_t p = sigmas[0].sigma.dim(), ns = sigmas.size();
  for (const auto& e : sigmas)
    if (!is_positive_definite(e.sigma.mat()))
      throw NumericError("fcpca: estimate for study '" + e.study_label +
                         "' is not positive definite; apply psd_repair first");

  Vector w(ns), wnorm(ns);
  double wsum = 0.0;
  for (std::size_t s = 0; s < ns; ++s) {
    w[s] = sigmas[s].weight();
    wsum += w[s];
  }
  for (std::size_t s = 0; s < ns; ++s) wnorm[s] = w[s] / wsum;

  Matrix v = eig_sym(SymmetricMatrix(detail::weighted_average(sigmas, wnorm))).vectors;
  std::vector<Matrix> sv(ns);  // caches S_s V, rotated alongside V
  for (std::size_t s = 0; s < ns; ++s) sv[s] = sigmas[s].sigma.mat() * v;

  auto objective = [&]() {
    double f = 0.0;
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t j = 0; j < p; ++j) {
        double d = 0.0;
        for (std::size_t i = 0; i < p; ++i) d += v(i, j) * sv[s](i, j);
        f += w[s] * std::log(d);
      }
    return f;
  };

  CommonBasis out;
  out.objective_trace.push_back(objective());

  constexpr int kMaxSweeps = 200;
  bool converged = false;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    double max_rot = 0.0;
    for (std::size_t h = 0; h + 1 < p; ++h) {
      for (std::size_t j = h + 1; j < p; ++j) {
        std::vector<detail::PairBlock> ts(ns);
        for (std::size_t s = 0; s < ns; ++s) {
          double a = 0.0, b = 0.0, d = 0.0;
          for (std::size_t i = 0; i < p; ++i) {
            a += v(i, h) * sv[s](i, h);
            b += v(i, h) * sv[s](i, j);
            d += v(i, j) * sv[s](i, j);
          }
          ts[s] = {a, b, d};
        }
        const double theta = detail::pair_best_angle(ts, wnorm);
        max_rot = std::max(max_rot, std::fabs(theta));
        if (theta != 0.0) {
          const double c = std::cos(theta), sn = std::sin(theta);
          for (std::size_t i = 0; i < p; ++i) {
            const double vh = v(i, h), vj = v(i, j);
            v(i, h) = c * vh + sn * vj;
            v(i, j) = -sn * vh + c * vj;
          }
          for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t i = 0; i < p; ++i) {
              const double ah = sv[s](i, h), aj = sv[s](i, j);
              sv[s](i, h) = c * ah + sn * aj;
              sv[s](i, j) = -sn * ah + c * aj;
            }
        }
      }
    }
    out.objective_trace.push_back(objective());
    if (max_rot <= 1e-10) converged = true;
  }
  if (!converged) {
    double maxnorm = 0.0;
    for (const auto& e : sigmas) maxnorm = std::max(maxnorm, frobenius_norm(e.sigma.mat()));
    const double res = fg_symmetry_residual(sigmas, v);
    if (res > 1e-6 * maxnorm)
      throw ConvergenceError("fcpca: sweeps exhausted, optimality residual " +
                                 std::to_string(res),
                             {out.objective_trace});
  }

  // order columns by pooled weighted variance, then restrict to q
  Matrix dall(ns, p);
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t j = 0; j < p; ++j) {
      double d = 0.0;
      for (std::size_t i = 0; i < p; ++i) d += v(i, j) * sv[s](i, j);
      dall(s, j) = d;
    }
  Vector pooled(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t s = 0; s < ns; ++s) pooled[j] += w[s] * dall(s, j);
    pooled[j] /= wsum;
  }
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pooled[a] > pooled[b]; });

  out.vectors = Matrix(p, q);
  out.variances = Matrix(ns, q);
  for (std::size_t jq = 0; jq < q; ++jq) {
    for (std::size_t i = 0; i < p; ++i) out.vectors(i, jq) = v(i, order[jq]);
    for (std::size_t s = 0; s < ns; ++s) out.variances(s, jq) = dall(s, order[jq]);
  }
  detail::fix_basis_signs(out.vectors);
  out.weights = w;
  out.method = BasisMethod::fcpca;
  return out;
}

inline CommonBasis scpca(const std::vector<StudyVarianceEstimate>& sigmas, std::size_t q) {
  detail::check_inputs(sigmas, q);
  const std::size_t p = sigmas[0].sigma.dim(), ns = sigmas.size();

  Vector w(ns), wnorm(ns);
  double wsum = 0.0;
  for (std::size_t s = 0; s < ns; ++s) {
    w[s] = sigmas[s].weight();
    wsum += w[s];
  }
  for (std::size_t s = 0; s < ns; ++s) wnorm[s] = w[s] / wsum;

  const Matrix avg = detail::weighted_average(sigmas, wnorm);

  CommonBasis out;
  out.vectors = Matrix(p, q);
  out.variances = Matrix(ns, q);
  out.weights = w;
  out.method = BasisMethod::scpca;

  Matrix deflated = avg;  // (I - VV')A(I - VV') built incrementally
  for (std::size_t comp = 0; comp < q; ++comp) {
    auto project_out = [&](Vector& u) {
      for (std::size_t k = 0; k < comp; ++k) {
        double c = 0.0;
        for (std::size_t i = 0; i < p; ++i) c += out.vectors(i, k) * u[i];
        for (std::size_t i = 0; i < p; ++i) u[i] -= c * out.vectors(i, k);
      }
    };

    Vector v = eig_sym(SymmetricMatrix(deflated)).vectors.col(0);
    project_out(v);
    {
      const double nv = norm2(v);
      if (nv < 1e-12)
        throw ConvergenceError("scpca: projected initializer vanished at component " +
                               std::to_string(comp + 1));
      for (double& x : v) x /= nv;
    }

    double best_step = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    bool converged = false;
    for (std::size_t it = 0; it < 5000; ++it) {
      Vector u(p, 0.0);
      for (std::size_t s = 0; s < ns; ++s) {
        const Matrix& m = sigmas[s].sigma.mat();
        const double d = quad_form(m, v);
        if (!(d > 0.0))
          throw NumericError("scpca: v' Sigma v is non-positive for study '" +
                             sigmas[s].study_label + "' (indefinite estimate)");
        const double c = wnorm[s] / d;
        for (std::size_t i = 0; i < p; ++i) {
          double r = 0.0;
          for (std::size_t k = 0; k < p; ++k) r += m(i, k) * v[k];
          u[i] += c * r;
        }
      }
      project_out(u);
      double sgn = dot(u, v) < 0.0 ? -1.0 : 1.0;
      const double un = norm2(u);
      if (un < 1e-300)
        throw ConvergenceError("scpca: iterate collapsed at component " +
                               std::to_string(comp + 1));
      Vector vn(p);
      for (std::size_t i = 0; i < p; ++i) vn[i] = sgn * u[i] / un;
      double step = 0.0;
      for (std::size_t i = 0; i < p; ++i) step += (vn[i] - v[i]) * (vn[i] - v[i]);
      step = std::sqrt(step);
      v = vn;
      if (step <= 1e-10) {
        converged = true;
        break;
      }
      if (step < best_step * (1.0 - 1e-12)) {
        best_step = step;
        since_best = 0;
      } else if (++since_best >= 50) {
        throw ConvergenceError("scpca: stalled at component " + std::to_string(comp + 1) +
                               ", step " + std::to_string(step));
      }
    }
    if (!converged)
      throw ConvergenceError("scpca: iteration budget exhausted at component " +
                             std::to_string(comp + 1));

    project_out(v);
    const double nv = norm2(v);
    for (double& x : v) x /= nv;
    out.vectors.set_col(comp, v);

    double obj = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
      const double d = quad_form(sigmas[s].sigma.mat(), v);
      out.variances(s, comp) = d;
      obj += w[s] * std::log(d);
    }
    out.objective_trace.push_back(obj);

    // deflated = P avg P with the full accepted set, for the next initializer
    Matrix pm = Matrix::identity(p);
    for (std::size_t k = 0; k <= comp; ++k) {
      const Vector col = out.vectors.col(k);
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j2 = 0; j2 < p; ++j2) pm(i, j2) -= col[i] * col[j2];
    }
    deflated = pm * avg * pm;
  }

  detail::fix_basis_signs(out.vectors);
  // recompute variances after sign fixing (quadratic forms are sign-invariant,
  // but keep them exactly consistent with the stored columns)
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t j = 0; j < q; ++j)
      out.variances(s, j) = quad_form(sigmas[s].sigma.mat(), out.vectors.col(j));

  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t j = 0; j + 1 < q; ++j)
      if (out.variances(s, j) < 0.95 * out.variances(s, j + 1)) ++out.soft_order_violations;
  return out;
}

// Explained variance of a basis against reference covariance matrices
// (true matrices in simulation, estimates on real data).
struct ExplainedVariance {
  Matrix axis_variance;        // S x q, v_j' Sigma_s v_j
  Matrix cumulative_fraction;  // S x q, cumulative sums over trace(Sigma_s)
};

inline ExplainedVariance explained_variance(const CommonBasis& basis,
                                            const std::vector<SymmetricMatrix>& truth) {
  if (truth.size() != basis.studies())
    throw DataError("explained_variance: study count mismatch");
  const std::size_t q = basis.q();
  ExplainedVariance ev;
  ev.axis_variance = Matrix(truth.size(), q);
  ev.cumulative_fraction = Matrix(truth.size(), q);
  for (std::size_t s = 0; s < truth.size(); ++s) {
    if (truth[s].dim() != basis.p())
      throw DataError("explained_variance: dimension mismatch for study " + std::to_string(s));
    const double tr = trace(truth[s].mat());
    double cum = 0.0;
    for (std::size_t j = 0; j < q; ++j) {
      const double d = quad_form(truth[s].mat(), basis.vectors.col(j));
      ev.axis_variance(s, j) = d;
      cum += d;
      ev.cumulative_fraction(s, j) = cum / tr;
    }
  }
  return ev;
}

// Scree rule: the suggested dimension is the largest axis index whose
// eigenvalue gap exceeds gap_fraction of the maximum gap.
struct ScreeSuggestion {
  std::size_t q = 1;
  bool flat_spectrum = false;
};

inline ScreeSuggestion suggest_q(const Vector& eigenvalues, double gap_fraction = 0.1) {
  if (eigenvalues.size() < 2)
    throw DataError("suggest_q: need at least two eigenvalues");
  Vector gaps(eigenvalues.size() - 1);
  double max_gap = 0.0;
  for (std::size_t j = 0; j + 1 < eigenvalues.size(); ++j) {
    gaps[j] = eigenvalues[j] - eigenvalues[j + 1];
    max_gap = std::max(max_gap, gaps[j]);
  }
  ScreeSuggestion out;
  if (max_gap <= 0.0) {
    out.flat_spectrum = true;
    return out;
  }
  for (std::size_t j = 0; j < gaps.size(); ++j)
    if (gaps[j] > gap_fraction * max_gap) out.q = j + 1;
  return out;
}

}  // namespace crosspca
