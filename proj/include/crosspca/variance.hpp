// Copyright (c) 2026 crosspca contributors
//
// Moment estimator of Sigma = Var(log Lambda) from counts with Poisson
// measurement error, and the compositional sequencing-depth correction that
// maps an estimate into the orthogonal complement of the all-ones vector.

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "crosspca/counts.hpp"
#include "crosspca/errors.hpp"
#include "crosspca/matrix.hpp"
#include "crosspca/transform.hpp"

namespace crosspca {

enum class VarianceMethod { poisson_moment, pln_variational };

inline const char* to_string(VarianceMethod m) {
  return m == VarianceMethod::poisson_moment ? "poisson-moment" : "pln-variational";
}

struct StudyVarianceEstimate {
  Vector mean;            // estimated E[log Lambda], per feature
  SymmetricMatrix sigma;  // p x p
  std::size_t n = 0;      // samples behind the estimate
  VarianceMethod method = VarianceMethod::poisson_moment;
  bool sdc = false;
  bool repaired = false;
  std::string study_label;
  std::vector<std::string> features;

  double weight() const { return static_cast<double>(n) - 1.0; }
};

// sigma = cov(f(X)) - diag(colmeans k(X)), mean = colmeans f(X).
// The k term removes the average Poisson sampling variance, so sigma can be
// indefinite; callers needing definiteness run psd_repair afterwards.
inline StudyVarianceEstimate estimate_poisson_variance(const CountMatrix& x,
                                                       const TransformPair& t) {
  x.validate();
  const std::size_t n = x.n(), p = x.p();
  if (n < 3)
    throw DataError("estimate_poisson_variance: need at least 3 samples, got " +
                    std::to_string(n));
  for (std::size_t j = 0; j < p; ++j) {
    bool any = false;
    for (std::size_t i = 0; i < n; ++i)
      if (x(i, j) != 0) {
        any = true;
        break;
      }
    if (!any)
      throw DataError("estimate_poisson_variance: feature '" + x.features[j] +
                      "' is zero in every sample (zero-variance feature)");
  }

  TransformedCounts tc = apply_transform(t, x);
  StudyVarianceEstimate e;
  e.mean.assign(p, 0.0);
  Vector kbar(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      e.mean[j] += tc.f(i, j);
      kbar[j] += tc.k(i, j);
    }
  for (std::size_t j = 0; j < p; ++j) {
    e.mean[j] /= static_cast<double>(n);
    kbar[j] /= static_cast<double>(n);
  }

  Matrix s(p, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < p; ++a) {
      const double da = tc.f(i, a) - e.mean[a];
      for (std::size_t b = a; b < p; ++b) s(a, b) += da * (tc.f(i, b) - e.mean[b]);
    }
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = a; b < p; ++b) {
      s(a, b) /= static_cast<double>(n - 1);
      s(b, a) = s(a, b);
    }
  for (std::size_t j = 0; j < p; ++j) s(j, j) -= kbar[j];

  e.sigma = SymmetricMatrix(std::move(s));
  e.n = n;
  e.method = VarianceMethod::poisson_moment;
  e.study_label = x.study_label;
  e.features = x.features;
  return e;
}

// Sigma* = Sigma - (pI + 11')^{-1} Sigma 11' - 11' Sigma (pI + 11')^{-1},
// with the inverse taken in closed form, (I - 11'/(2p))/p. The result is
// symmetric and annihilates the all-ones vector while agreeing with Sigma as
// a bilinear form on its orthogonal complement.
inline SymmetricMatrix depth_correct(const SymmetricMatrix& sigma) {
  const std::size_t p = sigma.dim();
  Vector u(p, 0.0);  // Sigma 1
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) u[i] += sigma(i, j);
  double usum = 0.0;
  for (double v : u) usum += v;
  Vector cu(p);  // (pI + 11')^{-1} Sigma 1
  for (std::size_t i = 0; i < p; ++i)
    cu[i] = (u[i] - usum / (2.0 * static_cast<double>(p))) / static_cast<double>(p);

  Matrix out = sigma.mat();
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) out(i, j) -= cu[i] + cu[j];
  return SymmetricMatrix(std::move(out));
}

inline StudyVarianceEstimate apply_sdc(const StudyVarianceEstimate& e) {
  if (e.sdc) throw DataError("apply_sdc: estimate is already depth-corrected");
  StudyVarianceEstimate out = e;
  out.sigma = depth_correct(e.sigma);
  out.sdc = true;
  return out;
}

}  // namespace crosspca
