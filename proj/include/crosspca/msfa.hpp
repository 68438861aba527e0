// Copyright (c) 2026 crosspca contributors
//
// Multi-study factor analysis on covariance estimates:
//   Sigma_s = Phi Phi' + beta_s beta_s' + Psi_s,  Psi_s diagonal,
// with Phi (p x q) shared and beta_s (p x l_s) study-specific. The Wishart
// log-likelihood depends on the data only through (Sigma_hat_s, n_s), so the
// ECM runs entirely on those sufficient statistics.
//
// Identifiability: Phi and each beta_s are kept lower trapezoidal. The CM
// updates solve each loading row restricted to its free entries, which keeps
// every conditional maximization exact and the likelihood non-decreasing;
// zeroing entries after an unconstrained solve would not.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "crosspca/cpca.hpp"
#include "crosspca/eigen.hpp"
#include "crosspca/errors.hpp"
#include "crosspca/matrix.hpp"
#include "crosspca/rng.hpp"
#include "crosspca/variance.hpp"

namespace crosspca {

struct MsfaConfig {
  std::size_t q = 1;               // common factors
  std::vector<std::size_t> l;      // study-specific factors, one per study
  std::size_t max_iter = 500;
  double tol = 1e-7;               // relative log-likelihood change
  std::size_t restarts = 5;
  std::uint64_t seed = 0;
};

struct MsfaFit {
  Matrix phi;                  // p x q, lower trapezoidal
  std::vector<Matrix> betas;   // p x l_s, lower trapezoidal
  std::vector<Vector> psis;    // diagonal noise, strictly positive
  std::vector<double> loglik_trace;  // winning restart
  std::vector<std::vector<double>> all_traces;
  bool converged = false;
  std::size_t restart_index = 0;
};

namespace detail {

struct EcmState {
  Matrix phi;
  std::vector<Matrix> betas;
  std::vector<Vector> psis;
};

inline Matrix model_covariance(const EcmState& st, std::size_t s) {
  const std::size_t p = st.phi.nrow;
  Matrix m(p, p);
  const Matrix& phi = st.phi;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i; j < p; ++j) {
      double v = 0.0;
      for (std::size_t k = 0; k < phi.ncol; ++k) v += phi(i, k) * phi(j, k);
      const Matrix& b = st.betas[s];
      for (std::size_t k = 0; k < b.ncol; ++k) v += b(i, k) * b(j, k);
      m(i, j) = v;
      m(j, i) = v;
    }
  for (std::size_t i = 0; i < p; ++i) m(i, i) += st.psis[s][i];
  return m;
}

inline double wishart_loglik(const EcmState& st,
                             const std::vector<StudyVarianceEstimate>& sigmas) {
  double ll = 0.0;
  for (std::size_t s = 0; s < sigmas.size(); ++s) {
    Matrix cov = model_covariance(st, s);
    Matrix l;
    if (!cholesky(cov, l))
      throw NumericError("msfa: model covariance lost positive definiteness");
    const Matrix inv = chol_inverse(l);
    double tr = 0.0;
    const Matrix& sh = sigmas[s].sigma.mat();
    for (std::size_t i = 0; i < cov.nrow; ++i)
      for (std::size_t j = 0; j < cov.ncol; ++j) tr += inv(i, j) * sh(j, i);
    ll += -0.5 * static_cast<double>(sigmas[s].n) * (chol_logdet(l) + tr);
  }
  return ll;
}

// One ECM iteration; mutates the state in place.
inline void ecm_iterate(EcmState& st, const std::vector<StudyVarianceEstimate>& sigmas) {
  const std::size_t p = st.phi.nrow, q = st.phi.ncol, ns = sigmas.size();
  constexpr double kPsiFloor = 1e-8;

  // E-step statistics per study
  std::vector<Matrix> cxz(ns), czz(ns);
  std::vector<std::size_t> width(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    const std::size_t ls = st.betas[s].ncol;
    const std::size_t k = q + ls;
    width[s] = k;
    Matrix lam(p, k);
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < q; ++j) lam(i, j) = st.phi(i, j);
      for (std::size_t j = 0; j < ls; ++j) lam(i, q + j) = st.betas[s](i, j);
    }
    Matrix cov = model_covariance(st, s);
    Matrix l;
    if (!cholesky(cov, l))
      throw NumericError("msfa: model covariance lost positive definiteness");
    const Matrix inv = chol_inverse(l);
    const Matrix b = lam.transposed() * inv;         // k x p
    cxz[s] = sigmas[s].sigma.mat() * b.transposed();  // p x k
    Matrix zz = b * cxz[s];                           // k x k
    const Matrix bl = b * lam;
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t c = 0; c < k; ++c) zz(a, c) += (a == c ? 1.0 : 0.0) - bl(a, c);
    czz[s] = std::move(zz);
  }

  // CM: shared loadings, row by row on the free (lower-trapezoid) entries
  if (q > 0) {
    for (std::size_t r = 0; r < p; ++r) {
      const std::size_t act = std::min(r + 1, q);
      Matrix g(act, act);
      Vector rhs(act, 0.0);
      for (std::size_t s = 0; s < ns; ++s) {
        const double wgt = static_cast<double>(sigmas[s].n) / st.psis[s][r];
        const std::size_t ls = st.betas[s].ncol;
        for (std::size_t a = 0; a < act; ++a) {
          for (std::size_t c = 0; c < act; ++c) g(a, c) += wgt * czz[s](a, c);
          double v = cxz[s](r, a);
          for (std::size_t k = 0; k < ls; ++k) v -= st.betas[s](r, k) * czz[s](q + k, a);
          rhs[a] += wgt * v;
        }
      }
      Matrix l;
      if (!cholesky(g, l)) throw NumericError("msfa: singular system in the Phi update");
      Vector row = chol_solve(l, rhs);
      for (std::size_t a = 0; a < q; ++a) st.phi(r, a) = a < act ? row[a] : 0.0;
    }
  }

  // CM: study loadings given the updated Phi
  for (std::size_t s = 0; s < ns; ++s) {
    const std::size_t ls = st.betas[s].ncol;
    if (ls == 0) continue;
    for (std::size_t r = 0; r < p; ++r) {
      const std::size_t act = std::min(r + 1, ls);
      Matrix g(act, act);
      Vector rhs(act, 0.0);
      for (std::size_t a = 0; a < act; ++a) {
        for (std::size_t c = 0; c < act; ++c) g(a, c) = czz[s](q + a, q + c);
        double v = cxz[s](r, q + a);
        for (std::size_t k = 0; k < q; ++k) v -= st.phi(r, k) * czz[s](k, q + a);
        rhs[a] = v;
      }
      Matrix l;
      if (!cholesky(g, l)) throw NumericError("msfa: singular system in a beta update");
      Vector row = chol_solve(l, rhs);
      for (std::size_t a = 0; a < ls; ++a) st.betas[s](r, a) = a < act ? row[a] : 0.0;
    }
  }

  // CM: noise diagonals given the updated loadings
  for (std::size_t s = 0; s < ns; ++s) {
    const std::size_t ls = st.betas[s].ncol;
    const std::size_t k = width[s];
    Matrix lam(p, k);
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < q; ++j) lam(i, j) = st.phi(i, j);
      for (std::size_t j = 0; j < ls; ++j) lam(i, q + j) = st.betas[s](i, j);
    }
    for (std::size_t r = 0; r < p; ++r) {
      double v = sigmas[s].sigma(r, r);
      for (std::size_t a = 0; a < k; ++a) v -= 2.0 * lam(r, a) * cxz[s](r, a);
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t c = 0; c < k; ++c) v += lam(r, a) * czz[s](a, c) * lam(r, c);
      st.psis[s][r] = std::max(v, kPsiFloor);
    }
  }
}

}  // namespace detail

inline void validate_msfa_config(const MsfaConfig& cfg, std::size_t p, std::size_t studies) {
  if (cfg.l.size() != studies)
    throw ConfigError("msfa: need one study-specific factor count per study");
  std::size_t total = cfg.q;
  for (std::size_t ls : cfg.l) {
    if (ls > p) throw ConfigError("msfa: study factor count exceeds dimension");
    total += ls;
  }
  if (cfg.q > p) throw ConfigError("msfa: common factor count exceeds dimension");
  if (total > p)
    throw ConfigError("msfa: q + sum(l_s) = " + std::to_string(total) +
                      " exceeds p = " + std::to_string(p) +
                      "; the joint loadings cannot have full column rank");
  if (cfg.restarts < 1) throw ConfigError("msfa: need at least one restart");
}

inline MsfaFit fit_msfa(const std::vector<StudyVarianceEstimate>& sigmas,
                        const MsfaConfig& cfg) {
  if (sigmas.empty()) throw DataError("msfa: no study estimates supplied");
  const std::size_t p = sigmas[0].sigma.dim(), ns = sigmas.size();
  validate_msfa_config(cfg, p, ns);
  for (const auto& e : sigmas) {
    if (e.sigma.dim() != p) throw DataError("msfa: estimates differ in dimension");
    if (!is_positive_definite(e.sigma.mat()))
      throw NumericError("msfa: estimate for study '" + e.study_label +
                         "' is not positive definite; apply psd_repair first");
  }

  // Warm start: common block from the stepwise basis scaled by pooled
  // variances, study blocks from residual spectra, everything re-gauged
  // lower trapezoidal.
  detail::EcmState base;
  base.phi = Matrix(p, cfg.q);
  if (cfg.q > 0) {
    Matrix raw(p, cfg.q);
    bool have_basis = false;
    try {
      CommonBasis cb = scpca(sigmas, cfg.q);
      double wsum = 0.0;
      for (std::size_t s = 0; s < ns; ++s) wsum += sigmas[s].weight();
      for (std::size_t j = 0; j < cfg.q; ++j) {
        double pooled = 0.0;
        for (std::size_t s = 0; s < ns; ++s) pooled += sigmas[s].weight() * cb.variances(s, j);
        pooled = std::max(pooled / wsum, 1e-8);
        for (std::size_t i = 0; i < p; ++i) raw(i, j) = cb.vectors(i, j) * std::sqrt(pooled);
      }
      have_basis = true;
    } catch (const NumericError&) {
      // fall back to the pooled spectrum
    }
    if (!have_basis) {
      Vector wnorm(ns);
      double wsum = 0.0;
      for (std::size_t s = 0; s < ns; ++s) wsum += sigmas[s].weight();
      for (std::size_t s = 0; s < ns; ++s) wnorm[s] = sigmas[s].weight() / wsum;
      EigenDecomposition ed = eig_sym(SymmetricMatrix(detail::weighted_average(sigmas, wnorm)));
      for (std::size_t j = 0; j < cfg.q; ++j)
        for (std::size_t i = 0; i < p; ++i)
          raw(i, j) = ed.vectors(i, j) * std::sqrt(std::max(ed.values[j], 1e-8));
    }
    base.phi = lower_triangular_gauge(raw);
  }
  base.betas.resize(ns);
  base.psis.resize(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    Matrix resid = sigmas[s].sigma.mat() - base.phi * base.phi.transposed();
    const std::size_t ls = cfg.l[s];
    base.betas[s] = Matrix(p, ls);
    if (ls > 0) {
      EigenDecomposition ed = eig_sym(SymmetricMatrix(resid));
      Matrix braw(p, ls);
      for (std::size_t j = 0; j < ls; ++j)
        for (std::size_t i = 0; i < p; ++i)
          braw(i, j) = ed.vectors(i, j) * std::sqrt(std::max(ed.values[j], 1e-4));
      base.betas[s] = lower_triangular_gauge(braw);
    }
    base.psis[s].assign(p, 0.0);
    for (std::size_t r = 0; r < p; ++r) {
      double v = resid(r, r);
      for (std::size_t j = 0; j < ls; ++j) v -= base.betas[s](r, j) * base.betas[s](r, j);
      base.psis[s][r] = std::max(v, 1e-6);
    }
  }

  MsfaFit best;
  bool have_best = false;
  RngStream root(cfg.seed);
  std::vector<std::vector<double>> all_traces;

  for (std::size_t restart = 0; restart < cfg.restarts; ++restart) {
    detail::EcmState st = base;
    if (restart > 0) {
      RngStream jitter = root.substream("msfa-restart", restart);
      for (double& v : st.phi.a) v *= std::exp(0.1 * jitter.normal());
    }
    std::vector<double> tr;
    bool ok = true, conv = false;
    try {
      tr.push_back(detail::wishart_loglik(st, sigmas));
      for (std::size_t it = 0; it < cfg.max_iter; ++it) {
        detail::ecm_iterate(st, sigmas);
        const double ll = detail::wishart_loglik(st, sigmas);
        const double prev = tr.back();
        tr.push_back(ll);
        if (ll < prev - 1e-7)
          throw ConvergenceError("msfa: log-likelihood decreased by " +
                                 std::to_string(prev - ll));
        if (std::fabs(ll - prev) <= cfg.tol * (std::fabs(prev) + 1.0)) {
          conv = true;
          break;
        }
      }
    } catch (const NumericError&) {
      ok = false;
    }
    all_traces.push_back(tr);
    if (!ok || !conv) continue;
    if (!have_best || tr.back() > best.loglik_trace.back()) {
      best.phi = st.phi;
      best.betas = st.betas;
      best.psis = st.psis;
      best.loglik_trace = tr;
      best.converged = true;
      best.restart_index = restart;
      have_best = true;
    }
  }
  if (!have_best)
    throw ConvergenceError("msfa: no restart converged within " +
                               std::to_string(cfg.max_iter) + " iterations",
                           all_traces);
  best.all_traces = std::move(all_traces);
  return best;
}

// Orthonormal common axes from the spectral decomposition of Phi Phi',
// with per-study variances recorded against the input estimates.
inline CommonBasis rotate_common(const MsfaFit& fit,
                                 const std::vector<StudyVarianceEstimate>& sigmas,
                                 std::size_t q) {
  if (!fit.converged) throw DataError("rotate_common: fit did not converge");
  const std::size_t p = fit.phi.nrow;
  EigenDecomposition ed = eig_sym(SymmetricMatrix(fit.phi * fit.phi.transposed()));
  std::size_t rank = 0;
  const double thresh = 1e-10 * std::max(ed.values.empty() ? 0.0 : ed.values[0], 1e-300);
  for (double v : ed.values)
    if (v > thresh) ++rank;
  if (q > rank)
    throw NumericError("rotate_common: requested " + std::to_string(q) +
                       " axes but Phi Phi' has rank " + std::to_string(rank));

  CommonBasis out;
  out.vectors = Matrix(p, q);
  for (std::size_t j = 0; j < q; ++j)
    for (std::size_t i = 0; i < p; ++i) out.vectors(i, j) = ed.vectors(i, j);
  out.variances = Matrix(sigmas.size(), q);
  out.weights.resize(sigmas.size());
  for (std::size_t s = 0; s < sigmas.size(); ++s) {
    out.weights[s] = sigmas[s].weight();
    for (std::size_t j = 0; j < q; ++j)
      out.variances(s, j) = quad_form(sigmas[s].sigma.mat(), out.vectors.col(j));
  }
  out.method = BasisMethod::msfa;
  out.objective_trace = fit.loglik_trace;
  return out;
}

}  // namespace crosspca
