// Copyright (c) 2026 crosspca contributors
//
// Symmetric eigendecomposition by cyclic Jacobi sweeps, positive-definite
// repair of indefinite estimates, and principal angles between subspaces.
// Everything here is deterministic: fixed sweep order, fixed sign and tie
// conventions, no threading.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "crosspca/errors.hpp"
#include "crosspca/matrix.hpp"

namespace crosspca {

struct EigenDecomposition {
  Vector values;   // descending
  Matrix vectors;  // column j pairs with values[j]

  Matrix reconstruct() const {
    const std::size_t n = values.size();
    Matrix scaled = vectors;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) scaled(i, j) *= values[j];
    return scaled * vectors.transposed();
  }
};

namespace detail {

// Sign convention: the largest-magnitude component of each eigenvector is
// positive, ties resolved by the lowest row index. Keeps eigenvector output
// reproducible so downstream CSV files are stable.
inline void fix_column_signs(Matrix& v) {
  for (std::size_t j = 0; j < v.ncol; ++j) {
    std::size_t imax = 0;
    double amax = -1.0;
    for (std::size_t i = 0; i < v.nrow; ++i) {
      const double av = std::fabs(v(i, j));
      if (av > amax) {
        amax = av;
        imax = i;
      }
    }
    if (v(imax, j) < 0.0)
      for (std::size_t i = 0; i < v.nrow; ++i) v(i, j) = -v(i, j);
  }
}

}  // namespace detail

// Cyclic Jacobi, row-major pair order. Converged when the largest
// off-diagonal magnitude drops below 1e-12 * ||m||_F; at most 100 sweeps.
inline EigenDecomposition eig_sym(const SymmetricMatrix& m) {
  const std::size_t n = m.dim();
  if (!all_finite(m.mat())) throw DataError("eig_sym: non-finite entries");

  Matrix w = m.mat();
  Matrix v = Matrix::identity(n);
  const double thresh = 1e-12 * frobenius_norm(w);

  bool converged = n < 2;
  for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off = std::max(off, std::fabs(w(p, q)));
    if (off <= thresh) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = w(p, q);
        if (std::fabs(apq) <= thresh) continue;
        const double theta = 0.5 * (w(q, q) - w(p, p)) / apq;
        double t;
        if (std::fabs(theta) > 1e150) {
          t = 0.5 / theta;  // avoid overflow in theta^2
        } else {
          t = 1.0 / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
          if (theta < 0.0) t = -t;
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);
        const double h = t * apq;
        w(p, p) -= h;
        w(q, q) += h;
        w(p, q) = 0.0;
        w(q, p) = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (i != p && i != q) {
            const double wip = w(i, p), wiq = w(i, q);
            w(i, p) = wip - s * (wiq + tau * wip);
            w(p, i) = w(i, p);
            w(i, q) = wiq + s * (wip - tau * wiq);
            w(q, i) = w(i, q);
          }
          const double vip = v(i, p), viq = v(i, q);
          v(i, p) = vip - s * (viq + tau * vip);
          v(i, q) = viq + s * (vip - tau * viq);
        }
      }
    }
  }
  if (!converged) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off = std::max(off, std::fabs(w(p, q)));
    if (off > thresh)
      throw ConvergenceError("eig_sym: Jacobi sweeps exhausted before convergence");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return w(i, i) > w(j, j); });

  EigenDecomposition out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = w(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
  }
  detail::fix_column_signs(out.vectors);
  return out;
}

// Replace non-positive eigenvalues with a strictly decreasing positive
// sequence floor_scale * lambda_min_pos * 2^-k, k = 0,1,... in descending
// eigenvalue order, keeping the original eigenvectors. Already-PD input is
// returned unchanged.
inline SymmetricMatrix psd_repair(const SymmetricMatrix& m, double floor_scale = 1e-3) {
  if (!(floor_scale > 0.0)) throw DataError("psd_repair: floor_scale must be positive");
  EigenDecomposition ed = eig_sym(m);
  double lambda_min_pos = 0.0;
  std::size_t n_bad = 0;
  for (double lm : ed.values) {
    if (lm > 0.0)
      lambda_min_pos = lm;  // values descend, so this ends at the smallest positive
    else
      ++n_bad;
  }
  if (n_bad == 0) return m;
  if (lambda_min_pos == 0.0)
    throw NumericError("psd_repair: all eigenvalues non-positive, nothing to anchor the floor");

  std::size_t k = 0;
  for (double& lm : ed.values) {
    if (lm <= 0.0) {
      lm = floor_scale * lambda_min_pos * std::ldexp(1.0, -static_cast<int>(k));
      ++k;
    }
  }
  return SymmetricMatrix(ed.reconstruct());
}

namespace detail {

// Singular values of a general matrix via the Gram matrix; adequate here
// because every consumer pairs it with the sine/cosine split below.
inline Vector singular_values(const Matrix& m) {
  const SymmetricMatrix gram(m.transposed() * m);
  EigenDecomposition ed = eig_sym(gram);
  Vector sv(ed.values.size());
  for (std::size_t i = 0; i < sv.size(); ++i) sv[i] = std::sqrt(std::max(0.0, ed.values[i]));
  return sv;  // descending
}

inline void require_orthonormal_columns(const Matrix& m, const char* name) {
  for (std::size_t j = 0; j < m.ncol; ++j) {
    Vector vj = m.col(j);
    if (std::fabs(norm2(vj) - 1.0) > 1e-6)
      throw DataError(std::string("principal_angles: ") + name + " columns are not unit length");
    for (std::size_t k = j + 1; k < m.ncol; ++k)
      if (std::fabs(dot(vj, m.col(k))) > 1e-6)
        throw DataError(std::string("principal_angles: ") + name + " columns are not orthogonal");
  }
}

}  // namespace detail

// Angles between span(a) and span(b), ascending, each in [0, pi/2].
// Small angles come from the sine route (singular values of b - a aᵀ b),
// large ones from the cosine route (singular values of aᵀ b); the split at
// pi/4 keeps both ends accurate.
inline Vector principal_angles(const Matrix& a, const Matrix& b) {
  if (a.ncol != b.ncol) throw DataError("principal_angles: column counts differ");
  if (a.nrow != b.nrow) throw DataError("principal_angles: ambient dimensions differ");
  detail::require_orthonormal_columns(a, "first argument");
  detail::require_orthonormal_columns(b, "second argument");

  const std::size_t q = a.ncol;
  const Matrix atb = a.transposed() * b;
  Vector cosines = detail::singular_values(atb);  // descending
  const Matrix residual = b - a * atb;
  Vector sines = detail::singular_values(residual);       // descending
  std::reverse(sines.begin(), sines.end());               // ascending, pairs with cosines

  Vector angles(q);
  for (std::size_t i = 0; i < q; ++i) {
    const double c = std::min(1.0, cosines[i]);
    const double s = std::min(1.0, sines[i]);
    angles[i] = (c * c >= 0.5) ? std::asin(s) : std::acos(c);
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

}  // namespace crosspca
