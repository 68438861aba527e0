// Copyright (c) 2026 crosspca contributors
//
// Dense row-major matrices and the small set of factorizations the
// estimators need: Cholesky, Householder QR, Gram-Schmidt completion.

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "crosspca/errors.hpp"

namespace crosspca {

using Vector = std::vector<double>;

struct Matrix {
  std::size_t nrow = 0;
  std::size_t ncol = 0;
  std::vector<double> a;  // row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : nrow(r), ncol(c), a(r * c, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t i, std::size_t j) { return a[i * ncol + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * ncol + j]; }

  Vector col(std::size_t j) const {
    Vector v(nrow);
    for (std::size_t i = 0; i < nrow; ++i) v[i] = (*this)(i, j);
    return v;
  }
  void set_col(std::size_t j, const Vector& v) {
    for (std::size_t i = 0; i < nrow; ++i) (*this)(i, j) = v[i];
  }
  Vector row(std::size_t i) const {
    return Vector(a.begin() + i * ncol, a.begin() + (i + 1) * ncol);
  }

  Matrix transposed() const {
    Matrix t(ncol, nrow);
    for (std::size_t i = 0; i < nrow; ++i)
      for (std::size_t j = 0; j < ncol; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  // Columns js of this matrix as an nrow x js.size() block.
  Matrix cols(const std::vector<std::size_t>& js) const {
    Matrix b(nrow, js.size());
    for (std::size_t i = 0; i < nrow; ++i)
      for (std::size_t k = 0; k < js.size(); ++k) b(i, k) = (*this)(i, js[k]);
    return b;
  }
};

inline Matrix operator*(const Matrix& x, const Matrix& y) {
  if (x.ncol != y.nrow) throw DataError("matrix product: inner dimensions differ");
  Matrix z(x.nrow, y.ncol);
  for (std::size_t i = 0; i < x.nrow; ++i) {
    for (std::size_t k = 0; k < x.ncol; ++k) {
      const double xik = x(i, k);
      if (xik == 0.0) continue;
      for (std::size_t j = 0; j < y.ncol; ++j) z(i, j) += xik * y(k, j);
    }
  }
  return z;
}

inline Vector operator*(const Matrix& x, const Vector& v) {
  if (x.ncol != v.size()) throw DataError("matvec: dimensions differ");
  Vector z(x.nrow, 0.0);
  for (std::size_t i = 0; i < x.nrow; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.ncol; ++j) s += x(i, j) * v[j];
    z[i] = s;
  }
  return z;
}

inline Matrix operator+(const Matrix& x, const Matrix& y) {
  if (x.nrow != y.nrow || x.ncol != y.ncol) throw DataError("matrix sum: shapes differ");
  Matrix z = x;
  for (std::size_t i = 0; i < z.a.size(); ++i) z.a[i] += y.a[i];
  return z;
}

inline Matrix operator-(const Matrix& x, const Matrix& y) {
  if (x.nrow != y.nrow || x.ncol != y.ncol) throw DataError("matrix diff: shapes differ");
  Matrix z = x;
  for (std::size_t i = 0; i < z.a.size(); ++i) z.a[i] -= y.a[i];
  return z;
}

inline Matrix operator*(double c, const Matrix& x) {
  Matrix z = x;
  for (double& v : z.a) v *= c;
  return z;
}

inline double dot(const Vector& v, const Vector& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * w[i];
  return s;
}

inline double norm2(const Vector& v) { return std::sqrt(dot(v, v)); }

inline double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double v : m.a) s += v * v;
  return std::sqrt(s);
}

inline double trace(const Matrix& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.nrow && i < m.ncol; ++i) s += m(i, i);
  return s;
}

inline bool all_finite(const Matrix& m) {
  for (double v : m.a)
    if (!std::isfinite(v)) return false;
  return true;
}

// vᵀ M v for square M.
inline double quad_form(const Matrix& m, const Vector& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.nrow; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < m.ncol; ++j) r += m(i, j) * v[j];
    s += v[i] * r;
  }
  return s;
}

// Square matrix stored fully but guaranteed symmetric: construction averages
// A and Aᵀ and rejects non-finite entries.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;
  explicit SymmetricMatrix(Matrix m) {
    if (m.nrow != m.ncol) throw DataError("symmetric matrix must be square");
    if (!all_finite(m)) throw DataError("symmetric matrix has non-finite entries");
    for (std::size_t i = 0; i < m.nrow; ++i)
      for (std::size_t j = i + 1; j < m.ncol; ++j) {
        const double v = 0.5 * (m(i, j) + m(j, i));
        m(i, j) = v;
        m(j, i) = v;
      }
    m_ = std::move(m);
  }
  static SymmetricMatrix diagonal(const Vector& d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return SymmetricMatrix(std::move(m));
  }

  std::size_t dim() const { return m_.nrow; }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
  const Matrix& mat() const { return m_; }

 private:
  Matrix m_;
};

// Lower Cholesky factor of a positive definite matrix; empty on failure.
inline bool cholesky(const Matrix& m, Matrix& l) {
  const std::size_t n = m.nrow;
  l = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = m(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) return false;
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return true;
}

inline bool is_positive_definite(const Matrix& m) {
  Matrix l;
  return cholesky(m, l);
}

// Solve L Lᵀ x = b given the lower factor.
inline Vector chol_solve(const Matrix& l, const Vector& b) {
  const std::size_t n = l.nrow;
  Vector y(n), x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

inline Matrix chol_inverse(const Matrix& l) {
  const std::size_t n = l.nrow;
  Matrix inv(n, n);
  Vector e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    Vector x = chol_solve(l, e);
    inv.set_col(j, x);
    e[j] = 0.0;
  }
  // symmetrize away round-off
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 0.5 * (inv(i, j) + inv(j, i));
      inv(i, j) = v;
      inv(j, i) = v;
    }
  return inv;
}

inline double chol_logdet(const Matrix& l) {
  double s = 0.0;
  for (std::size_t i = 0; i < l.nrow; ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

// Inverse of a positive definite matrix; throws NumericError when the
// Cholesky factorization fails.
inline Matrix pd_inverse(const Matrix& m, const std::string& what) {
  Matrix l;
  if (!cholesky(m, l))
    throw NumericError(what + ": matrix is not positive definite");
  return chol_inverse(l);
}

// R factor of the Householder QR of a (rows >= not required). R is
// min(m,n) x n upper trapezoidal with nonnegative diagonal.
inline Matrix qr_r_factor(Matrix a) {
  const std::size_t m = a.nrow, n = a.ncol;
  const std::size_t steps = std::min(m, n);
  Vector v(m);
  for (std::size_t k = 0; k < steps; ++k) {
    double alpha = 0.0;
    for (std::size_t i = k; i < m; ++i) alpha += a(i, k) * a(i, k);
    alpha = std::sqrt(alpha);
    if (alpha == 0.0) continue;
    if (a(k, k) > 0.0) alpha = -alpha;
    double vnorm2 = 0.0;
    for (std::size_t i = k; i < m; ++i) {
      v[i] = a(i, k) - (i == k ? alpha : 0.0);
      vnorm2 += v[i] * v[i];
    }
    if (vnorm2 == 0.0) continue;
    for (std::size_t j = k; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k; i < m; ++i) s += v[i] * a(i, j);
      const double f = 2.0 * s / vnorm2;
      for (std::size_t i = k; i < m; ++i) a(i, j) -= f * v[i];
    }
  }
  Matrix r(steps, n);
  for (std::size_t i = 0; i < steps; ++i)
    for (std::size_t j = i; j < n; ++j) r(i, j) = a(i, j);
  for (std::size_t i = 0; i < steps; ++i) {
    if (r(i, i) < 0.0)
      for (std::size_t j = i; j < n; ++j) r(i, j) = -r(i, j);
  }
  return r;
}

// Lower-trapezoidal L with L Lᵀ = A Aᵀ, via QR of Aᵀ. Used to express a
// loadings block in its triangular gauge without changing its Gram matrix.
inline Matrix lower_triangular_gauge(const Matrix& a) {
  Matrix r = qr_r_factor(a.transposed());  // q x p upper trapezoid
  return r.transposed();                   // p x q lower trapezoid
}

// Lawson-Hanson active-set solve of  min ||a x - b||  subject to x >= 0.
// Deterministic: ties in the gradient pick the lowest index.
inline Vector nnls(const Matrix& a, const Vector& b, std::size_t max_iter = 0) {
  const std::size_t n = a.ncol;
  if (max_iter == 0) max_iter = 10 * n + 100;
  Vector x(n, 0.0);
  std::vector<bool> passive(n, false);

  auto residual = [&]() {
    Vector r = b;
    for (std::size_t i = 0; i < a.nrow; ++i)
      for (std::size_t j = 0; j < n; ++j) r[i] -= a(i, j) * x[j];
    return r;
  };
  auto solve_passive = [&](std::vector<std::size_t>& idx, Vector& z) {
    idx.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (passive[j]) idx.push_back(j);
    const std::size_t m = idx.size();
    Matrix ata(m, m);
    Vector atb(m, 0.0);
    for (std::size_t c = 0; c < m; ++c) {
      for (std::size_t d = c; d < m; ++d) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.nrow; ++i) s += a(i, idx[c]) * a(i, idx[d]);
        ata(c, d) = s;
        ata(d, c) = s;
      }
      double s = 0.0;
      for (std::size_t i = 0; i < a.nrow; ++i) s += a(i, idx[c]) * b[i];
      atb[c] = s;
    }
    Matrix l;
    if (!cholesky(ata, l))
      throw NumericError("nnls: passive-set system is singular");
    z = chol_solve(l, atb);
  };

  double scale = 0.0;
  for (double v : b) scale = std::max(scale, std::fabs(v));
  const double tol = 1e-12 * (scale + 1.0);

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    Vector r = residual();
    double wbest = tol;
    std::size_t jbest = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (passive[j]) continue;
      double w = 0.0;
      for (std::size_t i = 0; i < a.nrow; ++i) w += a(i, j) * r[i];
      if (w > wbest) {
        wbest = w;
        jbest = j;
      }
    }
    if (jbest == n) return x;  // KKT satisfied
    passive[jbest] = true;

    for (std::size_t inner = 0; inner < max_iter; ++inner) {
      std::vector<std::size_t> idx;
      Vector z;
      solve_passive(idx, z);
      bool feasible = true;
      double alpha = 1.0;
      for (std::size_t c = 0; c < idx.size(); ++c) {
        if (z[c] <= 0.0) {
          feasible = false;
          const double xj = x[idx[c]];
          alpha = std::min(alpha, xj / (xj - z[c]));
        }
      }
      if (feasible) {
        for (std::size_t c = 0; c < idx.size(); ++c) x[idx[c]] = z[c];
        break;
      }
      for (std::size_t c = 0; c < idx.size(); ++c) {
        x[idx[c]] += alpha * (z[c] - x[idx[c]]);
        if (x[idx[c]] <= 1e-14) {
          x[idx[c]] = 0.0;
          passive[idx[c]] = false;
        }
      }
    }
  }
  throw ConvergenceError("nnls: iteration budget exhausted");
}

// Orthonormalize column j of m against columns [0, j) and normalize, with one
// re-orthogonalization pass. Returns false when the column is numerically in
// the span of the previous ones.
inline bool orthonormalize_column(Matrix& m, std::size_t j) {
  Vector v = m.col(j);
  const double initial = norm2(v);
  if (initial == 0.0) return false;
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t k = 0; k < j; ++k) {
      const Vector u = m.col(k);
      const double c = dot(u, v);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * u[i];
    }
  }
  const double rn = norm2(v);
  if (rn < 1e-10 * initial || rn == 0.0) return false;
  for (double& x : v) x /= rn;
  m.set_col(j, v);
  return true;
}

}  // namespace crosspca
