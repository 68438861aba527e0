// Copyright (c) 2026 crosspca contributors
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "crosspca/eigen.hpp"
#include "crosspca/matrix.hpp"
#include "crosspca/rng.hpp"

using namespace crosspca;

namespace {

SymmetricMatrix random_symmetric(std::size_t n, RngStream& rng, double scale = 1.0) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = scale * rng.normal();
  return SymmetricMatrix(std::move(m));
}

Matrix random_orthogonal(std::size_t n, RngStream& rng) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = rng.normal();
  for (std::size_t j = 0; j < n; ++j) REQUIRE(orthonormalize_column(m, j));
  return m;
}

}  // namespace

TEST_CASE("eig_sym on a diagonal matrix sorts values and permutes identity columns",
          "[linalg]") {
  SymmetricMatrix m = SymmetricMatrix::diagonal({3.0, 1.0, 2.0});
  EigenDecomposition ed = eig_sym(m);
  REQUIRE(ed.values == Vector{3.0, 2.0, 1.0});
  // each column is +/- a coordinate axis; sign convention makes it +
  REQUIRE(ed.vectors(0, 0) == 1.0);
  REQUIRE(ed.vectors(2, 1) == 1.0);
  REQUIRE(ed.vectors(1, 2) == 1.0);
}

TEST_CASE("eig_sym on the identity returns the identity", "[linalg]") {
  SymmetricMatrix m(Matrix::identity(5));
  EigenDecomposition ed = eig_sym(m);
  for (double v : ed.values) REQUIRE(v == 1.0);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      REQUIRE(ed.vectors(i, j) == (i == j ? 1.0 : 0.0));
}

TEST_CASE("eig_sym reconstruction, orthogonality and trace on random input", "[linalg]") {
  RngStream rng(42);
  for (int rep = 0; rep < 10; ++rep) {
    SymmetricMatrix m = random_symmetric(6, rng, 2.0);
    EigenDecomposition ed = eig_sym(m);

    const Matrix vtv = ed.vectors.transposed() * ed.vectors;
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        REQUIRE(std::fabs(vtv(i, j) - (i == j ? 1.0 : 0.0)) <= 1e-10);

    const Matrix rec = ed.reconstruct();
    REQUIRE(frobenius_norm(rec - m.mat()) <= 1e-8 * frobenius_norm(m.mat()));

    double vsum = 0.0;
    for (double v : ed.values) vsum += v;
    REQUIRE(std::fabs(vsum - trace(m.mat())) <= 1e-8 * std::fabs(trace(m.mat())) + 1e-12);

    for (std::size_t j = 0; j + 1 < ed.values.size(); ++j)
      REQUIRE(ed.values[j] >= ed.values[j + 1]);
  }
}

TEST_CASE("eig_sym rejects non-finite entries", "[linalg]") {
  Matrix m(2, 2, 0.0);
  m(0, 1) = m(1, 0) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(SymmetricMatrix(m), DataError);
}

TEST_CASE("psd_repair leaves a PD matrix unchanged", "[linalg]") {
  RngStream rng(7);
  SymmetricMatrix s = random_symmetric(4, rng);
  SymmetricMatrix pd(s.mat() * s.mat().transposed() + Matrix::identity(4));
  SymmetricMatrix out = psd_repair(pd, 1e-3);
  REQUIRE(frobenius_norm(out.mat() - pd.mat()) <= 1e-12);
}

TEST_CASE("psd_repair replaces non-positive eigenvalues by the halving floor", "[linalg]") {
  SymmetricMatrix m = SymmetricMatrix::diagonal({2.0, 0.0, -1.0});
  SymmetricMatrix out = psd_repair(m, 1e-3);
  EigenDecomposition ed = eig_sym(out);
  REQUIRE(ed.values[0] == Catch::Approx(2.0).margin(1e-12));
  REQUIRE(ed.values[1] == Catch::Approx(2e-3).margin(1e-15));
  REQUIRE(ed.values[2] == Catch::Approx(1e-3).margin(1e-15));
}

TEST_CASE("psd_repair keeps eigenvectors and gives a PD result", "[linalg]") {
  // 5x5 with two negative eigenvalues, built from a known eigenbasis
  RngStream rng(12);
  Matrix v = random_orthogonal(5, rng);
  Vector lam = {5.0, 3.0, 1.0, -0.5, -2.0};
  Matrix scaled = v;
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t i = 0; i < 5; ++i) scaled(i, j) *= lam[j];
  SymmetricMatrix m(scaled * v.transposed());

  SymmetricMatrix out = psd_repair(m, 1e-3);
  EigenDecomposition ed = eig_sym(out);
  REQUIRE(ed.values.back() > 0.0);

  // same eigenvectors: the full eigenbases span the same flags
  EigenDecomposition before = eig_sym(m);
  // compare the top-3 invariant subspace (unchanged eigenvalues)
  std::vector<std::size_t> top = {0, 1, 2};
  Vector ang = principal_angles(before.vectors.cols(top), ed.vectors.cols(top));
  for (double a : ang) REQUIRE(a <= 1e-10);

  // difference has rank <= number of repaired eigenvalues
  EigenDecomposition dd = eig_sym(SymmetricMatrix(out.mat() - m.mat()));
  std::size_t nonzero = 0;
  for (double x : dd.values)
    if (std::fabs(x) > 1e-9) ++nonzero;
  REQUIRE(nonzero <= 2);
}

TEST_CASE("psd_repair rejects a wholly non-positive matrix", "[linalg]") {
  SymmetricMatrix m = SymmetricMatrix::diagonal({-1.0, -2.0});
  REQUIRE_THROWS_AS(psd_repair(m, 1e-3), NumericError);
}

TEST_CASE("principal_angles basic geometry", "[linalg]") {
  RngStream rng(99);
  Matrix basis = random_orthogonal(6, rng);

  std::vector<std::size_t> first = {0, 1};
  std::vector<std::size_t> last = {4, 5};
  Matrix a = basis.cols(first);
  Matrix b = basis.cols(last);

  Vector same = principal_angles(a, a);
  for (double x : same) REQUIRE(x <= 1e-12);

  Vector perp = principal_angles(a, b);
  for (double x : perp) REQUIRE(std::fabs(x - 1.5707963267948966) <= 1e-10);

  // rotation within the span changes nothing
  Matrix r2 = random_orthogonal(2, rng);
  Matrix ar = a * r2;
  Vector rot = principal_angles(a, ar);
  for (double x : rot) REQUIRE(x <= 1e-10);

  // symmetric in its arguments
  Vector ab = principal_angles(a, b);
  Vector ba = principal_angles(b, a);
  for (std::size_t i = 0; i < ab.size(); ++i)
    REQUIRE(std::fabs(ab[i] - ba[i]) <= 1e-10);
}

TEST_CASE("principal_angles rejects mismatched column counts", "[linalg]") {
  Matrix a = Matrix::identity(4).cols({0, 1});
  Matrix b = Matrix::identity(4).cols({0, 1, 2});
  REQUIRE_THROWS_AS(principal_angles(a, b), DataError);
}

TEST_CASE("cholesky solve and inverse agree on a PD system", "[linalg]") {
  RngStream rng(5);
  SymmetricMatrix s = random_symmetric(5, rng);
  Matrix pd = s.mat() * s.mat().transposed() + Matrix::identity(5);

  Matrix l;
  REQUIRE(cholesky(pd, l));
  Vector b = {1.0, -2.0, 0.5, 3.0, -1.0};
  Vector x = chol_solve(l, b);
  Vector back = pd * x;
  for (std::size_t i = 0; i < 5; ++i) REQUIRE(back[i] == Catch::Approx(b[i]).margin(1e-9));

  Matrix inv = chol_inverse(l);
  Matrix prod = pd * inv;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      REQUIRE(std::fabs(prod(i, j) - (i == j ? 1.0 : 0.0)) <= 1e-9);

  EigenDecomposition ed = eig_sym(SymmetricMatrix(pd));
  double ld = 0.0;
  for (double v : ed.values) ld += std::log(v);
  REQUIRE(chol_logdet(l) == Catch::Approx(ld).margin(1e-9));
}

TEST_CASE("lower_triangular_gauge preserves the Gram matrix", "[linalg]") {
  RngStream rng(31);
  Matrix a(6, 3);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 3; ++j) a(i, j) = rng.normal();
  Matrix l = lower_triangular_gauge(a);
  REQUIRE(l.nrow == 6);
  REQUIRE(l.ncol == 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j) REQUIRE(l(i, j) == 0.0);
  Matrix g1 = a * a.transposed();
  Matrix g2 = l * l.transposed();
  REQUIRE(frobenius_norm(g1 - g2) <= 1e-10 * frobenius_norm(g1));
}
