// Copyright (c) 2026 crosspca contributors
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "crosspca/cpca.hpp"
#include "crosspca/rng.hpp"

using namespace crosspca;

namespace {

Matrix random_orthogonal(std::size_t n, RngStream& rng) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = rng.normal();
  for (std::size_t j = 0; j < n; ++j) REQUIRE(orthonormalize_column(m, j));
  return m;
}

StudyVarianceEstimate make_estimate(const Matrix& sigma, std::size_t n, const std::string& label) {
  StudyVarianceEstimate e;
  e.sigma = SymmetricMatrix(sigma);
  e.n = n;
  e.study_label = label;
  return e;
}

Matrix assemble(const Matrix& v, const Vector& eig) {
  Matrix scaled = v;
  for (std::size_t j = 0; j < v.ncol; ++j)
    for (std::size_t i = 0; i < v.nrow; ++i, (void)0) scaled(i, j) *= eig[j];
  return scaled * v.transposed();
}

StudyVarianceEstimate random_pd_estimate(std::size_t p, RngStream& rng, std::size_t n,
                                         const std::string& label) {
  Matrix v = random_orthogonal(p, rng);
  Vector eig(p);
  for (std::size_t j = 0; j < p; ++j) eig[j] = 0.3 + rng.gamma(2.0, 1.0);
  return make_estimate(assemble(v, eig), n, label);
}

// Sine of the angle between two unit columns, accurate down to machine noise.
double column_angle(const Matrix& a, std::size_t ja, const Matrix& b, std::size_t jb) {
  double dplus = 0.0, dminus = 0.0;
  for (std::size_t i = 0; i < a.nrow; ++i) {
    const double x = a(i, ja), y = b(i, jb);
    dplus += (x - y) * (x - y);
    dminus += (x + y) * (x + y);
  }
  return std::sqrt(std::min(dplus, dminus));  // chord length ~ angle for small angles
}

}  // namespace

TEST_CASE("single-study CPCA reduces to ordinary PCA", "[cpca]") {
  RngStream rng(1001);
  StudyVarianceEstimate e = random_pd_estimate(8, rng, 40, "single");
  EigenDecomposition ed = eig_sym(e.sigma);

  CommonBasis fc = fcpca({e}, 8);
  CommonBasis sc = scpca({e}, 8);
  for (std::size_t j = 0; j < 8; ++j) {
    REQUIRE(fc.variances(0, j) == Catch::Approx(ed.values[j]).margin(1e-8));
    REQUIRE(column_angle(fc.vectors, j, ed.vectors, j) <= 1e-8);
    REQUIRE(sc.variances(0, j) == Catch::Approx(ed.values[j]).margin(1e-6));
    REQUIRE(column_angle(sc.vectors, j, ed.vectors, j) <= 1e-6);
  }
}

TEST_CASE("already-diagonal inputs return coordinate axes", "[cpca]") {
  StudyVarianceEstimate e1 = make_estimate(SymmetricMatrix::diagonal({5.0, 3.0, 1.0}).mat(), 30, "a");
  StudyVarianceEstimate e2 = make_estimate(SymmetricMatrix::diagonal({4.0, 2.5, 0.5}).mat(), 20, "b");
  CommonBasis fc = fcpca({e1, e2}, 3);
  Matrix id = Matrix::identity(3);
  for (std::size_t j = 0; j < 3; ++j) REQUIRE(column_angle(fc.vectors, j, id, j) <= 1e-10);
}

TEST_CASE("exact common structure is recovered", "[cpca]") {
  RngStream rng(2002);
  const std::size_t p = 12;
  Matrix v = random_orthogonal(p, rng);
  Vector e1(p), e2(p);
  for (std::size_t j = 0; j < p; ++j) {
    e1[j] = 14.0 - double(j);              // 14 .. 3, distinct decreasing
    e2[j] = 9.0 - 0.6 * double(j);         // distinct decreasing
  }
  StudyVarianceEstimate s1 = make_estimate(assemble(v, e1), 200, "g1");
  StudyVarianceEstimate s2 = make_estimate(assemble(v, e2), 100, "g2");

  CommonBasis fc = fcpca({s1, s2}, p);
  for (std::size_t j = 0; j < p; ++j) REQUIRE(column_angle(fc.vectors, j, v, j) <= 1e-6);

  CommonBasis sc = scpca({s1, s2}, p);
  for (std::size_t j = 0; j < p; ++j) REQUIRE(column_angle(sc.vectors, j, fc.vectors, j) <= 1e-4);

  // recorded variances match the recompute identity
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t j = 0; j < p; ++j) {
      const auto& m = (s == 0 ? s1 : s2).sigma.mat();
      REQUIRE(fc.variances(s, j) ==
              Catch::Approx(quad_form(m, fc.vectors.col(j))).margin(1e-10));
    }

  // orthonormal output
  Matrix vtv = fc.vectors.transposed() * fc.vectors;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j)
      REQUIRE(std::fabs(vtv(i, j) - (i == j ? 1.0 : 0.0)) <= 1e-8);
}

TEST_CASE("fcpca objective is non-increasing and optimality holds", "[cpca]") {
  RngStream rng(3003);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<StudyVarianceEstimate> es;
    for (int s = 0; s < 3; ++s)
      es.push_back(random_pd_estimate(6, rng, 50 + 30 * s, "g" + std::to_string(s)));
    CommonBasis fc = fcpca(es, 6);
    for (std::size_t t = 0; t + 1 < fc.objective_trace.size(); ++t)
      REQUIRE(fc.objective_trace[t + 1] <=
              fc.objective_trace[t] + 1e-9 * (std::fabs(fc.objective_trace[t]) + 1.0));

    double maxnorm = 0.0;
    for (const auto& e : es) maxnorm = std::max(maxnorm, frobenius_norm(e.sigma.mat()));
    REQUIRE(fg_symmetry_residual(es, fc.vectors) <= 1e-6 * maxnorm);
  }
}

TEST_CASE("both methods are equivariant under joint rotation", "[cpca]") {
  RngStream rng(4004);
  const std::size_t p = 7;
  std::vector<StudyVarianceEstimate> es;
  for (int s = 0; s < 2; ++s)
    es.push_back(random_pd_estimate(p, rng, 60, "g" + std::to_string(s)));
  Matrix r = random_orthogonal(p, rng);
  std::vector<StudyVarianceEstimate> rotated = es;
  for (auto& e : rotated)
    e.sigma = SymmetricMatrix(r * e.sigma.mat() * r.transposed());

  const std::size_t q = 3;
  for (auto method : {BasisMethod::fcpca, BasisMethod::scpca}) {
    CommonBasis base = method == BasisMethod::fcpca ? fcpca(es, q) : scpca(es, q);
    CommonBasis rot = method == BasisMethod::fcpca ? fcpca(rotated, q) : scpca(rotated, q);
    Matrix mapped = r * base.vectors;
    // orthonormal columns survive rotation; compare subspaces
    Vector ang = principal_angles(mapped, rot.vectors);
    for (double a : ang) REQUIRE(a <= 1e-6);
  }
}

TEST_CASE("weight scaling leaves solutions unchanged", "[cpca]") {
  RngStream rng(5005);
  std::vector<StudyVarianceEstimate> es;
  es.push_back(random_pd_estimate(6, rng, 11, "g0"));
  es.push_back(random_pd_estimate(6, rng, 31, "g1"));
  // scale weights by 7: n-1 goes from (10,30) to (70,210)
  std::vector<StudyVarianceEstimate> scaled = es;
  scaled[0].n = 71;
  scaled[1].n = 211;

  CommonBasis a = fcpca(es, 6);
  CommonBasis b = fcpca(scaled, 6);
  REQUIRE(frobenius_norm(a.vectors - b.vectors) <= 1e-10);

  CommonBasis sa = scpca(es, 4);
  CommonBasis sb = scpca(scaled, 4);
  REQUIRE(frobenius_norm(sa.vectors - sb.vectors) <= 1e-10);
}

TEST_CASE("fcpca rejects indefinite inputs, scpca tolerates them", "[cpca]") {
  RngStream rng(6006);
  Matrix v = random_orthogonal(5, rng);
  Vector eig = {6.0, 3.0, 1.0, 0.5, -0.2};
  StudyVarianceEstimate bad = make_estimate(assemble(v, eig), 40, "indef");
  StudyVarianceEstimate good = random_pd_estimate(5, rng, 40, "ok");
  REQUIRE_THROWS_AS(fcpca({bad, good}, 5), NumericError);

  // top axes still have positive quadratic forms along the path
  CommonBasis sc = scpca({bad, good}, 2);
  REQUIRE(sc.variances(0, 0) > 0.0);
}

TEST_CASE("explained variance identities", "[cpca]") {
  RngStream rng(7007);
  const std::size_t p = 6;
  Matrix v = random_orthogonal(p, rng);
  Vector eig = {9.0, 5.0, 3.0, 2.0, 1.0, 0.5};
  SymmetricMatrix sigma(assemble(v, eig));
  StudyVarianceEstimate e = make_estimate(sigma.mat(), 50, "g");

  // basis = true eigenvectors: cumulative fraction reaches exactly 1
  CommonBasis fc = fcpca({e}, p);
  ExplainedVariance ev = explained_variance(fc, {sigma});
  REQUIRE(ev.cumulative_fraction(0, p - 1) == Catch::Approx(1.0).margin(1e-10));

  // any orthonormal basis: trace identity forces 1 at j = p
  Matrix rb = random_orthogonal(p, rng);
  CommonBasis arbitrary;
  arbitrary.vectors = rb;
  arbitrary.variances = Matrix(1, p);
  arbitrary.weights = {49.0};
  ExplainedVariance ev2 = explained_variance(arbitrary, {sigma});
  REQUIRE(ev2.cumulative_fraction(0, p - 1) == Catch::Approx(1.0).margin(1e-10));

  // single random unit vector on diag(9, 1): fraction strictly between bounds
  SymmetricMatrix d2 = SymmetricMatrix::diagonal({9.0, 1.0});
  CommonBasis one;
  one.vectors = Matrix(2, 1);
  const double th = rng.uniform() * 3.14159;
  one.vectors(0, 0) = std::cos(th);
  one.vectors(1, 0) = std::sin(th);
  one.variances = Matrix(1, 1);
  one.weights = {10.0};
  ExplainedVariance ev3 = explained_variance(one, {d2});
  REQUIRE(ev3.cumulative_fraction(0, 0) >= 0.1);
  REQUIRE(ev3.cumulative_fraction(0, 0) <= 0.9);
}

TEST_CASE("scree gap rule", "[cpca]") {
  ScreeSuggestion s = suggest_q({10.0, 8.0, 1.0, 0.9, 0.8});
  REQUIRE(s.q == 2);
  REQUIRE_FALSE(s.flat_spectrum);

  ScreeSuggestion flat = suggest_q({2.0, 2.0, 2.0, 2.0});
  REQUIRE(flat.q == 1);
  REQUIRE(flat.flat_spectrum);

  REQUIRE_THROWS_AS(suggest_q({1.0}), DataError);
}
