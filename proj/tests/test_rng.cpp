// Copyright (c) 2026 crosspca contributors
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "crosspca/rng.hpp"

using namespace crosspca;

TEST_CASE("same seed reproduces the same draws", "[rng]") {
  RngStream a(123), b(123);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

  RngStream c(123), d(123);
  for (int i = 0; i < 50; ++i) {
    REQUIRE(c.normal() == d.normal());
    REQUIRE(c.gamma(7.0, 1.0) == d.gamma(7.0, 1.0));
    REQUIRE(c.poisson(55.0) == d.poisson(55.0));
  }
}

TEST_CASE("substreams are independent of parent draws", "[rng]") {
  RngStream a(9);
  RngStream b(9);
  a.normal();  // consume from one parent only
  RngStream sa = a.substream("counts", 3);
  RngStream sb = b.substream("counts", 3);
  for (int i = 0; i < 20; ++i) REQUIRE(sa.next_u64() == sb.next_u64());

  RngStream other = b.substream("counts", 4);
  bool differs = false;
  RngStream sa2 = a.substream("counts", 3);
  for (int i = 0; i < 20; ++i)
    if (sa2.next_u64() != other.next_u64()) differs = true;
  REQUIRE(differs);
}

TEST_CASE("sampler moments match their laws", "[rng]") {
  RngStream rng(2026);
  const int n = 200000;

  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  REQUIRE(std::fabs(sum / n) < 0.01);
  REQUIRE(std::fabs(sq / n - 1.0) < 0.02);

  sum = 0.0;
  sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.gamma(7.0, 1.0);
    sum += x;
    sq += x * x;
  }
  const double gm = sum / n;
  REQUIRE(std::fabs(gm - 7.0) < 0.05);
  REQUIRE(std::fabs((sq / n - gm * gm) - 7.0) < 0.2);

  // shape < 1 branch
  sum = 0.0;
  for (int i = 0; i < n; ++i) sum += rng.gamma(0.5, 2.0);
  REQUIRE(std::fabs(sum / n - 0.25) < 0.01);

  // poisson, small and large mean
  for (double mean : {3.0, 55.0, 3000.0}) {
    double psum = 0.0, psq = 0.0;
    for (int i = 0; i < n / 4; ++i) {
      const double x = static_cast<double>(rng.poisson(mean));
      psum += x;
      psq += x * x;
    }
    const double m1 = psum / (n / 4);
    const double var = psq / (n / 4) - m1 * m1;
    REQUIRE(std::fabs(m1 - mean) < 5.0 * std::sqrt(mean / (n / 4)) + 1e-9);
    REQUIRE(std::fabs(var / mean - 1.0) < 0.05);
  }
}
