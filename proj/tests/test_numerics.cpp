#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "obml/numerics.hpp"
#include "oracles.hpp"

using namespace obml;

TEST_CASE("std_normal_cdf at zero and unity") {
  CHECK(std_normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  // Frozen from the series/continued-fraction oracle.
  CHECK(std::fabs(std_normal_cdf(1.0) - 0.8413447460685429) < 1e-12);
  CHECK(std::fabs((double)(oracles::std_normal_cdf_oracle(1.0L) - 0.8413447460685429L)) < 1e-15);
}

TEST_CASE("std_normal_cdf tracks the independent oracle") {
  for (double x = -7.0; x <= 7.0; x += 0.37) {
    const double want = (double)oracles::std_normal_cdf_oracle(x);
    CHECK(std::fabs(std_normal_cdf(x) - want) < 1e-12);
  }
}

TEST_CASE("std_normal_cdf symmetry and monotonicity") {
  double prev = -1.0;
  for (int i = 0; i < 100; ++i) {
    const double x = -6.0 + 12.0 * i / 99.0;
    const double c = std_normal_cdf(x);
    CHECK(std::fabs(std_normal_cdf(-x) - (1.0 - c)) < 1e-14);
    CHECK(c >= prev);
    prev = c;
  }
  CHECK_THROWS_AS(std_normal_cdf(std::numeric_limits<double>::quiet_NaN()), std::domain_error);
  CHECK_THROWS_AS(std_normal_cdf(std::numeric_limits<double>::infinity()), std::domain_error);
}

TEST_CASE("std_normal_cdf_inv basics") {
  CHECK(std_normal_cdf_inv(0.5) == 0.0);
  CHECK_THROWS_AS(std_normal_cdf_inv(0.0), std::domain_error);
  CHECK_THROWS_AS(std_normal_cdf_inv(1.0), std::domain_error);
  CHECK_THROWS_AS(std_normal_cdf_inv(-0.2), std::domain_error);
}

TEST_CASE("std_normal_cdf_inv of 0.841344746 via bisection oracle") {
  const double p = 0.841344746;
  double lo = -10.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std_normal_cdf(mid) < p ? lo : hi) = mid;
  }
  const double want = 0.5 * (lo + hi);
  CHECK(std::fabs(want - 1.0) < 1e-6);
  CHECK(std::fabs(std_normal_cdf_inv(p) - want) < 1e-9);
}

TEST_CASE("cdf / inverse round trips") {
  for (double x = -6.0; x <= 6.0; x += 0.25) {
    CHECK(std::fabs(std_normal_cdf_inv(std_normal_cdf(x)) - x) < 1e-8);
  }
  for (double e = -9.0; e <= -0.31; e += 0.17) {
    const double p = std::pow(10.0, e);
    CHECK(std::fabs(std_normal_cdf(std_normal_cdf_inv(p)) - p) <= 1e-10);
    const double q = 1.0 - p;
    CHECK(std::fabs(std_normal_cdf(std_normal_cdf_inv(q)) - q) <= 1e-10);
  }
}

TEST_CASE("log_std_normal_cdf matches log(cdf) and stays finite in the tail") {
  for (double x = -36.0; x <= 8.0; x += 0.61) {
    const double direct = std::log(std_normal_cdf(x));
    CHECK(log_std_normal_cdf(x) == doctest::Approx(direct).epsilon(1e-12));
  }
  CHECK(std::fabs(log_std_normal_cdf(-36.999) - log_std_normal_cdf(-37.001)) < 0.15);
  for (double x : {-50.0, -120.0, -300.0}) {
    const double v = log_std_normal_cdf(x);
    CHECK(std::isfinite(v));
    CHECK(v < -1000.0);
  }
}

TEST_CASE("rng streams are reproducible and independent") {
  RngStream a(42, 7), b(42, 7), c(42, 8);
  bool same = true, diff = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    same = same && (x == b.next_u64());
    diff = diff || (x != c.next_u64());
  }
  CHECK(same);
  CHECK(diff);

  RngStream g1(9, 1), g2(9, 1);
  for (int i = 0; i < 100; ++i) CHECK(g1.next_gaussian() == g2.next_gaussian());
}

TEST_CASE("sample_gaussian degenerate and error cases") {
  RngStream rng(1, 1);
  CHECK(sample_gaussian(3.0, 0.0, rng) == 3.0);
  CHECK_THROWS_AS(sample_gaussian(0.0, -1.0, rng), std::domain_error);
}

TEST_CASE("sample_gaussian moments over one million draws") {
  RngStream rng(2024, 5);
  const std::size_t n = 1000000;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += sample_gaussian(0.0, 1.0, rng);
  CHECK(std::fabs(sum / n) < 0.005);

  RngStream rng2(2024, 6);
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = sample_gaussian(0.0, 2.0, rng2);
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  CHECK(std::fabs(var - 2.0) < 0.02);
}

TEST_CASE("uniform draws live in (0,1]") {
  RngStream rng(77, 3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.next_unit();
    CHECK(u > 0.0);
    CHECK(u <= 1.0);
  }
}
