#include "catch_amalgamated.hpp"
#include "tweetcluster/special_functions.hpp"

using namespace tweetcluster;

TEST_CASE("digamma matches high-precision references") {
  // reference values computed with 30-digit arbitrary precision arithmetic
  CHECK_THAT(digamma(0.1), Catch::Matchers::WithinRel(-10.423754940411076232, 1e-12));
  CHECK_THAT(digamma(0.5), Catch::Matchers::WithinRel(-1.9635100260214234794, 1e-12));
  CHECK_THAT(digamma(1.0), Catch::Matchers::WithinRel(-0.57721566490153286061, 1e-12));
  CHECK_THAT(digamma(1.5), Catch::Matchers::WithinRel(0.036489973978576520559, 1e-12));
  CHECK_THAT(digamma(3.7), Catch::Matchers::WithinRel(1.1671535393615114409, 1e-12));
  CHECK_THAT(digamma(10.0), Catch::Matchers::WithinRel(2.2517525890667211076, 1e-12));
  CHECK_THAT(digamma(123.456), Catch::Matchers::WithinRel(4.8118293238289854123, 1e-12));
  CHECK_THROWS_AS(digamma(0.0), InvalidInput);
  CHECK_THROWS_AS(digamma(-2.0), InvalidInput);
}

TEST_CASE("digamma recurrence identity") {
  // psi(x+1) = psi(x) + 1/x
  for (double x : {0.3, 0.9, 2.5, 7.1, 40.0}) {
    CHECK_THAT(digamma(x + 1.0), Catch::Matchers::WithinRel(digamma(x) + 1.0 / x, 1e-12));
  }
}

TEST_CASE("regularized incomplete beta matches references") {
  CHECK_THAT(betainc_reg(0.5, 0.5, 0.25), Catch::Matchers::WithinRel(1.0 / 3.0, 1e-12));
  CHECK_THAT(betainc_reg(2.0, 3.0, 0.4), Catch::Matchers::WithinRel(0.5248, 1e-12));
  CHECK_THAT(betainc_reg(12.0, 34.5, 0.3),
             Catch::Matchers::WithinRel(0.75284812798568954641, 1e-12));
  CHECK_THAT(betainc_reg(0.5, 12.0, 0.05),
             Catch::Matchers::WithinRel(0.72782941117064150835, 1e-12));
  CHECK(betainc_reg(8.0, 8.0, 0.5) == Catch::Approx(0.5).epsilon(1e-13));
  CHECK(betainc_reg(2.0, 2.0, 0.0) == 0.0);
  CHECK(betainc_reg(2.0, 2.0, 1.0) == 1.0);
}

TEST_CASE("incomplete beta symmetry") {
  // I_x(a,b) = 1 - I_{1-x}(b,a)
  for (double x : {0.1, 0.35, 0.62, 0.9}) {
    CHECK_THAT(betainc_reg(3.2, 5.7, x),
               Catch::Matchers::WithinAbs(1.0 - betainc_reg(5.7, 3.2, 1.0 - x), 1e-13));
  }
}

TEST_CASE("F-distribution tail matches references") {
  CHECK_THAT(f_distribution_tail(24, 175, 2.5),
             Catch::Matchers::WithinRel(0.00034190594058010484, 1e-9));
  CHECK_THAT(f_distribution_tail(1, 10, 4.96),
             Catch::Matchers::WithinRel(0.050087650566468203, 1e-9));
  CHECK_THAT(f_distribution_tail(5, 30, 1.0),
             Catch::Matchers::WithinRel(0.43464887633987309, 1e-9));
  CHECK_THAT(f_distribution_tail(24, 100, 3.3),
             Catch::Matchers::WithinRel(1.5339850803508558e-05, 1e-9));
  CHECK(f_distribution_tail(5, 5, 0.0) == 1.0);
}
