#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "hkq/errors.hpp"
#include "hkq/stats.hpp"

using namespace hkq;

TEST_CASE("mean and population variance on hand values") {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  CHECK(mean(x) == 2.5);
  CHECK(population_variance(x) == doctest::Approx(1.25).epsilon(1e-15));
  CHECK(population_stddev(x) == doctest::Approx(std::sqrt(1.25)).epsilon(1e-15));
  CHECK_THROWS_AS(mean(std::vector<double>{}), Error);
}

TEST_CASE("ks statistic takes the larger one-sided gap at each step") {
  // F(x) = x/4 on [0,4]; sorted sample {1,2,3}.
  // At x=1 the pre-step gap |0 - 0.25| = 0.25 dominates.
  const std::vector<double> s{1.0, 2.0, 3.0};
  const double d = ks_statistic(s, [](double x) { return x / 4.0; });
  CHECK(d == doctest::Approx(0.25).epsilon(1e-15));

  // Perfect fit: empirical CDF against itself gives exactly 1/n.
  const double d2 = ks_statistic(s, [](double x) {
    if (x < 1.0) return 0.0;
    if (x < 2.0) return 1.0 / 3.0;
    if (x < 3.0) return 2.0 / 3.0;
    return 1.0;
  });
  CHECK(d2 == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("quantile interpolates linearly between order statistics") {
  const std::vector<double> s{10.0, 20.0, 30.0, 40.0};
  CHECK(quantile_sorted(s, 0.0) == 10.0);
  CHECK(quantile_sorted(s, 1.0) == 40.0);
  CHECK(quantile_sorted(s, 0.5) == doctest::Approx(25.0));
  CHECK(quantile_sorted(s, 0.25) == doctest::Approx(17.5));
  CHECK(quantile_sorted(std::vector<double>{7.0}, 0.3) == 7.0);
  CHECK_THROWS_AS(quantile_sorted(s, 1.5), Error);
}

TEST_CASE("regularized incomplete beta against frozen references") {
  // Reference values computed with an independent implementation.
  CHECK(regularized_incomplete_beta(0.5, 0.5, 0.3) ==
        doctest::Approx(0.36901011956554536).epsilon(1e-12));
  CHECK(regularized_incomplete_beta(2.0, 3.0, 0.4) ==
        doctest::Approx(0.5248).epsilon(1e-12));
  CHECK(regularized_incomplete_beta(5.0, 1.0, 0.9) ==
        doctest::Approx(0.59049).epsilon(1e-12));
  CHECK(regularized_incomplete_beta(1.5, 2.5, 0.0) == 0.0);
  CHECK(regularized_incomplete_beta(1.5, 2.5, 1.0) == 1.0);
  CHECK_THROWS_AS(regularized_incomplete_beta(-1.0, 1.0, 0.5), Error);
  CHECK_THROWS_AS(regularized_incomplete_beta(1.0, 1.0, 1.5), Error);
}

TEST_CASE("student t two-sided p against frozen references") {
  CHECK(student_t_two_sided_p(2.0, 3.0) == doctest::Approx(0.1393259685588431).epsilon(1e-10));
  CHECK(student_t_two_sided_p(0.5, 10.0) == doctest::Approx(0.6278936057429729).epsilon(1e-10));
  CHECK(student_t_two_sided_p(-0.5, 10.0) == student_t_two_sided_p(0.5, 10.0));
  CHECK(student_t_two_sided_p(0.0, 5.0) == doctest::Approx(1.0).epsilon(1e-12));
  // Large |t|, large nu: tiny but positive, order 1e-28.
  const double p = student_t_two_sided_p(12.0, 339.0);
  CHECK(p > 0.0);
  CHECK(p == doctest::Approx(6.857628126246815e-28).epsilon(1e-6));
}

TEST_CASE("spearman handles ties with average ranks") {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  const std::vector<double> y{1.5, 0.5, 4.0, 4.0, 7.0, 6.5};
  CHECK(spearman(x, y) == doctest::Approx(0.8696565534786727).epsilon(1e-12));

  // Monotone transforms leave rank correlation at exactly 1.
  std::vector<double> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = std::exp(x[i]);
  CHECK(spearman(x, z) == doctest::Approx(1.0).epsilon(1e-14));

  CHECK_THROWS_AS(spearman(x, std::vector<double>{1.0, 1.0, 1.0, 1.0, 1.0, 1.0}), Error);
}
