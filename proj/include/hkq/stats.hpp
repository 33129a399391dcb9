#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace hkq {

double mean(std::span<const double> x);
// Population (divide by N) variance and standard deviation.
double population_variance(std::span<const double> x);
double population_stddev(std::span<const double> x);

// Kolmogorov-Smirnov statistic between a sample and a reference CDF:
// sup |F_n - F|. `sorted` must be in ascending order.
double ks_statistic(std::span<const double> sorted, const std::function<double(double)>& cdf);

// Quantile by linear interpolation between order statistics, q in [0,1].
// `sorted` must be ascending and nonempty.
double quantile_sorted(std::span<const double> sorted, double q);

// Regularized incomplete beta I_x(a,b) via the Lentz continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

// Two-sided p-value of a Student-t statistic with nu degrees of freedom,
// p = I_{nu/(nu+t^2)}(nu/2, 1/2).
double student_t_two_sided_p(double t, double nu);

// Spearman rank correlation (average ranks on ties).
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace hkq
