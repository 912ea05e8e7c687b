#pragma once

#include <cstddef>
#include <span>

namespace nlmecv {

// Regularized lower incomplete gamma P(a, x); series for x < a+1,
// Lentz continued fraction otherwise. Relative error < 1e-10 over the
// parameter ranges used here.
double gamma_p(double a, double x);

// Upper tail Q(a, x) = 1 - P(a, x).
double gamma_q(double a, double x);

// P(X > x) for X ~ chi-squared with df degrees of freedom.
double chi2_tail(double x, double df);

// Two-sided tail of the standard normal, P(|Z| > |z|).
double normal_two_sided(double z);

double mean(std::span<const double> xs);

// Sample standard deviation (n-1 denominator); 0 for fewer than 2 points.
double sample_sd(std::span<const double> xs);

// Standard error of the mean: sample_sd / sqrt(n).
double standard_error(std::span<const double> xs);

// Two-sample proportion z statistic with pooled variance.
double proportion_z(double p1, std::size_t n1, double p2, std::size_t n2);

}  // namespace nlmecv
