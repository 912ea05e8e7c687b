#pragma once

// Closed-form and quadrature oracles used by the estimation tests. All of
// this is written directly from the defining formulas and shares nothing
// with the library's Laplace/Newton machinery.

#include <functional>
#include <span>
#include <vector>

namespace oracle {

// Exact marginal -log L for the intercept model y_ij = theta + eta_i +
// eps_ij on one subject (Sherman-Morrison closed form).
double intercept_marginal_nll(std::span<const double> y, double theta,
                              double omega, double sigma2);

// Posterior mode of eta for the same model.
double intercept_posterior_mode(std::span<const double> y, double theta,
                                double omega, double sigma2);

// Exact marginal -log L for the two-effect linear model
// y_j = (theta1 + eta1) + (theta2 + eta2) * x_j, diagonal Omega.
double linear2_marginal_nll(std::span<const double> y,
                            std::span<const double> x, double theta1,
                            double theta2, double omega1, double omega2,
                            double sigma2);

// Gauss-Hermite rule (physicists' weight exp(-x^2)).
struct HermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};
HermiteRule hermite_rule(int n);

// Adaptive Gauss-Hermite value of -log \int exp(-neg_log_joint(eta)) deta
// for a 1-d integrand; locates the mode by golden-section search over
// [lo, hi] and scales by the finite-difference curvature at the mode.
double agh_marginal_nll_1d(const std::function<double(double)>& neg_log_joint,
                           double lo, double hi, int n_nodes = 64);

// t statistic of the OLS slope of y on x.
double ols_slope_t(std::span<const double> x, std::span<const double> y);

}  // namespace oracle
