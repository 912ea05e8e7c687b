#pragma once

#include <functional>
#include <vector>

namespace nlmecv {

using Objective = std::function<double(const std::vector<double>&)>;

// In-place Cholesky of a dense symmetric matrix stored row-major.
// Returns false if the matrix is not positive definite.
bool cholesky(std::vector<double>& a, std::size_t n);

// Solves L L^T x = b given the Cholesky factor from cholesky().
void cholesky_solve(const std::vector<double>& l, std::size_t n,
                    const std::vector<double>& b, std::vector<double>& x);

double cholesky_logdet(const std::vector<double>& l, std::size_t n);

struct NewtonResult {
    std::vector<double> x;
    double f = 0.0;
    std::vector<double> gradient;
    std::vector<double> hessian;  // dense row-major at x
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    bool hessian_pd = false;
};

struct NewtonOptions {
    double grad_tol = 1e-8;
    double stall_grad_tol = 1e-7;  // accept on stall below this
    int max_iterations = 200;
    double fd_step_grad = 1e-5;
    double fd_step_hess = 1e-4;
};

// Damped Newton minimization with central finite differences for both
// gradient and Hessian. Non-finite trial values are rejected by the step
// halving; indefinite Hessians get a Levenberg shift during iteration but
// must be positive definite at the accepted mode.
NewtonResult newton_minimize(const Objective& f, std::vector<double> x0,
                             const NewtonOptions& opts = {});

struct SearchResult {
    std::vector<double> x;
    double f = 0.0;
    int iterations = 0;      // accepted quasi-Newton iterations
    int polish_evals = 0;    // simplex-phase function evaluations
    long long n_evals = 0;
    bool converged = false;
    double grad_norm = 0.0;
};

struct SearchOptions {
    int max_bfgs_iterations = 150;
    double fd_step = 1e-5;
    double rel_f_tol = 1e-9;
    double simplex_step = 0.02;
    double simplex_rel_f_tol = 1e-9;
    double simplex_x_tol = 1e-7;
    int simplex_max_evals = 0;  // 0 = automatic from dimension
};

// Quasi-Newton (BFGS, central-difference gradient) followed by a
// Nelder-Mead polish. Keeps the best point seen; the returned f never
// exceeds f(x0).
SearchResult minimize(const Objective& f, std::vector<double> x0,
                      const SearchOptions& opts = {});

}  // namespace nlmecv
