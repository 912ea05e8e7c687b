#pragma once

#include <map>
#include <string>
#include <vector>

#include "nlmecv/model.hpp"

namespace nlmecv {

// Mode of one subject's conditional density of eta, with the curvature
// information the Laplace approximation needs.
struct SubjectLaplace {
    std::vector<double> eta_mode;
    double joint_nll_at_mode = 0.0;
    double hessian_logdet = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool ok = false;
    std::string message;
};

struct FitDiagnostics {
    int outer_iterations = 0;
    int polish_evals = 0;
    long long objective_evals = 0;
    double grad_norm = 0.0;
    double objective_at_init = 0.0;
};

struct FitResult {
    PopulationParams params;
    double loglik = 0.0;  // marginal log-likelihood at params
    std::size_t n_obs = 0;
    std::size_t n_params = 0;
    std::vector<std::vector<double>> posthoc;  // one eta vector per subject
    bool converged = false;
    FitDiagnostics diagnostics;
};

struct FitOptions {
    int max_outer_iterations = 150;
    double rel_obj_tol = 1e-8;
    double param_tol = 1e-6;
};

// Joint negative log density of (observations, eta) for one subject:
// sum of Gaussian observation terms with residual_variance plus the
// Gaussian eta penalty under diagonal Omega.
double subject_joint_nll(const Model& model, const Subject& subj,
                         const PopulationParams& pp,
                         std::span<const double> eta);

// Same, reusing a caller-owned prediction buffer (hot path).
double subject_joint_nll_buffered(const Model& model, const Subject& subj,
                                  const PopulationParams& pp,
                                  std::span<const double> eta,
                                  std::vector<double>& pred_buffer);

// Posterior-mode (post hoc) eta for one subject with population
// parameters frozen; damped Newton from eta = 0.
SubjectLaplace posthoc_eta(const Model& model, const Subject& subj,
                           const PopulationParams& pp);

// Laplace-approximate marginal negative log likelihood, exact for models
// linear in eta with Gaussian errors. Subject contributions are summed in
// id-sorted order so the value is independent of subject ordering.
// Throws if any subject's inner optimization fails.
double marginal_nll(const Model& model, const PopulationDataset& ds,
                    const PopulationParams& pp);

// Maximum-likelihood fit of (theta, omega, sigma2) by direct minimization
// of the Laplace marginal; positivity-constrained components move on the
// log scale.
FitResult fit(const Model& model, const PopulationDataset& ds,
              const PopulationParams& init, const FitOptions& opts = {});

FitResult fit(const Model& model, const PopulationDataset& ds,
              const FitOptions& opts = {});  // init from the model config

// Post hoc etas for every subject of full_ds under frozen population
// parameters (the MAXITER=0, POSTHOC=Y analogue). Per-subject failures
// are reported in the map, not thrown.
std::map<std::string, SubjectLaplace> refit_frozen_posthoc(
    const Model& model, const PopulationDataset& full_ds,
    const PopulationParams& frozen);

double aic(const FitResult& fr);
double bic(const FitResult& fr);
double aic(double loglik, std::size_t n_params);
double bic(double loglik, std::size_t n_params, double n_obs);

struct LrtResult {
    double statistic = 0.0;  // 2*(loglik_full - loglik_nested), floored at 0
    std::size_t df = 0;
    double p_value = 1.0;
    bool suspect = false;  // full fit worse than nested beyond tolerance
};

LrtResult lrt(const FitResult& nested, const FitResult& full);

// Per-eta shrinkage: 1 - sd(posthoc etas) / sqrt(omega_dd).
std::vector<double> eta_shrinkage(const FitResult& fr);

}  // namespace nlmecv
