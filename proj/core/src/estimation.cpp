#include "nlmecv/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "nlmecv/optimize.hpp"
#include "nlmecv/stats.hpp"

namespace nlmecv {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_params(const Model& model, const PopulationParams& pp) {
    if (pp.theta.size() != model.theta_dim())
        throw std::invalid_argument("population params: theta dimension mismatch");
    if (pp.omega_diag.size() != model.eta_dim())
        throw std::invalid_argument("population params: omega dimension mismatch");
    if (pp.sigma2 <= 0.0)
        throw std::invalid_argument("population params: sigma2 must be positive");
    for (double w : pp.omega_diag)
        if (w <= 0.0)
            throw std::invalid_argument("population params: omega must be positive");
}
}  // namespace

double subject_joint_nll(const Model& model, const Subject& subj,
                         const PopulationParams& pp,
                         std::span<const double> eta) {
    std::vector<double> pred;
    return subject_joint_nll_buffered(model, subj, pp, eta, pred);
}

double subject_joint_nll_buffered(const Model& model, const Subject& subj,
                                  const PopulationParams& pp,
                                  std::span<const double> eta,
                                  std::vector<double>& pred_buffer) {
    model.predict_subject(subj, pp.theta, eta, pred_buffer);
    double nll = 0.0;
    std::size_t j = 0;
    for (const auto& obs : subj.observations) {
        if (obs.missing) continue;
        const double yhat = pred_buffer[j++];
        if (model.error().kind == ErrorModel::Kind::proportional &&
            yhat < kMinProportionalPred)
            throw PredictionError("proportional variance at near-zero prediction");
        const double v = residual_variance(model.error(), pp.sigma2, yhat);
        const double r = obs.dv - yhat;
        nll += 0.5 * (kLog2Pi + std::log(v) + r * r / v);
    }
    for (std::size_t d = 0; d < eta.size(); ++d)
        nll += 0.5 * (kLog2Pi + std::log(pp.omega_diag[d]) +
                      eta[d] * eta[d] / pp.omega_diag[d]);
    return nll;
}

SubjectLaplace posthoc_eta(const Model& model, const Subject& subj,
                           const PopulationParams& pp) {
    check_params(model, pp);
    const std::size_t d = model.eta_dim();
    SubjectLaplace out;

    std::vector<double> pred;
    Objective f = [&](const std::vector<double>& eta) {
        return subject_joint_nll_buffered(model, subj, pp, eta, pred);
    };

    NewtonResult nr = newton_minimize(f, std::vector<double>(d, 0.0));
    out.eta_mode = nr.x;
    out.joint_nll_at_mode = nr.f;
    out.grad_norm = nr.grad_norm;
    out.iterations = nr.iterations;
    if (!nr.converged) {
        out.message = "inner optimization did not converge (|grad| = " +
                      std::to_string(nr.grad_norm) + ")";
        return out;
    }
    if (!nr.hessian_pd) {
        out.message = "indefinite Hessian at mode";
        return out;
    }
    std::vector<double> chol = nr.hessian;
    cholesky(chol, d);
    out.hessian_logdet = cholesky_logdet(chol, d);
    out.ok = true;
    return out;
}

double marginal_nll(const Model& model, const PopulationDataset& ds,
                    const PopulationParams& pp) {
    check_params(model, pp);
    const double half_d_log2pi =
        0.5 * static_cast<double>(model.eta_dim()) * kLog2Pi;

    // id-sorted reduction: value does not depend on subject order
    std::vector<std::size_t> order(ds.subjects.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return ds.subjects[a].id < ds.subjects[b].id;
    });

    double total = 0.0;
    for (std::size_t idx : order) {
        const Subject& subj = ds.subjects[idx];
        SubjectLaplace sl = posthoc_eta(model, subj, pp);
        if (!sl.ok)
            throw std::runtime_error("marginal_nll: subject " + subj.id + ": " +
                                     sl.message);
        total += sl.joint_nll_at_mode + 0.5 * sl.hessian_logdet - half_d_log2pi;
    }
    return total;
}

namespace {

struct Transform {
    std::vector<bool> log_theta;
    std::size_t n_theta = 0, n_omega = 0;

    std::vector<double> to_x(const PopulationParams& pp) const {
        std::vector<double> x;
        x.reserve(pp.n_estimated());
        for (std::size_t k = 0; k < n_theta; ++k)
            x.push_back(log_theta[k] ? std::log(pp.theta[k]) : pp.theta[k]);
        for (double w : pp.omega_diag) x.push_back(std::log(w));
        x.push_back(std::log(pp.sigma2));
        return x;
    }

    PopulationParams to_params(const std::vector<double>& x) const {
        PopulationParams pp;
        pp.theta.resize(n_theta);
        for (std::size_t k = 0; k < n_theta; ++k)
            pp.theta[k] = log_theta[k] ? std::exp(x[k]) : x[k];
        pp.omega_diag.resize(n_omega);
        for (std::size_t d = 0; d < n_omega; ++d)
            pp.omega_diag[d] = std::exp(x[n_theta + d]);
        pp.sigma2 = std::exp(x[n_theta + n_omega]);
        return pp;
    }
};

Transform make_transform(const Model& model) {
    Transform tr;
    tr.n_theta = model.theta_dim();
    tr.n_omega = model.eta_dim();
    tr.log_theta.resize(tr.n_theta);
    for (std::size_t k = 0; k < tr.n_theta; ++k)
        tr.log_theta[k] = model.theta_log_scale(k);
    return tr;
}

}  // namespace

FitResult fit(const Model& model, const PopulationDataset& ds,
              const PopulationParams& init, const FitOptions& opts) {
    check_params(model, init);
    if (ds.total_obs() <= model.theta_dim())
        throw std::runtime_error(
            "fit: fewer observations than fixed-effect parameters");

    const Transform tr = make_transform(model);
    Objective obj = [&](const std::vector<double>& x) {
        return marginal_nll(model, ds, tr.to_params(x));
    };

    SearchOptions sopts;
    sopts.max_bfgs_iterations = opts.max_outer_iterations;
    sopts.rel_f_tol = opts.rel_obj_tol * 0.1;
    sopts.simplex_rel_f_tol = opts.rel_obj_tol * 0.1;
    sopts.simplex_x_tol = opts.param_tol * 0.1;

    const std::vector<double> x0 = tr.to_x(init);
    double f0;
    try {
        f0 = obj(x0);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("fit: objective failed at init: ") +
                                 e.what());
    }

    SearchResult sr = minimize(obj, x0, sopts);

    FitResult fr;
    fr.params = tr.to_params(sr.x);
    fr.loglik = -sr.f;
    fr.n_obs = ds.total_obs();
    fr.n_params = fr.params.n_estimated();
    fr.converged = sr.converged && sr.f <= f0 + 1e-9;
    fr.diagnostics.outer_iterations = sr.iterations;
    fr.diagnostics.polish_evals = sr.polish_evals;
    fr.diagnostics.objective_evals = sr.n_evals;
    fr.diagnostics.grad_norm = sr.grad_norm;
    fr.diagnostics.objective_at_init = f0;

    fr.posthoc.reserve(ds.subjects.size());
    for (const auto& subj : ds.subjects) {
        SubjectLaplace sl = posthoc_eta(model, subj, fr.params);
        if (!sl.ok)
            throw std::runtime_error("fit: post hoc failed for subject " +
                                     subj.id + ": " + sl.message);
        fr.posthoc.push_back(sl.eta_mode);
    }
    return fr;
}

FitResult fit(const Model& model, const PopulationDataset& ds,
              const FitOptions& opts) {
    return fit(model, ds, model.initial_params(), opts);
}

std::map<std::string, SubjectLaplace> refit_frozen_posthoc(
    const Model& model, const PopulationDataset& full_ds,
    const PopulationParams& frozen) {
    check_params(model, frozen);
    std::map<std::string, SubjectLaplace> out;
    for (const auto& subj : full_ds.subjects) {
        try {
            out[subj.id] = posthoc_eta(model, subj, frozen);
        } catch (const std::exception& e) {
            SubjectLaplace fail;
            fail.message = e.what();
            out[subj.id] = fail;
        }
    }
    return out;
}

double aic(double loglik, std::size_t n_params) {
    return -2.0 * loglik + 2.0 * static_cast<double>(n_params);
}

double bic(double loglik, std::size_t n_params, double n_obs) {
    return -2.0 * loglik + static_cast<double>(n_params) * std::log(n_obs);
}

double aic(const FitResult& fr) { return aic(fr.loglik, fr.n_params); }

double bic(const FitResult& fr) {
    return bic(fr.loglik, fr.n_params, static_cast<double>(fr.n_obs));
}

LrtResult lrt(const FitResult& nested, const FitResult& full) {
    if (nested.n_params >= full.n_params)
        throw std::invalid_argument("lrt: nested model must have fewer parameters");
    LrtResult r;
    const double d = 2.0 * (full.loglik - nested.loglik);
    r.suspect = d < -1e-6;
    r.statistic = std::max(0.0, d);
    r.df = full.n_params - nested.n_params;
    r.p_value = chi2_tail(r.statistic, static_cast<double>(r.df));
    return r;
}

std::vector<double> eta_shrinkage(const FitResult& fr) {
    const std::size_t n = fr.posthoc.size();
    if (n < 2) throw std::runtime_error("eta_shrinkage: needs >= 2 subjects");
    const std::size_t d = fr.params.omega_diag.size();
    std::vector<double> out(d);
    std::vector<double> column(n);
    for (std::size_t k = 0; k < d; ++k) {
        if (fr.params.omega_diag[k] <= 0.0)
            throw std::runtime_error("eta_shrinkage: non-positive omega");
        for (std::size_t i = 0; i < n; ++i) column[i] = fr.posthoc[i][k];
        out[k] = 1.0 - sample_sd(column) / std::sqrt(fr.params.omega_diag[k]);
    }
    return out;
}

}  // namespace nlmecv
