#include "nlmecv/trial_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "nlmecv/parallel.hpp"
#include "nlmecv/rng.hpp"
#include "nlmecv/stats.hpp"

namespace nlmecv {

namespace {

// RNG stream ids; draws for one purpose never shift another's.
constexpr std::uint64_t kStudyStream = 1;
constexpr std::uint64_t kCovariateStream = 2;
constexpr std::uint64_t kEtaStream = 3;
constexpr std::uint64_t kResidualStream = 4;

ParameterEntry param(std::string name, double tv, bool ranef,
                     std::vector<CovariateTerm> covs = {}) {
    ParameterEntry p;
    p.name = std::move(name);
    p.tv_init = tv;
    p.random_effect = ranef;
    p.omega_init = 0.1;  // the stated analysis-model starting value
    p.covariates = std::move(covs);
    return p;
}

CovariateTerm power_term(std::string cov, double ref, double coef) {
    CovariateTerm c;
    c.covariate = std::move(cov);
    c.form = CovariateForm::power;
    c.reference = ref;
    c.coefficient_init = coef;
    return c;
}

CovariateTerm linear_term(std::string cov, double coef) {
    CovariateTerm c;
    c.covariate = std::move(cov);
    c.form = CovariateForm::linear;
    c.coefficient_init = coef;
    return c;
}

ModelSpec analysis_shell(std::string name, int compartments) {
    ModelSpec m;
    m.name = std::move(name);
    m.structural.n_compartments = compartments;
    m.structural.route = Route::extravascular;
    m.error.kind = ErrorModel::Kind::proportional;
    m.sigma2_init = 0.01;
    return m;
}

// study-level SDs keyed by theta label
std::vector<double> sd_by_label(const ModelSpec& truth,
                                const std::map<std::string, double>& sds) {
    const auto lay = theta_layout(truth);
    std::vector<double> out;
    out.reserve(lay.labels.size());
    for (const auto& label : lay.labels) {
        auto it = sds.find(label);
        if (it == sds.end())
            throw std::logic_error("scenario: no study SD for " + label);
        out.push_back(it->second);
    }
    return out;
}

}  // namespace

ScenarioSpec scenario(int id) {
    ScenarioSpec s;
    s.id = id;
    switch (id) {
        case 1: {
            s.n_subjects = 8;
            s.default_replicates = 200;
            s.truth = analysis_shell("scenario1_truth", 1);
            s.truth.parameters = {param("Ka", 0.35, false),
                                  param("V", 13.5, true),
                                  param("Cl", 7.4, true)};
            s.study_sd = sd_by_label(
                s.truth, {{"tvKa", 0.1}, {"tvV", 0.1}, {"tvCl", 0.1}});
            s.base_model = analysis_shell("scenario1_base", 1);
            s.base_model.parameters = s.truth.parameters;
            s.full_model = analysis_shell("scenario1_full", 1);
            s.full_model.parameters = {
                param("Ka", 0.35, false), param("V", 13.5, true),
                param("Cl", 7.4, true, {power_term("Age", 40.0, -3.0)})};
            s.correct_model = Selected::base;
            s.crv_eta_target = "Cl";
            break;
        }
        case 2: {
            s.n_subjects = 8;
            s.default_replicates = 200;
            s.truth = analysis_shell("scenario2_truth", 1);
            s.truth.parameters = {
                param("Ka", 0.35, false), param("V", 13.5, true),
                param("Cl", 1.2, true, {power_term("Age", 40.0, -0.9)})};
            s.study_sd = sd_by_label(s.truth, {{"tvKa", 0.05},
                                               {"tvV", 0.1},
                                               {"tvCl", 0.05},
                                               {"dCldAge", 0.04}});
            s.base_model = analysis_shell("scenario2_base", 1);
            s.base_model.parameters = {param("Ka", 0.35, false),
                                       param("V", 13.5, true),
                                       param("Cl", 1.2, true)};
            s.full_model = analysis_shell("scenario2_full", 1);
            s.full_model.parameters = s.truth.parameters;
            s.correct_model = Selected::full;
            s.crv_eta_target = "Cl";
            break;
        }
        case 3: {
            s.n_subjects = 8;
            s.default_replicates = 200;
            s.truth = analysis_shell("scenario3_truth", 2);
            s.truth.parameters = {
                param("Ka", 0.35, false), param("V", 13.5, true),
                param("V2", 36.0, true),
                param("Cl", 1.2, true, {power_term("Age", 40.0, -0.9)}),
                param("Cl2", 0.62, true)};
            s.study_sd = sd_by_label(s.truth, {{"tvKa", 0.05},
                                               {"tvV", 0.1},
                                               {"tvV2", 0.1},
                                               {"tvCl", 0.05},
                                               {"dCldAge", 0.04},
                                               {"tvCl2", 0.05}});
            s.base_model = analysis_shell("scenario3_base", 2);
            s.base_model.parameters = {param("Ka", 0.35, false),
                                       param("V", 13.5, true),
                                       param("V2", 36.0, true),
                                       param("Cl", 1.2, true),
                                       param("Cl2", 0.62, true)};
            s.full_model = analysis_shell("scenario3_full", 2);
            s.full_model.parameters = s.truth.parameters;
            s.correct_model = Selected::full;
            s.crv_eta_target = "Cl";
            break;
        }
        case 4: {
            s.n_subjects = 8;
            s.default_replicates = 200;
            s.gen_hepatic_impairment = true;
            s.truth = analysis_shell("scenario4_truth", 1);
            s.truth.parameters = {
                param("Ka", 0.35, false),
                param("V", 13.5, true, {power_term("BW", 70.0, 1.0)}),
                param("Cl", 1.2, true,
                      {power_term("BW", 70.0, 0.75),
                       power_term("Age", 40.0, -0.9),
                       linear_term("Gender", 0.1), linear_term("HI", -0.2)})};
            s.study_sd = sd_by_label(s.truth, {{"tvKa", 0.05},
                                               {"tvV", 0.1},
                                               {"dVdBW", 0.1},
                                               {"tvCl", 0.05},
                                               {"dCldBW", 0.1},
                                               {"dCldAge", 0.04},
                                               {"dCldGender", 0.05},
                                               {"dCldHI", 0.05}});
            s.base_model = analysis_shell("scenario4_base", 1);
            s.base_model.parameters = {
                param("Ka", 0.35, false),
                param("V", 13.5, true, {power_term("BW", 70.0, 1.0)}),
                param("Cl", 1.2, true,
                      {power_term("BW", 70.0, 0.75),
                       power_term("Age", 40.0, -0.9),
                       linear_term("Gender", 0.1)})};
            s.full_model = analysis_shell("scenario4_full", 1);
            s.full_model.parameters = s.truth.parameters;
            s.correct_model = Selected::full;
            s.crv_eta_target = "Cl";
            break;
        }
        case 5: {
            s.n_subjects = 6;
            s.default_replicates = 100;
            s.truth = analysis_shell("scenario5_truth", 2);
            s.truth.parameters = {param("Ka", 0.35, false),
                                  param("V", 13.5, true),
                                  param("V2", 34.0, true),
                                  param("Cl", 7.4, true),
                                  param("Cl2", 1.2, true)};
            s.study_sd = sd_by_label(s.truth, {{"tvKa", 0.05},
                                               {"tvV", 0.1},
                                               {"tvV2", 0.1},
                                               {"tvCl", 0.1},
                                               {"tvCl2", 0.1}});
            s.base_model = analysis_shell("scenario5_base", 1);
            s.base_model.parameters = {param("Ka", 0.35, false),
                                       param("V", 13.5, true),
                                       param("Cl", 7.4, true)};
            s.full_model = analysis_shell("scenario5_full", 2);
            s.full_model.parameters = s.truth.parameters;
            s.correct_model = Selected::full;
            s.crv_eta_target.clear();  // N/A
            break;
        }
        default:
            throw std::invalid_argument("scenario id must be 1..5");
    }
    return s;
}

namespace {

std::string subject_label(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "S%05zu", i + 1);
    return buf;
}

double positive_normal(StreamRng& rng, double mean, double sd,
                       std::size_t& redraws) {
    for (;;) {
        const double v = rng.normal(mean, sd);
        if (v > 0.0 || sd == 0.0) return v;
        ++redraws;
    }
}

}  // namespace

PopulationDataset generate_replicate(const ScenarioSpec& spec,
                                     std::uint64_t seed,
                                     std::size_t replicate_idx,
                                     ReplicateTruth* truth) {
    const auto lay = theta_layout(spec.truth);
    if (spec.study_sd.size() != lay.labels.size())
        throw std::logic_error("scenario: study_sd/theta layout mismatch");

    const double omega = spec.omega_override.value_or(spec.omega_truth);
    const double sigma2 = spec.sigma2_override.value_or(spec.sigma2_truth);
    const double omega_sd = std::sqrt(std::max(0.0, omega));
    const double eps_sd = std::sqrt(std::max(0.0, sigma2));

    ReplicateTruth local;
    ReplicateTruth& tr = truth ? *truth : local;
    tr = {};

    // Study-level fixed effects; typical values must stay positive.
    StreamRng study(seed, replicate_idx, 0, kStudyStream);
    std::vector<double> theta(lay.labels.size());
    for (std::size_t k = 0; k < theta.size(); ++k) {
        theta[k] = lay.log_scale[k]
                       ? positive_normal(study, lay.inits[k], spec.study_sd[k],
                                         tr.redraws)
                       : study.normal(lay.inits[k], spec.study_sd[k]);
        tr.study_theta[lay.labels[k]] = theta[k];
    }

    PopulationDataset ds;
    ds.name = "scenario" + std::to_string(spec.id) + "_rep" +
              std::to_string(replicate_idx);
    ds.covariate_schema.names = {"Gender", "BW", "Age"};
    ds.covariate_schema.kinds = {{"Gender", CovariateKind::binary},
                                 {"BW", CovariateKind::continuous},
                                 {"Age", CovariateKind::continuous}};
    if (spec.gen_hepatic_impairment) {
        ds.covariate_schema.names.push_back("HI");
        ds.covariate_schema.kinds["HI"] = CovariateKind::binary;
    }

    for (std::size_t i = 0; i < spec.n_subjects; ++i) {
        Subject subj;
        subj.id = subject_label(i);
        subj.doses.push_back({0.0, spec.dose_amount, Route::extravascular});

        StreamRng cov(seed, replicate_idx, i + 1, kCovariateStream);
        const double gender = cov.bernoulli(0.5) ? 1.0 : 0.0;  // 1 = male
        const double bw =
            positive_normal(cov, gender == 1.0 ? 70.0 : 65.0, 15.0, tr.redraws);
        const double age = positive_normal(cov, 40.0, 10.0, tr.redraws);
        subj.covariates = {{"Gender", gender}, {"BW", bw}, {"Age", age}};
        if (spec.gen_hepatic_impairment)
            subj.covariates["HI"] = cov.bernoulli(0.3) ? 1.0 : 0.0;

        StreamRng eta_rng(seed, replicate_idx, i + 1, kEtaStream);
        std::vector<double> eta(lay.eta_labels.size());
        for (auto& e : eta) e = eta_rng.normal(0.0, omega_sd);

        const PkParams p =
            resolve_params(spec.truth, theta, subj.covariates, eta);

        StreamRng eps(seed, replicate_idx, i + 1, kResidualStream);
        for (double t : spec.obs_times) {
            const double c = predict(spec.truth.structural, p, subj.doses, t);
            const double cobs = c * (1.0 + eps.normal(0.0, eps_sd));
            subj.observations.push_back({t, cobs, false});
        }

        tr.covariates.push_back(subj.covariates);
        tr.etas.push_back(eta);
        tr.subject_params.push_back(p);
        ds.subjects.push_back(std::move(subj));
    }
    validate_dataset(ds);
    return ds;
}

namespace {

std::vector<std::string> applicable_criteria(const ScenarioSpec& spec,
                                             const RunOptions& opts) {
    std::vector<std::string> all = {"aic", "bic", "wt_crv_y", "crv_y"};
    if (!spec.crv_eta_target.empty()) all.push_back("crv_eta");
    if (opts.criteria.empty()) return all;
    std::vector<std::string> out;
    for (const auto& c : opts.criteria) {
        if (std::find(all.begin(), all.end(), c) == all.end())
            throw std::invalid_argument("criterion '" + c +
                                        "' not applicable to scenario " +
                                        std::to_string(spec.id));
        out.push_back(c);
    }
    return out;
}

ReplicateResult evaluate_replicate(const ScenarioSpec& spec,
                                   const std::vector<std::string>& criteria,
                                   std::uint64_t seed, std::size_t idx,
                                   const RunOptions& opts) {
    ReplicateResult rr;
    rr.index = idx;

    ScenarioSpec design = spec;
    if (opts.n_subjects) design.n_subjects = *opts.n_subjects;

    PopulationDataset ds;
    try {
        ds = generate_replicate(design, seed, idx);
    } catch (const std::exception& e) {
        rr.failed = true;
        rr.failure = std::string("generation failed: ") + e.what();
        return rr;
    }

    const bool want_aic = std::find(criteria.begin(), criteria.end(), "aic") != criteria.end();
    const bool want_bic = std::find(criteria.begin(), criteria.end(), "bic") != criteria.end();
    std::vector<CvKind> cv_kinds;
    for (const auto& c : criteria) {
        if (c == "crv_y") cv_kinds.push_back(CvKind::crv_y);
        if (c == "wt_crv_y") cv_kinds.push_back(CvKind::wt_crv_y);
        if (c == "crv_eta") cv_kinds.push_back(CvKind::crv_eta);
    }

    try {
        auto base_model = make_compartment_model(design.base_model, ds);
        auto full_model = make_compartment_model(design.full_model, ds);

        FitResult base_fit = fit(*base_model, ds, opts.fit_options);
        FitResult full_fit = fit(*full_model, ds, opts.fit_options);
        rr.base_fit_converged = base_fit.converged;
        rr.full_fit_converged = full_fit.converged;

        auto record_ic = [&](const std::string& name, double b, double f) {
            CriterionOutcome out;
            out.base_value = b;
            out.full_value = f;
            out.selected = b <= f ? Selected::base : Selected::full;
            out.correct = *out.selected == design.correct_model;
            rr.criteria[name] = out;
        };
        if (want_aic) record_ic("aic", aic(base_fit), aic(full_fit));
        if (want_bic) record_ic("bic", bic(base_fit), bic(full_fit));

        if (!cv_kinds.empty()) {
            CvOptions cv_opts;
            cv_opts.fit_options = opts.fit_options;
            const auto folds = partition_subjects(ds, ds.n_subjects(), seed);
            const CvRun base_run = run_cv(*base_model, ds, folds, cv_opts);
            const CvRun full_run = run_cv(*full_model, ds, folds, cv_opts);
            for (CvKind kind : cv_kinds) {
                CriterionOutcome out;
                try {
                    CompareOptions copts;
                    copts.convention = opts.convention;
                    copts.cv = cv_opts;
                    if (kind == CvKind::crv_eta) copts.target = design.crv_eta_target;
                    const CvComparison cmp =
                        compare_from_runs(base_run, *base_model, full_run,
                                          *full_model, ds, kind, copts);
                    out.selected = cmp.selected;
                    out.correct = cmp.selected == design.correct_model;
                    out.base_value = cmp.base.value;
                    out.full_value = cmp.full.value;
                    out.base_se = cmp.base.se;
                    out.full_se = cmp.full.se;
                    out.failed_folds = cmp.dropped_folds;
                    out.note = cmp.rule_trace;
                } catch (const std::exception& e) {
                    out.note = e.what();
                }
                rr.criteria[to_string(kind)] = out;
            }
        }
    } catch (const std::exception& e) {
        rr.failed = true;
        rr.failure = e.what();
    }
    return rr;
}

}  // namespace

ScenarioSummary summarize_distributions(
    int scenario_id, Selected correct,
    const std::vector<ReplicateResult>& results) {
    ScenarioSummary sum;
    sum.scenario_id = scenario_id;
    sum.n_replicates = results.size();
    for (const auto& r : results)
        if (r.failed) ++sum.n_failed_replicates;

    std::vector<std::string> names;
    for (const auto& r : results)
        for (const auto& [name, _] : r.criteria)
            if (std::find(names.begin(), names.end(), name) == names.end())
                names.push_back(name);
    std::sort(names.begin(), names.end());

    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& name : names) {
        CriterionSummary cs;
        cs.name = name;
        std::vector<double> bvals, fvals, bses, fses;
        std::size_t correct_count = 0;
        for (const auto& r : results) {
            auto it = r.criteria.find(name);
            if (it == r.criteria.end() || !it->second.selected) continue;
            ++cs.n;
            if (it->second.correct) ++correct_count;
            bvals.push_back(it->second.base_value);
            fvals.push_back(it->second.full_value);
            bses.push_back(it->second.base_se);
            fses.push_back(it->second.full_se);
        }
        if (cs.n > 0) {
            cs.correct_rate =
                static_cast<double>(correct_count) / static_cast<double>(cs.n);
            cs.se = std::sqrt(cs.correct_rate * (1.0 - cs.correct_rate) /
                              static_cast<double>(cs.n));
        }
        auto sd_or_nan = [&](const std::vector<double>& v) {
            return v.size() < 2 ? nan : sample_sd(v);
        };
        cs.base_mean = bvals.empty() ? nan : mean(bvals);
        cs.full_mean = fvals.empty() ? nan : mean(fvals);
        cs.base_sd = sd_or_nan(bvals);
        cs.full_sd = sd_or_nan(fvals);
        cs.base_se_mean = bses.empty() ? nan : mean(bses);
        cs.full_se_mean = fses.empty() ? nan : mean(fses);
        cs.base_se_sd = sd_or_nan(bses);
        cs.full_se_sd = sd_or_nan(fses);
        sum.criteria.push_back(cs);
    }
    (void)correct;
    return sum;
}

ScenarioRun run_scenario(const ScenarioSpec& spec, std::size_t n_replicates,
                         std::uint64_t seed, const RunOptions& opts) {
    const auto criteria = applicable_criteria(spec, opts);
    ScenarioRun run;
    run.replicates.resize(n_replicates);
    parallel_for_indexed(n_replicates, opts.jobs, [&](std::size_t i) {
        run.replicates[i] = evaluate_replicate(spec, criteria, seed, i, opts);
    });
    run.summary = summarize_distributions(spec.id, spec.correct_model,
                                          run.replicates);
    return run;
}

}  // namespace nlmecv
