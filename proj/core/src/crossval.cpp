#include "nlmecv/crossval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "nlmecv/parallel.hpp"
#include "nlmecv/stats.hpp"

namespace nlmecv {

std::string to_string(CvKind kind) {
    switch (kind) {
        case CvKind::crv_eta: return "crv_eta";
        case CvKind::crv_y: return "crv_y";
        case CvKind::wt_crv_y: return "wt_crv_y";
    }
    return "?";
}

std::size_t CvRun::n_failed() const {
    std::size_t n = 0;
    for (const auto& o : outcomes)
        if (!o.ok) ++n;
    return n;
}

CvStatistic make_statistic(CvKind kind, std::vector<SubjectContribution> xs,
                           std::size_t failed_folds, std::string target) {
    std::sort(xs.begin(), xs.end(),
              [](const SubjectContribution& a, const SubjectContribution& b) {
                  return a.id < b.id;
              });
    CvStatistic st;
    st.kind = kind;
    st.target_parameter = std::move(target);
    st.failed_folds = failed_folds;
    st.per_subject = std::move(xs);
    std::vector<double> vals;
    vals.reserve(st.per_subject.size());
    for (const auto& c : st.per_subject) vals.push_back(c.x);
    st.value = vals.empty() ? 0.0 : mean(vals);
    st.se = standard_error(vals);
    return st;
}

namespace {

void validate_folds(const PopulationDataset& ds,
                    const std::vector<std::vector<std::string>>& folds) {
    if (folds.size() < 2)
        throw std::invalid_argument("cross-validation needs at least 2 folds");
    std::set<std::string> seen;
    std::size_t total = 0;
    for (const auto& fold : folds) {
        if (fold.empty()) throw std::invalid_argument("empty fold");
        for (const auto& id : fold) {
            if (!ds.has_subject(id))
                throw std::invalid_argument("fold references unknown subject " + id);
            if (!seen.insert(id).second)
                throw std::invalid_argument("subject " + id + " in two folds");
            ++total;
        }
    }
    if (total != ds.n_subjects())
        throw std::invalid_argument("folds do not cover the dataset");
}

}  // namespace

CvRun run_cv(const Model& model, const PopulationDataset& ds,
             const std::vector<std::vector<std::string>>& folds,
             const CvOptions& opts) {
    validate_folds(ds, folds);
    CvRun run;
    run.folds = folds;
    run.outcomes.resize(folds.size());

    parallel_for_indexed(folds.size(), opts.jobs, [&](std::size_t fi) {
        FoldOutcome& out = run.outcomes[fi];
        out.held_out = folds[fi];
        PopulationDataset train = ds;
        for (const auto& id : folds[fi]) train = remove_subject(train, id);
        try {
            FitResult fr = fit(model, train, opts.fit_options);
            if (!fr.converged) {
                out.failure = "training fit did not converge";
                return;
            }
            out.frozen = fr.params;
        } catch (const std::exception& e) {
            out.failure = std::string("training fit failed: ") + e.what();
            return;
        }
        for (const auto& id : folds[fi]) {
            SubjectLaplace sl;
            try {
                sl = posthoc_eta(model, ds.subject(id), out.frozen);
            } catch (const std::exception& e) {
                sl.ok = false;
                sl.message = e.what();
            }
            if (!sl.ok) {
                out.failure = "post hoc failed for held-out subject " + id +
                              ": " + sl.message;
                return;
            }
            out.posthoc[id] = std::move(sl);
        }
        out.ok = true;
    });
    return run;
}

namespace {

struct FoldExtraction {
    bool ok = false;
    std::vector<SubjectContribution> contributions;
    std::string reason;
};

using Extractor = std::function<double(const FoldOutcome&, const Subject&,
                                       const SubjectLaplace&)>;

std::vector<FoldExtraction> extract_folds(const CvRun& run,
                                          const PopulationDataset& ds,
                                          const Extractor& x_of) {
    std::vector<FoldExtraction> out(run.outcomes.size());
    for (std::size_t fi = 0; fi < run.outcomes.size(); ++fi) {
        const FoldOutcome& fold = run.outcomes[fi];
        FoldExtraction& ex = out[fi];
        if (!fold.ok) {
            ex.reason = fold.failure;
            continue;
        }
        try {
            for (const auto& id : fold.held_out) {
                const Subject& subj = ds.subject(id);
                ex.contributions.push_back({id, x_of(fold, subj, fold.posthoc.at(id))});
            }
            ex.ok = true;
        } catch (const PredictionError& e) {
            ex.contributions.clear();
            ex.reason = e.what();
        }
    }
    return out;
}

CvStatistic assemble(CvKind kind, const std::vector<FoldExtraction>& folds,
                     double max_failed_fraction, std::string target) {
    std::vector<SubjectContribution> xs;
    std::size_t failed = 0;
    for (const auto& f : folds) {
        if (!f.ok) { ++failed; continue; }
        xs.insert(xs.end(), f.contributions.begin(), f.contributions.end());
    }
    if (static_cast<double>(failed) >
        max_failed_fraction * static_cast<double>(folds.size()))
        throw std::runtime_error(
            to_string(kind) + ": " + std::to_string(failed) + " of " +
            std::to_string(folds.size()) + " folds failed (> " +
            std::to_string(max_failed_fraction * 100.0) + "% budget)");
    return make_statistic(kind, std::move(xs), failed, std::move(target));
}

double squared_residual_mean(const Model& model, const FoldOutcome& fold,
                             const Subject& subj, const SubjectLaplace& sl,
                             bool weighted) {
    std::vector<double> pred;
    model.predict_subject(subj, fold.frozen.theta, sl.eta_mode, pred);
    double acc = 0.0;
    std::size_t t = 0;
    std::size_t j = 0;
    for (const auto& obs : subj.observations) {
        if (obs.missing) continue;
        const double yhat = pred[j++];
        const double r = obs.dv - yhat;
        if (weighted) {
            const double w = residual_weight(model.error(), yhat);
            acc += w * r * r / fold.frozen.sigma2;
        } else {
            acc += r * r;
        }
        ++t;
    }
    if (t == 0) throw std::runtime_error("subject " + subj.id + " has no observations");
    return acc / static_cast<double>(t);
}

}  // namespace

CvStatistic crv_eta_from_run(const CvRun& run, const Model& model,
                             const std::string& target,
                             double max_failed_fraction) {
    const int d = model.eta_index(target);
    if (d < 0)
        throw std::invalid_argument("crv_eta: model has no random effect on '" +
                                    target + "'");
    // Extraction needs no dataset access beyond the stored etas; build a
    // dummy extractor path through the stored posthoc map directly.
    std::vector<FoldExtraction> ex(run.outcomes.size());
    for (std::size_t fi = 0; fi < run.outcomes.size(); ++fi) {
        const FoldOutcome& fold = run.outcomes[fi];
        if (!fold.ok) { ex[fi].reason = fold.failure; continue; }
        for (const auto& id : fold.held_out) {
            const double e = fold.posthoc.at(id).eta_mode[static_cast<std::size_t>(d)];
            ex[fi].contributions.push_back({id, e * e});
        }
        ex[fi].ok = true;
    }
    return assemble(CvKind::crv_eta, ex, max_failed_fraction, target);
}

CvStatistic crv_y_from_run(const CvRun& run, const Model& model,
                           const PopulationDataset& ds,
                           double max_failed_fraction) {
    auto ex = extract_folds(run, ds,
                            [&](const FoldOutcome& fold, const Subject& subj,
                                const SubjectLaplace& sl) {
                                return squared_residual_mean(model, fold, subj,
                                                             sl, false);
                            });
    return assemble(CvKind::crv_y, ex, max_failed_fraction, {});
}

CvStatistic wt_crv_y_from_run(const CvRun& run, const Model& model,
                              const PopulationDataset& ds,
                              double max_failed_fraction) {
    auto ex = extract_folds(run, ds,
                            [&](const FoldOutcome& fold, const Subject& subj,
                                const SubjectLaplace& sl) {
                                return squared_residual_mean(model, fold, subj,
                                                             sl, true);
                            });
    return assemble(CvKind::wt_crv_y, ex, max_failed_fraction, {});
}

CvStatistic crv_eta(const Model& model, const PopulationDataset& ds,
                    const std::string& target,
                    const std::vector<std::vector<std::string>>& folds,
                    const CvOptions& opts) {
    return crv_eta_from_run(run_cv(model, ds, folds, opts), model, target,
                            opts.max_failed_fraction);
}

CvStatistic crv_y(const Model& model, const PopulationDataset& ds,
                  const std::vector<std::vector<std::string>>& folds,
                  const CvOptions& opts) {
    return crv_y_from_run(run_cv(model, ds, folds, opts), model, ds,
                          opts.max_failed_fraction);
}

CvStatistic wt_crv_y(const Model& model, const PopulationDataset& ds,
                     const std::vector<std::vector<std::string>>& folds,
                     const CvOptions& opts) {
    return wt_crv_y_from_run(run_cv(model, ds, folds, opts), model, ds,
                             opts.max_failed_fraction);
}

CvComparison select_one_se(const CvStatistic& base, const CvStatistic& full,
                           bool base_is_simpler, SeBandConvention convention) {
    if (base.kind != full.kind)
        throw std::invalid_argument("select_one_se: mismatched statistic kinds");
    CvComparison cmp;
    cmp.base = base;
    cmp.full = full;

    const auto pick_band = [&](const CvStatistic& minimizer) {
        return convention == SeBandConvention::minimizer_se ? minimizer.se
                                                            : base.se;
    };

    if (base_is_simpler) {
        if (base.value <= full.value) {
            cmp.selected = Selected::base;
            cmp.rule_trace = "base attains the minimum";
        } else if (base.value <= full.value + pick_band(full)) {
            cmp.selected = Selected::base;
            cmp.rule_trace = "base within one SE of the full-model minimum";
        } else {
            cmp.selected = Selected::full;
            cmp.rule_trace = "full below base by more than one SE";
        }
    } else {
        // mirrored: full is the parsimonious side
        if (full.value <= base.value) {
            cmp.selected = Selected::full;
            cmp.rule_trace = "full attains the minimum";
        } else if (full.value <= base.value + pick_band(base)) {
            cmp.selected = Selected::full;
            cmp.rule_trace = "full within one SE of the base-model minimum";
        } else {
            cmp.selected = Selected::base;
            cmp.rule_trace = "base below full by more than one SE";
        }
    }
    return cmp;
}

CvComparison compare_from_runs(const CvRun& base_run, const Model& base_model,
                               const CvRun& full_run, const Model& full_model,
                               const PopulationDataset& ds, CvKind kind,
                               const CompareOptions& opts) {
    if (base_run.folds != full_run.folds)
        throw std::invalid_argument("compare_from_runs: fold partitions differ");

    auto extract = [&](const CvRun& run, const Model& model) {
        std::vector<FoldExtraction> ex;
        switch (kind) {
            case CvKind::crv_eta: {
                const int d = model.eta_index(opts.target);
                if (d < 0)
                    throw std::invalid_argument(
                        "compare_models: crv_eta target '" + opts.target +
                        "' has no random effect in model");
                ex.resize(run.outcomes.size());
                for (std::size_t fi = 0; fi < run.outcomes.size(); ++fi) {
                    const FoldOutcome& fold = run.outcomes[fi];
                    if (!fold.ok) { ex[fi].reason = fold.failure; continue; }
                    for (const auto& id : fold.held_out) {
                        const double e =
                            fold.posthoc.at(id).eta_mode[static_cast<std::size_t>(d)];
                        ex[fi].contributions.push_back({id, e * e});
                    }
                    ex[fi].ok = true;
                }
                break;
            }
            case CvKind::crv_y:
                ex = extract_folds(run, ds,
                                   [&](const FoldOutcome& fold, const Subject& s,
                                       const SubjectLaplace& sl) {
                                       return squared_residual_mean(model, fold,
                                                                    s, sl, false);
                                   });
                break;
            case CvKind::wt_crv_y:
                ex = extract_folds(run, ds,
                                   [&](const FoldOutcome& fold, const Subject& s,
                                       const SubjectLaplace& sl) {
                                       return squared_residual_mean(model, fold,
                                                                    s, sl, true);
                                   });
                break;
        }
        return ex;
    };

    auto base_ex = extract(base_run, base_model);
    auto full_ex = extract(full_run, full_model);

    // Pairwise exclusion: a fold failed on either side is dropped from both.
    std::size_t dropped = 0;
    for (std::size_t fi = 0; fi < base_ex.size(); ++fi) {
        if (base_ex[fi].ok && full_ex[fi].ok) continue;
        base_ex[fi].ok = false;
        full_ex[fi].ok = false;
        ++dropped;
    }

    const std::string target = kind == CvKind::crv_eta ? opts.target : std::string();
    CvStatistic base_stat =
        assemble(kind, base_ex, opts.cv.max_failed_fraction, target);
    CvStatistic full_stat =
        assemble(kind, full_ex, opts.cv.max_failed_fraction, target);

    CvComparison cmp = select_one_se(base_stat, full_stat, true, opts.convention);
    cmp.dropped_folds = dropped;
    return cmp;
}

CvComparison compare_models(const Model& base_model, const Model& full_model,
                            const PopulationDataset& ds, CvKind kind,
                            const CompareOptions& opts) {
    if (kind == CvKind::crv_eta) {
        if (opts.target.empty())
            throw std::invalid_argument("compare_models: crv_eta needs a target");
        if (base_model.eta_index(opts.target) < 0 ||
            full_model.eta_index(opts.target) < 0)
            throw std::invalid_argument(
                "compare_models: both models need a random effect on '" +
                opts.target + "'");
    }
    const std::size_t k = opts.cv.folds == 0 ? ds.n_subjects() : opts.cv.folds;
    const auto folds = partition_subjects(ds, k, opts.cv.seed);
    CvRun base_run = run_cv(base_model, ds, folds, opts.cv);
    CvRun full_run = run_cv(full_model, ds, folds, opts.cv);
    return compare_from_runs(base_run, base_model, full_run, full_model, ds,
                             kind, opts);
}

}  // namespace nlmecv
