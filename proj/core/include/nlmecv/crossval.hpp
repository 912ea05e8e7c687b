#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nlmecv/estimation.hpp"

namespace nlmecv {

enum class CvKind { crv_eta, crv_y, wt_crv_y };

std::string to_string(CvKind kind);

// Which model's standard error defines the one-SE band when the full
// model attains the minimum. The default follows the usual
// most-parsimonious-within-one-SE convention (the minimizing model's SE);
// the alternative reads the band off the base model's SE.
enum class SeBandConvention { minimizer_se, base_se };

struct SubjectContribution {
    std::string id;
    double x = 0.0;  // per-subject contribution (Eq. 5 / 10 / 11 form)
};

struct CvStatistic {
    CvKind kind = CvKind::crv_y;
    double value = 0.0;  // mean of per_subject over successful folds
    double se = 0.0;     // sample sd of per_subject / sqrt(count)
    std::vector<SubjectContribution> per_subject;  // sorted by subject id
    std::size_t failed_folds = 0;
    std::string target_parameter;  // crv_eta only
};

// Assembles value and SE from contributions; exposed so the arithmetic
// identities can be exercised on synthetic inputs.
CvStatistic make_statistic(CvKind kind, std::vector<SubjectContribution> xs,
                           std::size_t failed_folds = 0,
                           std::string target = {});

enum class Selected { base, full };

struct CvComparison {
    CvStatistic base;
    CvStatistic full;
    Selected selected = Selected::base;
    std::string rule_trace;
    std::size_t dropped_folds = 0;  // folds excluded pairwise
};

struct CvOptions {
    std::size_t folds = 0;  // 0 = leave-one-out
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    double max_failed_fraction = 0.2;
    FitOptions fit_options;
};

// One cross-validation fold: the training fit on the complement and the
// frozen-parameter post hoc etas of the held-out subjects.
struct FoldOutcome {
    std::vector<std::string> held_out;
    PopulationParams frozen;
    bool ok = false;
    std::string failure;
    std::map<std::string, SubjectLaplace> posthoc;  // held-out subjects
};

struct CvRun {
    std::vector<std::vector<std::string>> folds;
    std::vector<FoldOutcome> outcomes;

    std::size_t n_failed() const;
};

// Fits the model on each fold's complement (fresh inits every time),
// freezes the estimates, and computes held-out post hoc etas.
CvRun run_cv(const Model& model, const PopulationDataset& ds,
             const std::vector<std::vector<std::string>>& folds,
             const CvOptions& opts = {});

// Statistic extraction from a finished run. Folds whose extraction hits a
// prediction failure are flagged for that statistic only.
CvStatistic crv_eta_from_run(const CvRun& run, const Model& model,
                             const std::string& target,
                             double max_failed_fraction = 0.2);
CvStatistic crv_y_from_run(const CvRun& run, const Model& model,
                           const PopulationDataset& ds,
                           double max_failed_fraction = 0.2);
CvStatistic wt_crv_y_from_run(const CvRun& run, const Model& model,
                              const PopulationDataset& ds,
                              double max_failed_fraction = 0.2);

// Convenience single-model operations (partition with partition_subjects
// or pass explicit folds).
CvStatistic crv_eta(const Model& model, const PopulationDataset& ds,
                    const std::string& target,
                    const std::vector<std::vector<std::string>>& folds,
                    const CvOptions& opts = {});
CvStatistic crv_y(const Model& model, const PopulationDataset& ds,
                  const std::vector<std::vector<std::string>>& folds,
                  const CvOptions& opts = {});
CvStatistic wt_crv_y(const Model& model, const PopulationDataset& ds,
                     const std::vector<std::vector<std::string>>& folds,
                     const CvOptions& opts = {});

// One-SE selection between a base statistic and a full statistic.
// base_is_simpler states the parsimony order (true in every comparison
// the experiments run).
CvComparison select_one_se(const CvStatistic& base, const CvStatistic& full,
                           bool base_is_simpler = true,
                           SeBandConvention convention = SeBandConvention::minimizer_se);

struct CompareOptions {
    CvOptions cv;
    SeBandConvention convention = SeBandConvention::minimizer_se;
    std::string target;  // crv_eta target parameter
};

// Pairs two finished runs over the same folds: a fold failed for either
// model is dropped from both statistics before selection.
CvComparison compare_from_runs(const CvRun& base_run, const Model& base_model,
                               const CvRun& full_run, const Model& full_model,
                               const PopulationDataset& ds, CvKind kind,
                               const CompareOptions& opts);

// Full driver: shared fold partition, both fits, paired exclusion,
// one-SE selection. Deterministic given the seed.
CvComparison compare_models(const Model& base_model, const Model& full_model,
                            const PopulationDataset& ds, CvKind kind,
                            const CompareOptions& opts = {});

}  // namespace nlmecv
