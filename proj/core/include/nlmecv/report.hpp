#pragma once

#include <map>
#include <string>

#include "nlmecv/crossval.hpp"
#include "nlmecv/trial_sim.hpp"

namespace nlmecv {

// Machine-readable reports (JSON) and aligned text tables. Every report
// embeds the configuration that produced it; no timestamps, so identical
// runs serialize byte-identically.

std::string fit_report_json(const Model& model, const FitResult& fr,
                            const std::string& config_json);
std::string fit_report_text(const Model& model, const FitResult& fr);

// Reads {"params": {"theta": [...], "omega_diag": [...], "sigma2": x}}
// back out of a fit report.
PopulationParams params_from_fit_report(const std::string& json_text);

std::string posthoc_report_json(
    const std::map<std::string, SubjectLaplace>& etas,
    const std::string& config_json);

std::string cv_report_json(const CvComparison& cmp, CvKind kind,
                           const std::string& config_json);
std::string cv_report_text(const CvComparison& cmp, CvKind kind);

std::string replicate_result_json(const ReplicateResult& rr);
std::string scenario_summary_csv(const ScenarioSummary& sum);
std::string scenario_distributions_csv(const ScenarioSummary& sum);
std::string scenario_summary_text(const ScenarioSummary& sum);

}  // namespace nlmecv
