#include "nlmecv/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "nlmecv/estimation.hpp"

namespace nlmecv {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json config_block(const std::string& config_json) {
    if (config_json.empty()) return ordered_json::object();
    try {
        return ordered_json::parse(config_json);
    } catch (...) {
        return ordered_json(config_json);
    }
}

ordered_json params_block(const PopulationParams& pp) {
    return ordered_json{{"theta", pp.theta},
                        {"omega_diag", pp.omega_diag},
                        {"sigma2", pp.sigma2}};
}

double nan_to_null_ok(double v) { return v; }

std::string fmt(double v, const char* spec = "%.6g") {
    if (std::isnan(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::string csv_num(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

std::string fit_report_json(const Model& model, const FitResult& fr,
                            const std::string& config_json) {
    ordered_json j;
    j["report"] = "fit";
    j["config"] = config_block(config_json);
    j["converged"] = fr.converged;
    j["loglik"] = fr.loglik;
    j["n_obs"] = fr.n_obs;
    j["n_params"] = fr.n_params;
    j["aic"] = aic(fr);
    j["bic"] = bic(fr);
    j["params"] = params_block(fr.params);

    ordered_json theta = ordered_json::object();
    for (std::size_t k = 0; k < model.theta_dim(); ++k)
        theta[model.theta_label(k)] = fr.params.theta[k];
    j["fixed_effects"] = theta;
    ordered_json omega = ordered_json::object();
    for (std::size_t d = 0; d < model.eta_dim(); ++d)
        omega["eta" + model.eta_label(d)] = fr.params.omega_diag[d];
    j["omega"] = omega;
    j["sigma"] = std::sqrt(fr.params.sigma2);

    if (!fr.posthoc.empty() && model.eta_dim() > 0) {
        ordered_json shr = ordered_json::object();
        const auto s = eta_shrinkage(fr);
        for (std::size_t d = 0; d < s.size(); ++d)
            shr["eta" + model.eta_label(d)] = s[d];
        j["shrinkage"] = shr;
    }
    j["posthoc_eta"] = fr.posthoc;
    j["diagnostics"] = {{"outer_iterations", fr.diagnostics.outer_iterations},
                        {"polish_evals", fr.diagnostics.polish_evals},
                        {"objective_evals", fr.diagnostics.objective_evals},
                        {"grad_norm", fr.diagnostics.grad_norm},
                        {"objective_at_init", fr.diagnostics.objective_at_init}};
    return j.dump(2) + "\n";
}

std::string fit_report_text(const Model& model, const FitResult& fr) {
    std::ostringstream os;
    os << "fit: " << (fr.converged ? "converged" : "NOT CONVERGED")
       << "  loglik=" << fmt(fr.loglik, "%.6f") << "  AIC=" << fmt(aic(fr), "%.3f")
       << "  BIC=" << fmt(bic(fr), "%.3f") << "\n";
    os << "  n_obs=" << fr.n_obs << "  n_params=" << fr.n_params << "\n";
    for (std::size_t k = 0; k < model.theta_dim(); ++k) {
        char line[96];
        std::snprintf(line, sizeof(line), "  %-12s %12.6g\n",
                      model.theta_label(k).c_str(), fr.params.theta[k]);
        os << line;
    }
    for (std::size_t d = 0; d < model.eta_dim(); ++d) {
        char line[96];
        std::snprintf(line, sizeof(line), "  omega2(%-4s) %12.6g\n",
                      model.eta_label(d).c_str(), fr.params.omega_diag[d]);
        os << line;
    }
    os << "  sigma2       " << fmt(fr.params.sigma2, "%12.6g") << "\n";
    if (!fr.posthoc.empty() && model.eta_dim() > 0) {
        const auto s = eta_shrinkage(fr);
        os << "  shrinkage   ";
        for (std::size_t d = 0; d < s.size(); ++d)
            os << " " << model.eta_label(d) << "=" << fmt(s[d], "%.4f");
        os << "\n";
    }
    return os.str();
}

PopulationParams params_from_fit_report(const std::string& json_text) {
    const auto j = ordered_json::parse(json_text);
    const auto& p = j.at("params");
    PopulationParams pp;
    pp.theta = p.at("theta").get<std::vector<double>>();
    pp.omega_diag = p.at("omega_diag").get<std::vector<double>>();
    pp.sigma2 = p.at("sigma2").get<double>();
    return pp;
}

std::string posthoc_report_json(
    const std::map<std::string, SubjectLaplace>& etas,
    const std::string& config_json) {
    ordered_json j;
    j["report"] = "posthoc";
    j["config"] = config_block(config_json);
    ordered_json subjects = ordered_json::object();
    for (const auto& [id, sl] : etas) {
        subjects[id] = {{"ok", sl.ok},
                        {"eta", sl.eta_mode},
                        {"joint_nll", sl.joint_nll_at_mode},
                        {"message", sl.message}};
    }
    j["subjects"] = subjects;
    return j.dump(2) + "\n";
}

namespace {

ordered_json statistic_block(const CvStatistic& st) {
    ordered_json per = ordered_json::array();
    for (const auto& c : st.per_subject)
        per.push_back(ordered_json{{"id", c.id}, {"x", c.x}});
    ordered_json j{{"kind", to_string(st.kind)},
                   {"value", nan_to_null_ok(st.value)},
                   {"se", st.se},
                   {"failed_folds", st.failed_folds},
                   {"per_subject", per}};
    if (!st.target_parameter.empty()) j["target"] = st.target_parameter;
    return j;
}

}  // namespace

std::string cv_report_json(const CvComparison& cmp, CvKind kind,
                           const std::string& config_json) {
    ordered_json j;
    j["report"] = "cv_comparison";
    j["config"] = config_block(config_json);
    j["kind"] = to_string(kind);
    j["selected"] = cmp.selected == Selected::base ? "base" : "full";
    j["rule_trace"] = cmp.rule_trace;
    j["dropped_folds"] = cmp.dropped_folds;
    j["base"] = statistic_block(cmp.base);
    j["full"] = statistic_block(cmp.full);
    return j.dump(2) + "\n";
}

std::string cv_report_text(const CvComparison& cmp, CvKind kind) {
    std::ostringstream os;
    os << to_string(kind);
    if (!cmp.base.target_parameter.empty())
        os << "(" << cmp.base.target_parameter << ")";
    os << " comparison\n";
    char line[128];
    std::snprintf(line, sizeof(line), "  %-6s value=%-12.6g se=%-12.6g folds_failed=%zu\n",
                  "base", cmp.base.value, cmp.base.se, cmp.base.failed_folds);
    os << line;
    std::snprintf(line, sizeof(line), "  %-6s value=%-12.6g se=%-12.6g folds_failed=%zu\n",
                  "full", cmp.full.value, cmp.full.se, cmp.full.failed_folds);
    os << line;
    os << "  selected: " << (cmp.selected == Selected::base ? "base" : "full")
       << "  (" << cmp.rule_trace << ")\n";
    return os.str();
}

std::string replicate_result_json(const ReplicateResult& rr) {
    ordered_json j;
    j["replicate"] = rr.index;
    j["failed"] = rr.failed;
    if (rr.failed) j["failure"] = rr.failure;
    j["base_fit_converged"] = rr.base_fit_converged;
    j["full_fit_converged"] = rr.full_fit_converged;
    ordered_json crit = ordered_json::object();
    for (const auto& [name, c] : rr.criteria) {
        ordered_json cj;
        cj["selected"] =
            c.selected ? (*c.selected == Selected::base ? "base" : "full") : "none";
        cj["correct"] = c.correct;
        cj["base_value"] = c.base_value;
        cj["full_value"] = c.full_value;
        cj["base_se"] = c.base_se;
        cj["full_se"] = c.full_se;
        cj["failed_folds"] = c.failed_folds;
        if (!c.note.empty()) cj["note"] = c.note;
        crit[name] = cj;
    }
    j["criteria"] = crit;
    return j.dump();  // single line (JSONL)
}

std::string scenario_summary_csv(const ScenarioSummary& sum) {
    std::ostringstream os;
    os << "scenario,criterion,n,correct_rate,binomial_se\n";
    for (const auto& c : sum.criteria) {
        os << sum.scenario_id << ',' << c.name << ',' << c.n << ','
           << csv_num(c.correct_rate) << ',' << csv_num(c.se) << '\n';
    }
    return os.str();
}

std::string scenario_distributions_csv(const ScenarioSummary& sum) {
    std::ostringstream os;
    os << "scenario,criterion,n,base_mean,base_sd,full_mean,full_sd,"
          "base_se_mean,base_se_sd,full_se_mean,full_se_sd\n";
    for (const auto& c : sum.criteria) {
        os << sum.scenario_id << ',' << c.name << ',' << c.n << ','
           << csv_num(c.base_mean) << ',' << csv_num(c.base_sd) << ','
           << csv_num(c.full_mean) << ',' << csv_num(c.full_sd) << ','
           << csv_num(c.base_se_mean) << ',' << csv_num(c.base_se_sd) << ','
           << csv_num(c.full_se_mean) << ',' << csv_num(c.full_se_sd) << '\n';
    }
    return os.str();
}

std::string scenario_summary_text(const ScenarioSummary& sum) {
    std::ostringstream os;
    os << "scenario " << sum.scenario_id << ": " << sum.n_replicates
       << " replicates";
    if (sum.n_failed_replicates > 0)
        os << " (" << sum.n_failed_replicates << " failed)";
    os << "\n";
    os << "  criterion   n    correct  se       base mean    full mean\n";
    for (const auto& c : sum.criteria) {
        char line[160];
        std::snprintf(line, sizeof(line),
                      "  %-10s %-4zu %-8.3f %-8.3f %-12.6g %-12.6g\n",
                      c.name.c_str(), c.n, c.correct_rate, c.se, c.base_mean,
                      c.full_mean);
        os << line;
    }
    return os.str();
}

}  // namespace nlmecv
