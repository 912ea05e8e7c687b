// nlmecv — population PK model fitting and cross-validation model
// selection from the command line.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "nlmecv/model_config.hpp"
#include "nlmecv/report.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace nlmecv;

namespace {

std::string default_outdir() {
    const char* env = std::getenv("NLMECV_OUTDIR");
    return env ? env : ".";
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    std::cout << "wrote " << path.string() << "\n";
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CvKind parse_kind(const std::string& s) {
    if (s == "crv-eta" || s == "crv_eta") return CvKind::crv_eta;
    if (s == "crv-y" || s == "crv_y") return CvKind::crv_y;
    if (s == "wt-crv-y" || s == "wt_crv_y") return CvKind::wt_crv_y;
    throw CLI::ValidationError("--kind", "expected crv-eta, crv-y or wt-crv-y");
}

CsvSchema schema_for_route(const std::string& route) {
    CsvSchema schema;
    if (route == "iv-bolus" || route == "iv_bolus")
        schema.dose_route = Route::iv_bolus;
    else if (route == "extravascular")
        schema.dose_route = Route::extravascular;
    else
        throw CLI::ValidationError("--route", "expected iv-bolus or extravascular");
    return schema;
}

struct CommonArgs {
    std::string outdir = default_outdir();
    std::uint64_t seed = 0;
    std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
};

ordered_json invocation_block(const std::string& command,
                              const ordered_json& detail) {
    ordered_json j;
    j["command"] = command;
    j["detail"] = detail;
    return j;
}

int cmd_fit(const std::string& model_path, const std::string& data_path,
            const std::string& route, const CommonArgs& common) {
    const ModelSpec raw = load_model_spec(model_path);
    const PopulationDataset ds = load_csv(data_path, schema_for_route(route));
    auto model = make_compartment_model(raw, ds);
    const FitResult fr = fit(*model, ds);

    ordered_json detail{{"model_config", ordered_json::parse(model_spec_to_json(model->spec()))},
                        {"data", data_path}};
    const std::string report = fit_report_json(
        *model, fr, invocation_block("fit", detail).dump());
    write_file(fs::path(common.outdir) / "fit_report.json", report);
    std::cout << fit_report_text(*model, fr);
    return fr.converged ? 0 : 1;
}

int cmd_posthoc(const std::string& model_path, const std::string& data_path,
                const std::string& params_path, const std::string& route,
                const CommonArgs& common) {
    const ModelSpec raw = load_model_spec(model_path);
    const PopulationDataset ds = load_csv(data_path, schema_for_route(route));
    auto model = make_compartment_model(raw, ds);
    const PopulationParams frozen = params_from_fit_report(slurp(params_path));
    const auto etas = refit_frozen_posthoc(*model, ds, frozen);

    ordered_json detail{{"model_config", ordered_json::parse(model_spec_to_json(model->spec()))},
                        {"data", data_path},
                        {"params", params_path}};
    write_file(fs::path(common.outdir) / "posthoc_report.json",
               posthoc_report_json(etas, invocation_block("posthoc", detail).dump()));
    for (const auto& [id, sl] : etas) {
        std::cout << "  " << id << ":";
        if (sl.ok)
            for (double e : sl.eta_mode) std::cout << " " << e;
        else
            std::cout << " FAILED (" << sl.message << ")";
        std::cout << "\n";
    }
    return 0;
}

int cmd_cv(const std::string& kind_str, const std::string& base_path,
           const std::string& full_path, const std::string& data_path,
           const std::string& target, std::size_t folds,
           const std::string& convention, const std::string& route,
           const CommonArgs& common) {
    const CvKind kind = parse_kind(kind_str);
    const PopulationDataset ds = load_csv(data_path, schema_for_route(route));
    auto base_model = make_compartment_model(load_model_spec(base_path), ds);
    auto full_model = make_compartment_model(load_model_spec(full_path), ds);

    CompareOptions opts;
    opts.cv.folds = folds;
    opts.cv.seed = common.seed;
    opts.cv.jobs = common.jobs;
    opts.target = target;
    opts.convention = convention == "base-se" ? SeBandConvention::base_se
                                              : SeBandConvention::minimizer_se;

    const CvComparison cmp = compare_models(*base_model, *full_model, ds, kind, opts);

    ordered_json detail{
        {"kind", to_string(kind)},
        {"base_config", ordered_json::parse(model_spec_to_json(base_model->spec()))},
        {"full_config", ordered_json::parse(model_spec_to_json(full_model->spec()))},
        {"data", data_path},
        {"target", target},
        {"folds", folds == 0 ? ds.n_subjects() : folds},
        {"seed", common.seed},
        {"convention", convention}};
    write_file(fs::path(common.outdir) / "cv_report.json",
               cv_report_json(cmp, kind, invocation_block("cv", detail).dump()));
    std::cout << cv_report_text(cmp, kind);
    return 0;
}

int cmd_simulate(int scenario_id, std::size_t replicates, bool dump,
                 std::size_t subjects, const CommonArgs& common) {
    ScenarioSpec spec = scenario(scenario_id);
    if (subjects > 0) spec.n_subjects = subjects;
    for (std::size_t r = 0; r < replicates; ++r) {
        const PopulationDataset ds = generate_replicate(spec, common.seed, r);
        std::cout << ds.name << ": " << ds.n_subjects() << " subjects, "
                  << ds.total_obs() << " observations\n";
        if (dump) {
            const fs::path path = fs::path(common.outdir) / (ds.name + ".csv");
            fs::create_directories(common.outdir);
            write_csv(ds, path.string());
            std::cout << "wrote " << path.string() << "\n";
        }
    }
    return 0;
}

int cmd_experiment(int scenario_id, std::size_t replicates,
                   const std::vector<std::string>& criteria,
                   const std::string& convention, std::size_t subjects,
                   const CommonArgs& common) {
    const ScenarioSpec spec = scenario(scenario_id);
    RunOptions opts;
    opts.jobs = common.jobs;
    opts.criteria = criteria;
    opts.convention = convention == "base-se" ? SeBandConvention::base_se
                                              : SeBandConvention::minimizer_se;
    if (subjects > 0) opts.n_subjects = subjects;
    const std::size_t reps = replicates > 0 ? replicates : spec.default_replicates;

    const ScenarioRun run = run_scenario(spec, reps, common.seed, opts);

    std::string jsonl;
    for (const auto& rr : run.replicates) jsonl += replicate_result_json(rr) + "\n";
    const fs::path dir(common.outdir);
    write_file(dir / "results.jsonl", jsonl);
    write_file(dir / "summary.csv", scenario_summary_csv(run.summary));
    write_file(dir / "distributions.csv",
               scenario_distributions_csv(run.summary));
    std::cout << scenario_summary_text(run.summary);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nlmecv: NLME population PK fitting and cross-validation model selection"};
    app.require_subcommand(1);
    CommonArgs common;

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "fit a model to a dataset");
    std::string model_path, data_path, params_path, route = "extravascular";
    fit_cmd->add_option("--model", model_path, "model config (JSON)")->required();
    fit_cmd->add_option("--data", data_path, "dataset CSV")->required();
    fit_cmd->add_option("--route", route, "dose route: extravascular | iv-bolus");
    fit_cmd->add_option("--out", common.outdir, "output directory");

    // posthoc
    auto* ph_cmd = app.add_subcommand("posthoc", "post hoc etas under frozen parameters");
    ph_cmd->add_option("--model", model_path, "model config (JSON)")->required();
    ph_cmd->add_option("--data", data_path, "dataset CSV")->required();
    ph_cmd->add_option("--params", params_path, "fit report JSON with frozen params")->required();
    ph_cmd->add_option("--route", route, "dose route: extravascular | iv-bolus");
    ph_cmd->add_option("--out", common.outdir, "output directory");

    // cv
    auto* cv_cmd = app.add_subcommand("cv", "cross-validation comparison of a base/full pair");
    std::string kind_str = "crv-y", base_path, full_path, target,
                convention = "minimizer-se";
    std::size_t folds = 0;
    cv_cmd->add_option("--kind", kind_str, "crv-eta | crv-y | wt-crv-y")->required();
    cv_cmd->add_option("--base", base_path, "base model config")->required();
    cv_cmd->add_option("--full", full_path, "full model config")->required();
    cv_cmd->add_option("--data", data_path, "dataset CSV")->required();
    cv_cmd->add_option("--target", target, "crv-eta target parameter");
    cv_cmd->add_option("--folds", folds, "fold count (default: leave-one-out)");
    cv_cmd->add_option("--seed", common.seed, "partition seed");
    cv_cmd->add_option("--jobs", common.jobs, "parallel folds");
    cv_cmd->add_option("--convention", convention, "one-SE band: minimizer-se | base-se");
    cv_cmd->add_option("--route", route, "dose route: extravascular | iv-bolus");
    cv_cmd->add_option("--out", common.outdir, "output directory");

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "generate scenario replicates");
    int scenario_id = 1;
    std::size_t replicates = 0, subjects = 0;
    bool dump = false;
    sim_cmd->add_option("--scenario", scenario_id, "scenario 1..5")->required();
    sim_cmd->add_option("--replicates", replicates, "replicate count")->required();
    sim_cmd->add_option("--seed", common.seed, "simulation seed");
    sim_cmd->add_option("--subjects", subjects, "override subject count");
    sim_cmd->add_flag("--dump", dump, "write dataset CSVs");
    sim_cmd->add_option("--out", common.outdir, "output directory");

    // experiment
    auto* exp_cmd = app.add_subcommand("experiment", "run a scenario selection experiment");
    std::vector<std::string> criteria;
    exp_cmd->add_option("--scenario", scenario_id, "scenario 1..5")->required();
    exp_cmd->add_option("--replicates", replicates, "replicate count (default: published)");
    exp_cmd->add_option("--seed", common.seed, "simulation seed");
    exp_cmd->add_option("--jobs", common.jobs, "parallel replicates");
    exp_cmd->add_option("--criteria", criteria, "subset of aic bic crv_y wt_crv_y crv_eta");
    exp_cmd->add_option("--convention", convention, "one-SE band: minimizer-se | base-se");
    exp_cmd->add_option("--subjects", subjects, "override subject count");
    exp_cmd->add_option("--out", common.outdir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*fit_cmd) return cmd_fit(model_path, data_path, route, common);
        if (*ph_cmd) return cmd_posthoc(model_path, data_path, params_path, route, common);
        if (*cv_cmd)
            return cmd_cv(kind_str, base_path, full_path, data_path, target,
                          folds, convention, route, common);
        if (*sim_cmd)
            return cmd_simulate(scenario_id, replicates, dump, subjects, common);
        if (*exp_cmd)
            return cmd_experiment(scenario_id, replicates, criteria, convention,
                                  subjects, common);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
