#include "nlmecv/model_config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace nlmecv {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

Route parse_route(const std::string& s) {
    if (s == "iv_bolus") return Route::iv_bolus;
    if (s == "extravascular") return Route::extravascular;
    throw std::runtime_error("model config: unknown route '" + s + "'");
}

ErrorModel::Kind parse_error_kind(const std::string& s) {
    if (s == "additive") return ErrorModel::Kind::additive;
    if (s == "proportional") return ErrorModel::Kind::proportional;
    throw std::runtime_error("model config: unknown error kind '" + s + "'");
}

CovariateForm parse_form(const std::string& s) {
    if (s == "power") return CovariateForm::power;
    if (s == "linear") return CovariateForm::linear;
    throw std::runtime_error("model config: unknown covariate form '" + s + "'");
}

}  // namespace

ModelSpec parse_model_spec(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("model config: ") + e.what());
    }

    ModelSpec spec;
    spec.name = j.value("name", "model");
    const auto& st = j.at("structural");
    spec.structural.n_compartments = st.at("compartments").get<int>();
    spec.structural.route = parse_route(st.at("route").get<std::string>());
    spec.structural.has_tlag = st.value("tlag", false);

    spec.error.kind = parse_error_kind(j.at("error").at("kind").get<std::string>());
    spec.sigma2_init = j.value("sigma2_init", 0.01);

    for (const auto& pj : j.at("parameters")) {
        ParameterEntry p;
        p.name = pj.at("name").get<std::string>();
        p.tv_init = pj.at("tv_init").get<double>();
        p.random_effect = pj.value("random_effect", false);
        p.omega_init = pj.value("omega_init", 0.1);
        if (pj.contains("covariates")) {
            for (const auto& cj : pj.at("covariates")) {
                CovariateTerm c;
                c.covariate = cj.at("covariate").get<std::string>();
                c.form = parse_form(cj.value("form", std::string("power")));
                if (cj.contains("reference") && !cj.at("reference").is_string())
                    c.reference = cj.at("reference").get<double>();
                // "mean" (or absent) leaves the reference to bind_model
                c.coefficient_init = cj.value("coefficient_init", 0.0);
                p.covariates.push_back(std::move(c));
            }
        }
        spec.parameters.push_back(std::move(p));
    }
    return spec;
}

ModelSpec load_model_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_model_spec(ss.str());
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

std::string model_spec_to_json(const ModelSpec& spec) {
    ordered_json j;
    j["name"] = spec.name;
    j["structural"] = {
        {"compartments", spec.structural.n_compartments},
        {"route", spec.structural.route == Route::iv_bolus ? "iv_bolus"
                                                           : "extravascular"},
        {"tlag", spec.structural.has_tlag},
    };
    j["error"] = {{"kind", spec.error.kind == ErrorModel::Kind::additive
                               ? "additive"
                               : "proportional"}};
    j["sigma2_init"] = spec.sigma2_init;
    j["parameters"] = ordered_json::array();
    for (const auto& p : spec.parameters) {
        ordered_json pj;
        pj["name"] = p.name;
        pj["tv_init"] = p.tv_init;
        pj["random_effect"] = p.random_effect;
        if (p.random_effect) pj["omega_init"] = p.omega_init;
        if (!p.covariates.empty()) {
            pj["covariates"] = ordered_json::array();
            for (const auto& c : p.covariates) {
                ordered_json cj;
                cj["covariate"] = c.covariate;
                cj["form"] = c.form == CovariateForm::power ? "power" : "linear";
                if (c.reference) cj["reference"] = *c.reference;
                else cj["reference"] = "mean";
                cj["coefficient_init"] = c.coefficient_init;
                pj["covariates"].push_back(cj);
            }
        }
        j["parameters"].push_back(pj);
    }
    return j.dump(2) + "\n";
}

void save_model_spec(const ModelSpec& spec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model config: " + path);
    out << model_spec_to_json(spec);
}

}  // namespace nlmecv
