#include "nlmecv/pk_model.hpp"

#include <algorithm>
#include <cmath>

namespace nlmecv {

const ParameterEntry* ModelSpec::find_parameter(const std::string& pname) const {
    for (const auto& p : parameters)
        if (p.name == pname) return &p;
    return nullptr;
}

ThetaLayout theta_layout(const ModelSpec& spec) {
    ThetaLayout lay;
    for (const auto& p : spec.parameters) {
        lay.labels.push_back("tv" + p.name);
        lay.log_scale.push_back(true);
        lay.inits.push_back(p.tv_init);
        for (const auto& c : p.covariates) {
            lay.labels.push_back("d" + p.name + "d" + c.covariate);
            lay.log_scale.push_back(false);
            lay.inits.push_back(c.coefficient_init);
        }
        if (p.random_effect) {
            lay.eta_labels.push_back(p.name);
            lay.omega_inits.push_back(p.omega_init);
        }
    }
    return lay;
}

std::vector<std::string> required_parameters(const StructuralSpec& s) {
    std::vector<std::string> req;
    if (s.route == Route::extravascular) req.push_back("Ka");
    req.push_back("V");
    req.push_back("Cl");
    if (s.n_compartments == 2) {
        req.push_back("V2");
        req.push_back("Cl2");
    }
    if (s.has_tlag) req.push_back("Tlag");
    return req;
}

ModelSpec bind_model(const ModelSpec& spec, const PopulationDataset& ds) {
    if (spec.structural.n_compartments != 1 && spec.structural.n_compartments != 2)
        throw std::runtime_error("model '" + spec.name +
                                 "': compartments must be 1 or 2");
    if (spec.structural.has_tlag && spec.structural.route != Route::extravascular)
        throw std::runtime_error("model '" + spec.name +
                                 "': Tlag requires an extravascular route");

    ModelSpec out = spec;
    for (const auto& want : required_parameters(spec.structural))
        if (!out.find_parameter(want))
            throw std::runtime_error("model '" + spec.name +
                                     "': missing parameter equation for " + want);
    for (const auto& p : out.parameters) {
        bool known = false;
        for (const auto& want : required_parameters(spec.structural))
            if (want == p.name) known = true;
        if (!known)
            throw std::runtime_error("model '" + spec.name + "': parameter " +
                                     p.name + " not used by the structural model");
        if (p.name == "Tlag" && p.random_effect)
            throw std::runtime_error("model '" + spec.name +
                                     "': Tlag is a fixed effect only");
    }

    for (const auto& s : ds.subjects)
        for (const auto& d : s.doses)
            if (d.route != spec.structural.route)
                throw std::runtime_error("model '" + spec.name +
                                         "': dose route for subject " + s.id +
                                         " does not match the structural route");

    for (auto& p : out.parameters) {
        for (auto& c : p.covariates) {
            double sum = 0.0;
            for (const auto& s : ds.subjects) {
                auto it = s.covariates.find(c.covariate);
                if (it == s.covariates.end())
                    throw std::runtime_error("model '" + spec.name +
                                             "': covariate '" + c.covariate +
                                             "' missing for subject " + s.id);
                sum += it->second;
            }
            if (c.form == CovariateForm::power && !c.reference) {
                c.reference = sum / static_cast<double>(ds.n_subjects());
            }
            if (c.form == CovariateForm::power && *c.reference <= 0.0)
                throw std::runtime_error("model '" + spec.name +
                                         "': non-positive reference for '" +
                                         c.covariate + "'");
        }
    }
    return out;
}

PkParams resolve_params(const ModelSpec& spec, std::span<const double> theta,
                        const std::map<std::string, double>& covariates,
                        std::span<const double> eta) {
    PkParams out;
    std::size_t ti = 0;
    std::size_t ei = 0;
    for (const auto& p : spec.parameters) {
        double value = theta[ti++];
        for (const auto& c : p.covariates) {
            const double coef = theta[ti++];
            auto it = covariates.find(c.covariate);
            if (it == covariates.end())
                throw std::runtime_error("covariate '" + c.covariate +
                                         "' missing at evaluation");
            const double x = it->second;
            if (c.form == CovariateForm::power) {
                const double base = x / *c.reference;
                if (base <= 0.0)
                    throw PredictionError("non-positive covariate base for '" +
                                          c.covariate + "'");
                value *= std::pow(base, coef);
            } else {
                const double factor = 1.0 + coef * x;
                if (factor <= 0.0)
                    throw PredictionError("non-positive parameter: (1 + d*" +
                                          c.covariate + ") <= 0");
                value *= factor;
            }
        }
        if (p.random_effect) value *= std::exp(eta[ei++]);

        if (p.name == "Ka") out.ka = value;
        else if (p.name == "V") out.v = value;
        else if (p.name == "V2") out.v2 = value;
        else if (p.name == "Cl") out.cl = value;
        else if (p.name == "Cl2") out.cl2 = value;
        else if (p.name == "Tlag") out.tlag = value;
        else throw std::runtime_error("unknown PK parameter " + p.name);
    }
    return out;
}

namespace {

// Removable-singularity guard: when Ka collides with a disposition rate,
// nudge it by 1e-8 relative before evaluating the closed form.
double separate(double ka, double rate) {
    if (std::fabs(ka - rate) < 1e-10 * std::max(rate, 1e-30))
        return ka * (1.0 + 1e-8) + (ka == 0.0 ? 1e-16 : 0.0);
    return ka;
}

double one_cpt_bolus(double dose, double v, double k, double t) {
    return dose / v * std::exp(-k * t);
}

double one_cpt_ev(double dose, double v, double cl, double ka, double t) {
    const double k = cl / v;
    ka = separate(ka, k);
    return dose * ka / (v * (ka - k)) * (std::exp(-k * t) - std::exp(-ka * t));
}

struct MacroRates {
    double alpha, beta, k21;
};

MacroRates two_cpt_rates(const PkParams& p) {
    const double k10 = p.cl / p.v;
    const double k12 = p.cl2 / p.v;
    const double k21 = p.cl2 / p.v2;
    const double s = k10 + k12 + k21;
    double disc = s * s - 4.0 * k10 * k21;
    if (disc < 0.0) disc = 0.0;  // cannot occur for positive rates
    const double root = std::sqrt(disc);
    double alpha = 0.5 * (s + root);
    double beta = 0.5 * (s - root);
    if (alpha - beta < 1e-12 * alpha) alpha = beta * (1.0 + 1e-8) + 1e-30;
    return {alpha, beta, k21};
}

double two_cpt_bolus(double dose, const PkParams& p, double t) {
    const auto [alpha, beta, k21] = two_cpt_rates(p);
    const double ca = (alpha - k21) / (alpha - beta);
    const double cb = (k21 - beta) / (alpha - beta);
    return dose / p.v * (ca * std::exp(-alpha * t) + cb * std::exp(-beta * t));
}

double two_cpt_ev(double dose, const PkParams& p, double t) {
    const auto [alpha, beta, k21] = two_cpt_rates(p);
    double ka = separate(separate(p.ka, alpha), beta);
    const double ca = (k21 - alpha) / ((ka - alpha) * (beta - alpha));
    const double cb = (k21 - beta) / ((ka - beta) * (alpha - beta));
    const double ck = (k21 - ka) / ((alpha - ka) * (beta - ka));
    return dose * ka / p.v *
           (ca * std::exp(-alpha * t) + cb * std::exp(-beta * t) +
            ck * std::exp(-ka * t));
}

}  // namespace

double predict(const StructuralSpec& s, const PkParams& p,
               std::span<const DoseEvent> doses, double t) {
    if (t < 0.0) throw std::invalid_argument("predict: negative time");
    double c = 0.0;
    for (const auto& d : doses) {
        double t0 = d.time;
        if (d.route == Route::extravascular && s.has_tlag) t0 += p.tlag;
        const double dt = t - t0;
        if (dt <= 0.0) continue;
        if (d.route == Route::iv_bolus) {
            c += (s.n_compartments == 1)
                     ? one_cpt_bolus(d.amount, p.v, p.cl / p.v, dt)
                     : two_cpt_bolus(d.amount, p, dt);
        } else {
            c += (s.n_compartments == 1)
                     ? one_cpt_ev(d.amount, p.v, p.cl, p.ka, dt)
                     : two_cpt_ev(d.amount, p, dt);
        }
    }
    return c;
}

double residual_weight(const ErrorModel& em, double pred) {
    if (em.kind == ErrorModel::Kind::additive) return 1.0;
    if (pred < kMinProportionalPred)
        throw PredictionError("proportional weight at near-zero prediction");
    return 1.0 / (pred * pred);
}

double residual_variance(const ErrorModel& em, double sigma2, double pred) {
    if (sigma2 <= 0.0)
        throw std::invalid_argument("residual_variance: sigma2 must be positive");
    if (em.kind == ErrorModel::Kind::additive) return sigma2;
    return sigma2 * pred * pred;
}

}  // namespace nlmecv
