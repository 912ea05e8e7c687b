#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nlmecv/dataset.hpp"

namespace nlmecv {

// Thrown when a prediction or weight cannot be evaluated at the given
// parameters (non-positive linear covariate factor, proportional-error
// weight at a vanishing prediction). Cross-validation drivers catch this
// and flag the fold instead of aborting.
struct PredictionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StructuralSpec {
    int n_compartments = 1;  // 1 or 2
    Route route = Route::extravascular;
    bool has_tlag = false;
};

enum class CovariateForm {
    power,   // (X / reference)^coefficient
    linear,  // 1 + coefficient * X
};

struct CovariateTerm {
    std::string covariate;
    CovariateForm form = CovariateForm::power;
    // Reference value for power terms; empty means "dataset mean", resolved
    // by bind_model(). Must end up > 0.
    std::optional<double> reference;
    double coefficient_init = 0.0;
};

// One PK parameter equation: P = tvP * (covariate factors) * exp(etaP).
struct ParameterEntry {
    std::string name;  // Ka, V, V2, Cl, Cl2, Tlag
    double tv_init = 1.0;
    bool random_effect = false;
    double omega_init = 0.1;  // variance of etaP when random_effect
    std::vector<CovariateTerm> covariates;
};

struct ErrorModel {
    enum class Kind { additive, proportional };
    Kind kind = Kind::additive;
};

struct ModelSpec {
    std::string name;
    StructuralSpec structural;
    std::vector<ParameterEntry> parameters;
    ErrorModel error;
    double sigma2_init = 0.01;

    const ParameterEntry* find_parameter(const std::string& pname) const;
};

// Resolved numeric PK parameters for one subject.
struct PkParams {
    double ka = 0.0;
    double v = 0.0;
    double v2 = 0.0;
    double cl = 0.0;
    double cl2 = 0.0;
    double tlag = 0.0;
};

// Fixed-effect layout derived from a ModelSpec: typical values first-come
// in declaration order, each followed by its covariate coefficients.
struct ThetaLayout {
    std::vector<std::string> labels;     // tvKa, dKadwt, tvV, ...
    std::vector<bool> log_scale;         // true for typical values
    std::vector<double> inits;
    std::vector<std::string> eta_labels; // parameter names carrying an eta
    std::vector<double> omega_inits;
};

ThetaLayout theta_layout(const ModelSpec& spec);

// Names the structural spec requires in ModelSpec::parameters.
std::vector<std::string> required_parameters(const StructuralSpec& s);

// Checks structural/parameter consistency and that every referenced
// covariate exists for every subject; fills in "dataset mean" covariate
// references. Returns the resolved spec.
ModelSpec bind_model(const ModelSpec& spec, const PopulationDataset& ds);

// Evaluates the parameter equations. theta follows theta_layout order,
// eta follows eta_labels order. Throws PredictionError when a linear
// factor is non-positive or a power base is non-positive.
PkParams resolve_params(const ModelSpec& spec, std::span<const double> theta,
                        const std::map<std::string, double>& covariates,
                        std::span<const double> eta);

// Concentration at time t from the closed-form solution of the linear
// compartment system, superposed over doses. Tlag shifts extravascular
// dose times.
double predict(const StructuralSpec& s, const PkParams& p,
               std::span<const DoseEvent> doses, double t);

// Residual-error weight of Eq.-style weighting: 1 for additive models,
// 1/pred^2 for proportional ones.
double residual_weight(const ErrorModel& em, double pred);

// Variance of one observation: sigma2 (additive) or sigma2*pred^2.
double residual_variance(const ErrorModel& em, double sigma2, double pred);

// Predictions below this are treated as a model error under proportional
// weighting rather than clamped.
inline constexpr double kMinProportionalPred = 1e-12;

}  // namespace nlmecv
