#include <cmath>

#include "doctest.h"
#include "nlmecv/pk_model.hpp"
#include "nlmecv/rng.hpp"
#include "support/ode_oracle.hpp"

using namespace nlmecv;

namespace {

ModelSpec cl_age_model() {
    ModelSpec m;
    m.name = "cl_age";
    m.structural = {1, Route::extravascular, false};
    m.error.kind = ErrorModel::Kind::proportional;
    ParameterEntry ka{"Ka", 0.35, false, 0.1, {}};
    ParameterEntry v{"V", 13.5, true, 0.1, {}};
    CovariateTerm age;
    age.covariate = "Age";
    age.form = CovariateForm::power;
    age.reference = 40.0;
    ParameterEntry cl{"Cl", 1.2, true, 0.1, {age}};
    m.parameters = {ka, v, cl};
    return m;
}

std::vector<DoseEvent> single_dose(double amount, Route route) {
    return {DoseEvent{0.0, amount, route}};
}

}  // namespace

TEST_CASE("resolve_params covariate arithmetic") {
    const ModelSpec m = cl_age_model();
    // theta order: tvKa, tvV, tvCl, dCldAge; etas: V, Cl
    SUBCASE("reference covariate value recovers the typical value") {
        const std::vector<double> theta = {0.35, 13.5, 1.2, -0.9};
        const std::vector<double> eta = {0.0, 0.0};
        const auto p = resolve_params(m, theta, {{"Age", 40.0}}, eta);
        CHECK(p.cl == doctest::Approx(1.2).epsilon(1e-15));
        CHECK(p.v == doctest::Approx(13.5).epsilon(1e-15));
    }
    SUBCASE("power term at half the reference") {
        const std::vector<double> theta = {0.35, 13.5, 1.2, -0.9};
        const std::vector<double> eta = {0.0, 0.0};
        const auto p = resolve_params(m, theta, {{"Age", 20.0}}, eta);
        // frozen: 1.2*exp(-0.9*ln 0.5)
        CHECK(p.cl == doctest::Approx(2.2392791796883378).epsilon(1e-14));
        CHECK(p.cl ==
              doctest::Approx(1.2 * std::exp(-0.9 * std::log(0.5))).epsilon(1e-14));
    }
    SUBCASE("eta scales multiplicatively") {
        const std::vector<double> theta = {0.35, 13.5, 1.2, 0.0};
        const std::vector<double> eta = {0.0, 0.25};
        const auto p = resolve_params(m, theta, {{"Age", 40.0}}, eta);
        CHECK(p.cl == doctest::Approx(1.2 * std::exp(0.25)).epsilon(1e-14));
    }
}

TEST_CASE("scenario-4 style clearance equation") {
    ModelSpec m;
    m.name = "sc4cl";
    m.structural = {1, Route::extravascular, false};
    CovariateTerm bw{"BW", CovariateForm::power, 70.0, 0.0};
    CovariateTerm age{"Age", CovariateForm::power, 40.0, 0.0};
    CovariateTerm gender{"Gender", CovariateForm::linear, std::nullopt, 0.0};
    CovariateTerm hi{"HI", CovariateForm::linear, std::nullopt, 0.0};
    m.parameters = {ParameterEntry{"Ka", 0.35, false, 0.1, {}},
                    ParameterEntry{"V", 13.5, true, 0.1, {}},
                    ParameterEntry{"Cl", 1.2, true, 0.1, {bw, age, gender, hi}}};
    // theta: tvKa, tvV, tvCl, dCldBW, dCldAge, dCldGender, dCldHI
    const std::vector<double> theta = {0.35, 13.5, 1.2, 0.75, -0.9, 0.1, -0.2};
    const std::vector<double> eta = {0.0, 0.0};
    const std::map<std::string, double> covs = {
        {"BW", 70.0}, {"Age", 40.0}, {"Gender", 1.0}, {"HI", 1.0}};
    const auto p = resolve_params(m, theta, covs, eta);
    CHECK(p.cl == doctest::Approx(1.2 * 1.1 * 0.8).epsilon(1e-14));  // 1.056

    SUBCASE("non-positive linear factor is a prediction error") {
        auto bad = theta;
        bad[6] = -1.5;  // (1 - 1.5*HI) <= 0 for HI=1
        CHECK_THROWS_AS(resolve_params(m, bad, covs, eta), PredictionError);
    }
}

TEST_CASE("closed-form prediction basics") {
    SUBCASE("1-cpt IV bolus starts at dose/V") {
        PkParams p;
        p.v = 10.0;
        p.cl = 5.0;
        const auto doses = single_dose(100.0, Route::iv_bolus);
        StructuralSpec s{1, Route::iv_bolus, false};
        // C(t) evaluated just above 0 (the dose lands at t=0)
        CHECK(predict(s, p, doses, 1e-12) == doctest::Approx(10.0).epsilon(1e-9));
        CHECK(predict(s, p, doses, 2.0) ==
              doctest::Approx(10.0 * std::exp(-1.0)).epsilon(1e-12));
    }
    SUBCASE("extravascular starts at zero") {
        PkParams p;
        p.ka = 1.3;
        p.v = 10.0;
        p.cl = 5.0;
        StructuralSpec s{1, Route::extravascular, false};
        CHECK(predict(s, p, single_dose(100.0, Route::extravascular), 0.0) == 0.0);
    }
    SUBCASE("tlag shifts the absorption start") {
        PkParams p;
        p.ka = 1.3;
        p.v = 10.0;
        p.cl = 5.0;
        p.tlag = 0.5;
        StructuralSpec s{1, Route::extravascular, true};
        const auto doses = single_dose(100.0, Route::extravascular);
        CHECK(predict(s, p, doses, 0.49) == 0.0);
        CHECK(predict(s, p, doses, 0.51) > 0.0);
    }
}

TEST_CASE("2-cpt extravascular matches the ODE oracle at the spec points") {
    PkParams p;
    p.ka = 0.35;
    p.v = 13.5;
    p.v2 = 36.0;
    p.cl = 1.2;
    p.cl2 = 0.62;
    StructuralSpec s{2, Route::extravascular, false};
    const auto doses = single_dose(5617.0, Route::extravascular);
    const std::vector<double> times = {1.0, 4.0, 24.0};
    const auto ode = oracle::integrate(s, p, doses, times);
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double cf = predict(s, p, doses, times[i]);
        CHECK(std::fabs(cf - ode.concentration[i]) <=
              1e-6 * std::fabs(ode.concentration[i]));
    }
    CHECK(ode.max_mass_balance_error < 1e-6 * 5617.0);
}

TEST_CASE("property: all four structural specs match the ODE oracle") {
    StreamRng rng(99);
    const StructuralSpec specs[] = {
        {1, Route::iv_bolus, false},
        {1, Route::extravascular, false},
        {2, Route::iv_bolus, false},
        {2, Route::extravascular, false},
        {1, Route::extravascular, true},
        {2, Route::extravascular, true},
    };
    for (const auto& s : specs) {
        for (int draw = 0; draw < 6; ++draw) {
            PkParams p;
            p.ka = std::exp(rng.uniform(std::log(0.05), std::log(4.0)));
            p.v = std::exp(rng.uniform(std::log(2.0), std::log(50.0)));
            p.cl = std::exp(rng.uniform(std::log(0.2), std::log(15.0)));
            p.v2 = std::exp(rng.uniform(std::log(5.0), std::log(80.0)));
            p.cl2 = std::exp(rng.uniform(std::log(0.1), std::log(8.0)));
            p.tlag = s.has_tlag ? rng.uniform(0.1, 1.0) : 0.0;
            const auto doses = single_dose(1000.0, s.route);

            // 20 query times where the curve is bounded away from underflow
            std::vector<double> times;
            const double cref = 1000.0 / p.v;
            StructuralSpec probe = s;
            while (times.size() < 20) {
                std::vector<double> cand = {rng.uniform(p.tlag + 0.01, 30.0)};
                const double c = predict(probe, p, doses, cand[0]);
                if (std::fabs(c) > 1e-8 * cref) times.push_back(cand[0]);
            }
            std::sort(times.begin(), times.end());

            const auto ode = oracle::integrate(s, p, doses, times);
            for (std::size_t i = 0; i < times.size(); ++i) {
                const double cf = predict(s, p, doses, times[i]);
                const double err = std::fabs(cf - ode.concentration[i]) /
                                   std::fabs(ode.concentration[i]);
                CHECK(err < 1e-6);
                CHECK(cf >= 0.0);
            }
            CHECK(ode.max_mass_balance_error < 1e-6 * 1000.0);
        }
    }
}

TEST_CASE("near-degenerate Ka stays finite") {
    PkParams p;
    p.v = 10.0;
    p.cl = 5.0;
    p.ka = p.cl / p.v;  // exactly the elimination rate
    StructuralSpec s{1, Route::extravascular, false};
    const auto doses = single_dose(100.0, Route::extravascular);
    const double c = predict(s, p, doses, 2.0);
    CHECK(std::isfinite(c));
    // limit solution: dose*k*t*exp(-k t)/V
    const double k = 0.5;
    CHECK(c == doctest::Approx(100.0 * k * 2.0 * std::exp(-k * 2.0) / 10.0)
                   .epsilon(1e-5));
}

TEST_CASE("residual weights and variances") {
    ErrorModel add{ErrorModel::Kind::additive};
    ErrorModel prop{ErrorModel::Kind::proportional};

    CHECK(residual_weight(add, 42.0) == 1.0);
    CHECK(residual_weight(prop, 2.0) == doctest::Approx(0.25));
    CHECK(residual_weight(prop, 1.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(residual_weight(prop, 0.0), PredictionError);
    CHECK_THROWS_AS(residual_weight(prop, 1e-13), PredictionError);

    CHECK(residual_variance(add, 0.01, 123.0) == doctest::Approx(0.01));
    CHECK(residual_variance(prop, 0.01, 10.0) == doctest::Approx(1.0));
    CHECK(residual_variance(prop, 0.01, 0.0) == 0.0);
    CHECK_THROWS_AS(residual_variance(add, 0.0, 1.0), std::invalid_argument);

    // w * pred^2 = 1 for proportional
    StreamRng rng(3);
    for (int i = 0; i < 50; ++i) {
        const double pred = std::exp(rng.uniform(-20.0, 8.0));
        CHECK(residual_weight(prop, pred) * pred * pred ==
              doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("bind_model validation") {
    PopulationDataset ds;
    ds.name = "v";
    for (int i = 0; i < 2; ++i) {
        Subject s;
        s.id = "A" + std::to_string(i);
        s.covariates["Age"] = 30.0 + i;
        s.doses.push_back({0.0, 10.0, Route::extravascular});
        s.observations.push_back({1.0, 1.0, false});
        ds.subjects.push_back(s);
    }

    SUBCASE("mean reference is resolved from the dataset") {
        ModelSpec m = cl_age_model();
        m.parameters[2].covariates[0].reference.reset();
        const ModelSpec bound = bind_model(m, ds);
        CHECK(*bound.parameters[2].covariates[0].reference ==
              doctest::Approx(30.5));
    }
    SUBCASE("missing covariate rejected") {
        ModelSpec m = cl_age_model();
        m.parameters[2].covariates[0].covariate = "BW";
        CHECK_THROWS_WITH_AS(bind_model(m, ds), doctest::Contains("covariate"),
                             std::runtime_error);
    }
    SUBCASE("tlag requires extravascular route") {
        ModelSpec m = cl_age_model();
        m.structural.route = Route::iv_bolus;
        m.structural.has_tlag = true;
        CHECK_THROWS_AS(bind_model(m, ds), std::runtime_error);
    }
    SUBCASE("dose route must match the structural route") {
        ModelSpec m = cl_age_model();
        m.structural.route = Route::iv_bolus;
        m.parameters.erase(m.parameters.begin());  // drop Ka
        CHECK_THROWS_WITH_AS(bind_model(m, ds), doctest::Contains("route"),
                             std::runtime_error);
    }
    SUBCASE("missing required parameter rejected") {
        ModelSpec m = cl_age_model();
        m.parameters.pop_back();
        CHECK_THROWS_WITH_AS(bind_model(m, ds),
                             doctest::Contains("missing parameter"),
                             std::runtime_error);
    }
}
