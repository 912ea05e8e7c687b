#include <cmath>

#include "doctest.h"
#include "nlmecv/stats.hpp"

using namespace nlmecv;

TEST_CASE("chi-squared tail against independent routes") {
    // df=1: P(X > x) = erfc(sqrt(x/2)); df=2: exp(-x/2)
    for (double x : {0.1, 0.5, 1.0, 2.0, 3.841, 6.63, 15.0, 40.0}) {
        const double want1 = std::erfc(std::sqrt(x / 2.0));
        CHECK(chi2_tail(x, 1.0) == doctest::Approx(want1).epsilon(1e-10));
        CHECK(chi2_tail(x, 2.0) == doctest::Approx(std::exp(-x / 2.0)).epsilon(1e-10));
    }
    // published quantile: P(chi2_1 > 3.841) = 0.05
    CHECK(chi2_tail(3.841, 1.0) == doctest::Approx(0.0500).epsilon(2e-3));
    CHECK(chi2_tail(0.0, 1.0) == 1.0);
    // complement identity
    for (double a : {0.5, 1.0, 2.5, 7.0})
        for (double x : {0.2, 1.0, 3.0, 12.0})
            CHECK(gamma_p(a, x) + gamma_q(a, x) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sample statistics") {
    const std::vector<double> xs = {0.01, 0.01, 0.04};
    CHECK(mean(xs) == doctest::Approx(0.02));
    CHECK(sample_sd(xs) == doctest::Approx(std::sqrt(0.0003)));
    CHECK(standard_error(xs) == doctest::Approx(0.01));
    CHECK(sample_sd(std::vector<double>{1.0}) == 0.0);
}
