#pragma once

// Independent numerical oracle for the compartment models: integrates the
// mass-balance ODE systems with an adaptive Dormand-Prince 5(4) scheme.
// Shares no code with the closed-form predictions it checks.

#include <span>
#include <vector>

#include "nlmecv/pk_model.hpp"

namespace oracle {

struct OdeResult {
    std::vector<double> concentration;      // at each query time
    double max_mass_balance_error = 0.0;    // |Aa+A1+A2+eliminated - dosed|
};

// Query times must be sorted ascending. Tolerances are per-step local
// error controls.
OdeResult integrate(const nlmecv::StructuralSpec& s, const nlmecv::PkParams& p,
                    std::span<const nlmecv::DoseEvent> doses,
                    std::span<const double> times, double rtol = 1e-10,
                    double atol = 1e-12);

}  // namespace oracle
