#pragma once

#include <string>

#include "nlmecv/pk_model.hpp"

namespace nlmecv {

// Declarative model configuration, one-to-one with ModelSpec. Parameters
// are an ordered array; a power term's "reference" may be a number or the
// string "mean" (resolved against the dataset by bind_model).
//
// {
//   "name": "theo_tlag_wt",
//   "structural": {"compartments": 1, "route": "extravascular", "tlag": true},
//   "error": {"kind": "additive"},
//   "sigma2_init": 0.5,
//   "parameters": [
//     {"name": "Ka", "tv_init": 2.0, "random_effect": true, "omega_init": 1.0,
//      "covariates": [{"covariate": "wt", "form": "power",
//                      "reference": "mean", "coefficient_init": 0.0}]},
//     {"name": "V", "tv_init": 1.0, "random_effect": true, "omega_init": 1.0}
//   ]
// }
ModelSpec parse_model_spec(const std::string& json_text);
ModelSpec load_model_spec(const std::string& path);

std::string model_spec_to_json(const ModelSpec& spec);
void save_model_spec(const ModelSpec& spec, const std::string& path);

}  // namespace nlmecv
