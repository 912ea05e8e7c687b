#include "nlmecv/model.hpp"

namespace nlmecv {

int Model::eta_index(const std::string& label) const {
    for (std::size_t d = 0; d < eta_dim(); ++d)
        if (eta_label(d) == label) return static_cast<int>(d);
    return -1;
}

CompartmentModel::CompartmentModel(ModelSpec spec)
    : spec_(std::move(spec)), layout_(theta_layout(spec_)) {}

PopulationParams CompartmentModel::initial_params() const {
    PopulationParams pp;
    pp.theta = layout_.inits;
    pp.omega_diag = layout_.omega_inits;
    pp.sigma2 = spec_.sigma2_init;
    return pp;
}

void CompartmentModel::predict_subject(const Subject& subj,
                                       std::span<const double> theta,
                                       std::span<const double> eta,
                                       std::vector<double>& out) const {
    const PkParams p = resolve_params(spec_, theta, subj.covariates, eta);
    out.clear();
    for (const auto& obs : subj.observations) {
        if (obs.missing) continue;
        out.push_back(predict(spec_.structural, p, subj.doses, obs.time));
    }
}

std::shared_ptr<CompartmentModel> make_compartment_model(
    const ModelSpec& spec, const PopulationDataset& ds) {
    return std::make_shared<CompartmentModel>(bind_model(spec, ds));
}

}  // namespace nlmecv
