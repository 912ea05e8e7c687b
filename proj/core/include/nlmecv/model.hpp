#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nlmecv/dataset.hpp"
#include "nlmecv/pk_model.hpp"

namespace nlmecv {

// Population parameters shared by every subject: fixed effects theta,
// diagonal random-effect variances, residual variance.
struct PopulationParams {
    std::vector<double> theta;
    std::vector<double> omega_diag;
    double sigma2 = 0.0;

    std::size_t n_estimated() const {
        return theta.size() + omega_diag.size() + 1;
    }
};

// What the estimation layer needs from a model: per-observation
// predictions plus the parameter layout. CompartmentModel adapts a
// ModelSpec; tests plug in analytic toys through the same interface.
class Model {
public:
    virtual ~Model() = default;

    virtual std::size_t theta_dim() const = 0;
    virtual std::size_t eta_dim() const = 0;
    virtual const ErrorModel& error() const = 0;

    virtual std::string theta_label(std::size_t k) const = 0;
    // True when the k-th fixed effect is optimized on the log scale.
    virtual bool theta_log_scale(std::size_t k) const = 0;
    virtual std::string eta_label(std::size_t d) const = 0;

    virtual PopulationParams initial_params() const = 0;

    // Predictions for each non-missing observation of subj, in time order.
    virtual void predict_subject(const Subject& subj,
                                 std::span<const double> theta,
                                 std::span<const double> eta,
                                 std::vector<double>& out) const = 0;

    // Index of the eta dimension attached to a named parameter, or -1.
    int eta_index(const std::string& label) const;
};

class CompartmentModel final : public Model {
public:
    // spec must already be bound (bind_model) against the dataset it will
    // be used with.
    explicit CompartmentModel(ModelSpec spec);

    std::size_t theta_dim() const override { return layout_.labels.size(); }
    std::size_t eta_dim() const override { return layout_.eta_labels.size(); }
    const ErrorModel& error() const override { return spec_.error; }
    std::string theta_label(std::size_t k) const override { return layout_.labels[k]; }
    bool theta_log_scale(std::size_t k) const override { return layout_.log_scale[k]; }
    std::string eta_label(std::size_t d) const override { return layout_.eta_labels[d]; }
    PopulationParams initial_params() const override;
    void predict_subject(const Subject& subj, std::span<const double> theta,
                         std::span<const double> eta,
                         std::vector<double>& out) const override;

    const ModelSpec& spec() const { return spec_; }

private:
    ModelSpec spec_;
    ThetaLayout layout_;
};

// Convenience: bind and wrap in one step.
std::shared_ptr<CompartmentModel> make_compartment_model(
    const ModelSpec& spec, const PopulationDataset& ds);

}  // namespace nlmecv
