#pragma once

// Analytic toy models plugged into the estimation interface. The Laplace
// machinery is exact on the linear ones, which is what the oracle tests
// exploit.

#include <cmath>

#include "nlmecv/model.hpp"

namespace toys {

inline nlmecv::Subject subject_with(std::vector<double> y,
                                    std::vector<double> times = {}) {
    nlmecv::Subject s;
    s.id = "T1";
    for (std::size_t j = 0; j < y.size(); ++j) {
        const double t = times.empty() ? static_cast<double>(j) : times[j];
        s.observations.push_back({t, y[j], false});
    }
    return s;
}

// y_ij = theta + eta_i + eps_ij
class InterceptModel final : public nlmecv::Model {
public:
    InterceptModel() { error_.kind = nlmecv::ErrorModel::Kind::additive; }
    std::size_t theta_dim() const override { return 1; }
    std::size_t eta_dim() const override { return 1; }
    const nlmecv::ErrorModel& error() const override { return error_; }
    std::string theta_label(std::size_t) const override { return "theta"; }
    bool theta_log_scale(std::size_t) const override { return false; }
    std::string eta_label(std::size_t) const override { return "B"; }
    nlmecv::PopulationParams initial_params() const override {
        return {{0.0}, {1.0}, 1.0};
    }
    void predict_subject(const nlmecv::Subject& subj,
                         std::span<const double> theta,
                         std::span<const double> eta,
                         std::vector<double>& out) const override {
        out.assign(subj.n_obs(), theta[0] + eta[0]);
    }

private:
    nlmecv::ErrorModel error_;
};

// y_j = (theta1 + eta1) + (theta2 + eta2) * t_j
class SlopeModel final : public nlmecv::Model {
public:
    SlopeModel() { error_.kind = nlmecv::ErrorModel::Kind::additive; }
    std::size_t theta_dim() const override { return 2; }
    std::size_t eta_dim() const override { return 2; }
    const nlmecv::ErrorModel& error() const override { return error_; }
    std::string theta_label(std::size_t k) const override {
        return k == 0 ? "intercept" : "slope";
    }
    bool theta_log_scale(std::size_t) const override { return false; }
    std::string eta_label(std::size_t d) const override {
        return d == 0 ? "Int" : "Slp";
    }
    nlmecv::PopulationParams initial_params() const override {
        return {{0.0, 0.0}, {1.0, 1.0}, 1.0};
    }
    void predict_subject(const nlmecv::Subject& subj,
                         std::span<const double> theta,
                         std::span<const double> eta,
                         std::vector<double>& out) const override {
        out.clear();
        for (const auto& obs : subj.observations) {
            if (obs.missing) continue;
            out.push_back(theta[0] + eta[0] + (theta[1] + eta[1]) * obs.time);
        }
    }

private:
    nlmecv::ErrorModel error_;
};

// y_j = tv * exp(eta) + eps; nonlinear in eta, 1-d.
class TvExpModel final : public nlmecv::Model {
public:
    TvExpModel() { error_.kind = nlmecv::ErrorModel::Kind::additive; }
    std::size_t theta_dim() const override { return 1; }
    std::size_t eta_dim() const override { return 1; }
    const nlmecv::ErrorModel& error() const override { return error_; }
    std::string theta_label(std::size_t) const override { return "tv"; }
    bool theta_log_scale(std::size_t) const override { return true; }
    std::string eta_label(std::size_t) const override { return "P"; }
    nlmecv::PopulationParams initial_params() const override {
        return {{1.0}, {0.1}, 0.1};
    }
    void predict_subject(const nlmecv::Subject& subj,
                         std::span<const double> theta,
                         std::span<const double> eta,
                         std::vector<double>& out) const override {
        out.assign(subj.n_obs(), theta[0] * std::exp(eta[0]));
    }

private:
    nlmecv::ErrorModel error_;
};

}  // namespace toys
