#include "support/ode_oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace oracle {

namespace {

using State = std::array<double, 4>;  // Aa, A1, A2, eliminated

struct Rhs {
    const nlmecv::StructuralSpec& s;
    const nlmecv::PkParams& p;

    State operator()(const State& y) const {
        const double c = y[1] / p.v;
        const double c2 = s.n_compartments == 2 ? y[2] / p.v2 : 0.0;
        State dy{};
        if (s.route == nlmecv::Route::extravascular) {
            dy[0] = -p.ka * y[0];
            dy[1] = p.ka * y[0];
        }
        dy[1] += -p.cl * c;
        if (s.n_compartments == 2) {
            dy[1] += -p.cl2 * (c - c2);
            dy[2] = p.cl2 * (c - c2);
        }
        dy[3] = p.cl * c;
        return dy;
    }
};

// Dormand-Prince 5(4) coefficients.
constexpr double A21 = 1.0 / 5;
constexpr double A31 = 3.0 / 40, A32 = 9.0 / 40;
constexpr double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9;
constexpr double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187,
                 A53 = 64448.0 / 6561, A54 = -212.0 / 729;
constexpr double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247,
                 A64 = 49.0 / 176, A65 = -5103.0 / 18656;
constexpr double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192,
                 B5 = -2187.0 / 6784, B6 = 11.0 / 84;
constexpr double E1 = B1 - 5179.0 / 57600, E3 = B3 - 7571.0 / 16695,
                 E4 = B4 - 393.0 / 640, E5 = B5 + 92097.0 / 339200,
                 E6 = B6 - 187.0 / 2100, E7 = -1.0 / 40;

struct Stepper {
    Rhs rhs;
    double rtol, atol;

    // One accepted adaptive step from (t, y); h is updated in place.
    void step(double& t, State& y, double& h, double t_end) {
        for (int attempt = 0; attempt < 200; ++attempt) {
            if (t + h > t_end) h = t_end - t;
            const State k1 = rhs(y);
            State tmp;
            for (int i = 0; i < 4; ++i) tmp[i] = y[i] + h * A21 * k1[i];
            const State k2 = rhs(tmp);
            for (int i = 0; i < 4; ++i)
                tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            const State k3 = rhs(tmp);
            for (int i = 0; i < 4; ++i)
                tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            const State k4 = rhs(tmp);
            for (int i = 0; i < 4; ++i)
                tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] +
                                     A54 * k4[i]);
            const State k5 = rhs(tmp);
            for (int i = 0; i < 4; ++i)
                tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] +
                                     A64 * k4[i] + A65 * k5[i]);
            const State k6 = rhs(tmp);
            State y5;
            for (int i = 0; i < 4; ++i)
                y5[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] +
                                    B5 * k5[i] + B6 * k6[i]);
            const State k7 = rhs(y5);

            double err = 0.0;
            for (int i = 0; i < 4; ++i) {
                const double e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] +
                                      E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                const double sc =
                    atol + rtol * std::max(std::fabs(y[i]), std::fabs(y5[i]));
                err += (e / sc) * (e / sc);
            }
            err = std::sqrt(err / 4.0);

            if (err <= 1.0) {
                t += h;
                y = y5;
                const double grow =
                    err == 0.0 ? 5.0 : 0.9 * std::pow(err, -0.2);
                h *= std::clamp(grow, 0.2, 5.0);
                return;
            }
            h *= std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.9);
            if (h < 1e-14) throw std::runtime_error("ode oracle: step underflow");
        }
        throw std::runtime_error("ode oracle: too many rejected steps");
    }

    void advance_to(double& t, State& y, double t_target) {
        if (t_target <= t) return;
        double h = std::min(0.1, t_target - t);
        while (t < t_target - 1e-15) step(t, y, h, t_target);
        t = t_target;
    }
};

}  // namespace

OdeResult integrate(const nlmecv::StructuralSpec& s, const nlmecv::PkParams& p,
                    std::span<const nlmecv::DoseEvent> doses,
                    std::span<const double> times, double rtol, double atol) {
    // events: (time, amount, into_absorption)
    struct Event { double time; double amount; bool absorption; };
    std::vector<Event> events;
    double total_dose = 0.0;
    for (const auto& d : doses) {
        const bool abso = d.route == nlmecv::Route::extravascular;
        double t0 = d.time;
        if (abso && s.has_tlag) t0 += p.tlag;
        events.push_back({t0, d.amount, abso});
        total_dose += d.amount;
    }
    std::sort(events.begin(), events.end(),
              [](const Event& a, const Event& b) { return a.time < b.time; });

    Stepper stepper{Rhs{s, p}, rtol, atol};
    State y{0.0, 0.0, 0.0, 0.0};
    double t = 0.0;
    std::size_t next_event = 0;
    double dosed_so_far = 0.0;

    OdeResult out;
    for (double tq : times) {
        while (next_event < events.size() && events[next_event].time <= tq) {
            stepper.advance_to(t, y, events[next_event].time);
            y[events[next_event].absorption ? 0 : 1] += events[next_event].amount;
            dosed_so_far += events[next_event].amount;
            ++next_event;
        }
        stepper.advance_to(t, y, tq);
        out.concentration.push_back(y[1] / p.v);
        const double balance = y[0] + y[1] + y[2] + y[3] - dosed_so_far;
        out.max_mass_balance_error =
            std::max(out.max_mass_balance_error, std::fabs(balance));
    }
    (void)total_dose;
    return out;
}

}  // namespace oracle
