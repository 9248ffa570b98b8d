#pragma once

// Dynamic device models: classical generators, the TCSC with its compensation
// strategies, the STATCOM with its reactive-power controls, and the controller
// blocks (first-order lag, washout + lead-lag, PI + droop).

#include "defsim/errors.hpp"
#include "defsim/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace defsim {

/// Something noteworthy that happened during a run (limit clamp, device trip).
struct Event {
    double t = 0.0;
    std::string what;
};

using EventLog = std::vector<Event>;

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Classical machine: constant EMF behind transient reactance.
struct Generator {
    std::string name;
    int bus = 0;
    double h = 0.0;
    double d = 0.0;
    double xd_prime = 0.0;
    double e_mag = 0.0;
    double delta = 0.0;
    double omega_dev = 0.0;
    double pm = 0.0;

    Phasor emf() const { return std::polar(e_mag, delta); }

    /// Current injected into the network at the terminal bus.
    Phasor terminal_current(Phasor v_terminal) const {
        return (emf() - v_terminal) / Phasor(0.0, xd_prime);
    }

    double electrical_power(Phasor v_terminal) const {
        return std::real(emf() * std::conj(terminal_current(v_terminal)));
    }
};

struct SwingDerivatives {
    double d_delta = 0.0;
    double d_omega = 0.0;
};

/// Swing equations: d(delta)/dt = omega_s * omega_dev,
/// d(omega_dev)/dt = (Pm - Pe - D omega_dev) / (2H).
inline SwingDerivatives generator_derivs(const Generator& gen, Phasor v_terminal, double omega_s,
                                         double pm_override = -1.0) {
    const double pm = pm_override >= 0.0 ? pm_override : gen.pm;
    const double pe = gen.electrical_power(v_terminal);
    return {omega_s * gen.omega_dev, (pm - pe - gen.d * gen.omega_dev) / (2.0 * gen.h)};
}

// ---------------------------------------------------------------------------
// TCSC
// ---------------------------------------------------------------------------

enum class TcscStrategy { fixed, algebraic, lag, damping_controller };

inline const char* to_string(TcscStrategy s) {
    switch (s) {
        case TcscStrategy::fixed: return "fixed";
        case TcscStrategy::algebraic: return "algebraic";
        case TcscStrategy::lag: return "lag";
        case TcscStrategy::damping_controller: return "damping_controller";
    }
    return "?";
}

/// First-order lag  dk' = -dk/Tc + (Kp/Tc) dU.
struct LagController {
    double tc = 0.1;
    double kp = 0.0;
    double state = 0.0;

    double derivative(double du) const { return (-state + kp * du) / tc; }
};

/// Advances the lag by one step with input held constant over the step (exact
/// discretization) and returns the new output.
inline double lag_step(LagController& ctrl, double du, double dt) {
    if (!(dt > 0.0)) throw InputError("lag_step: dt must be positive");
    const double a = std::exp(-dt / ctrl.tc);
    ctrl.state = a * ctrl.state + (1.0 - a) * ctrl.kp * du;
    return ctrl.state;
}

/// Gain, washout sTw/(1+sTw) and lead-lag (1+sTd1)/(1+sTd2) in cascade.
///   washout:  w = u - x_w,          x_w' = (u - x_w)/Tw
///   lead-lag: z = x_ll + (Td1/Td2)(w - x_ll),  x_ll' = (w - x_ll)/Td2
///   output:   dk = Kp z
struct DampingController {
    double kp = 0.0;
    double tw = 10.0;
    double td1 = 0.4867;
    double td2 = 0.0543;
    double x_w = 0.0;
    double x_ll = 0.0;

    double washout(double u) const { return u - x_w; }

    double output(double u) const {
        const double w = washout(u);
        return kp * (x_ll + td1 / td2 * (w - x_ll));
    }

    std::pair<double, double> derivatives(double u) const {
        const double w = washout(u);
        return {(u - x_w) / tw, (w - x_ll) / td2};
    }
};

/// Returns the output for input dP (direct feedthrough), then advances both
/// states over dt with the block inputs held.
inline double damping_controller_step(DampingController& ctrl, double dp, double dt) {
    if (!(dt > 0.0)) throw InputError("damping_controller_step: dt must be positive");
    const double out = ctrl.output(dp);
    const double w = ctrl.washout(dp);
    ctrl.x_w += (1.0 - std::exp(-dt / ctrl.tw)) * (dp - ctrl.x_w);
    ctrl.x_ll += (1.0 - std::exp(-dt / ctrl.td2)) * (w - ctrl.x_ll);
    return out;
}

struct TcscDevice {
    std::string branch;
    double b0 = 0.0;
    double kc0 = 0.0;
    double dkc = 0.0;
    double dkc_limit = 0.2;  // symmetric band around kc0
    TcscStrategy strategy = TcscStrategy::fixed;

    double kc() const noexcept { return kc0 + dkc; }
    double kc_min() const noexcept { return kc0 - dkc_limit; }
    double kc_max() const noexcept { return std::min(kc0 + dkc_limit, 1.0 - 1e-6); }

    /// Clamps a requested perturbation into the limit band.
    std::pair<double, bool> clamp(double requested) const {
        const double lo = kc_min() - kc0;
        const double hi = kc_max() - kc0;
        const double c = std::clamp(requested, lo, hi);
        return {c, c != requested};
    }
};

/// y = j (1 - kc) b0. An out-of-band dkc is clamped and reported through `events`.
inline Phasor tcsc_admittance(const TcscDevice& dev, EventLog* events = nullptr, double t = 0.0) {
    const auto [dkc, clamped] = dev.clamp(dev.dkc);
    if (clamped && events)
        events->push_back({t, "tcsc on '" + dev.branch + "' clamped dkc=" + std::to_string(dev.dkc)});
    return {0.0, (1.0 - dev.kc0 - dkc) * dev.b0};
}

// ---------------------------------------------------------------------------
// STATCOM
// ---------------------------------------------------------------------------

enum class StatcomControl { constant_current, pi_droop };
enum class PllMode { instantaneous, filtered };

inline const char* to_string(StatcomControl c) {
    return c == StatcomControl::constant_current ? "constant_current" : "pi_droop";
}

inline const char* to_string(PllMode m) { return m == PllMode::instantaneous ? "instantaneous" : "filtered"; }

/// Rotates a network-frame phasor into a dq frame whose d axis sits at angle theta.
inline std::pair<double, double> dq_transform(Phasor v, double theta) {
    const Phasor r = v * std::polar(1.0, -theta);
    return {r.real(), r.imag()};
}

/// PI + droop reactive power control acting on deviations:
///   e  = (Qref - Q) + Kdroop (Vref - |V|),   Q = Id Vq - Iq Vd  (absorbed by the device)
///   Iq = Iq0 + Kp_q e + integ,               integ' = Ki_q e
/// integ is the integral term's departure from its steady value, so it starts at 0.
struct PiDroopController {
    double kp_q = 0.0;
    double ki_q = 0.0;
    double kdroop = 0.0;
    double qref = 0.0;
    double vref = 1.0;
    double integ = 0.0;

    double kconst() const noexcept { return qref + kdroop * vref; }

    double error(double q, double v_mag) const { return kconst() - q - kdroop * v_mag; }
};

/// Lossless shunt converter; the current is measured from the bus into the device
/// and lies on the q axis of the controller frame (Id = 0). Iq > 0 is capacitive.
struct StatcomDevice {
    std::string name = "STATCOM";
    int bus = 0;
    double iq = 0.0;
    double iq0 = 0.0;
    StatcomControl control = StatcomControl::constant_current;
    PllMode pll = PllMode::instantaneous;
    double t_pll = 0.02;
    double pll_theta = 0.0;
    bool tripped = false;

    static constexpr double trip_voltage = 0.2;

    /// Device current in the network frame for a given q-axis current and frame angle.
    static Phasor current(double iq, double theta) { return Phasor(0.0, iq) * std::polar(1.0, theta); }
};

/// Frame angle the controller uses for bus voltage v.
inline double statcom_frame_angle(const StatcomDevice& dev, Phasor v) {
    return dev.pll == PllMode::instantaneous ? std::arg(v) : dev.pll_theta;
}

/// Quadrature current commanded for bus voltage v, with the algebraic loop through
/// Q = -Iq Vd solved in closed form:
///   Iq (1 - Kp_q Vd) = Iq0 + Kp_q (Kconst - Kdroop |V|) + integ.
inline double statcom_current_command(const StatcomDevice& dev, const PiDroopController& ctrl, Phasor v) {
    if (dev.tripped) return 0.0;
    if (dev.control == StatcomControl::constant_current) return dev.iq0;
    const auto [vd, vq] = dq_transform(v, statcom_frame_angle(dev, v));
    (void)vq;
    const double denom = 1.0 - ctrl.kp_q * vd;
    if (std::abs(denom) < 1e-9) throw InputError("statcom: PI loop gain singular (Kp_q * Vd = 1)");
    return (dev.iq0 + ctrl.kp_q * (ctrl.kconst() - ctrl.kdroop * std::abs(v)) + ctrl.integ) / denom;
}

/// One control update: trips below 0.2 pu, otherwise sets Iq from the PI relation
/// at voltage v and advances the integrator over dt.
inline double statcom_control_step(StatcomDevice& dev, PiDroopController& ctrl, Phasor v, double dt,
                                   EventLog* events = nullptr, double t = 0.0) {
    if (!(dt > 0.0)) throw InputError("statcom_control_step: dt must be positive");
    if (!dev.tripped && std::abs(v) < StatcomDevice::trip_voltage) {
        dev.tripped = true;
        if (events) events->push_back({t, dev.name + " tripped on low voltage"});
    }
    if (dev.tripped) {
        dev.iq = 0.0;
        return 0.0;
    }
    dev.iq = statcom_current_command(dev, ctrl, v);
    if (dev.control == StatcomControl::pi_droop) {
        const auto [vd, vq] = dq_transform(v, statcom_frame_angle(dev, v));
        const double q = -dev.iq * vd;  // Id = 0
        (void)vq;
        ctrl.integ += ctrl.ki_q * ctrl.error(q, std::abs(v)) * dt;
    }
    return dev.iq;
}

}  // namespace defsim
