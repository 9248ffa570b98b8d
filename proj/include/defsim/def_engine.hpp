#pragma once

// Dissipating energy flow: cumulative terminal energies, the stored /
// path-independent / path-dependent split for the TCSC and the STATCOM,
// dc-trend slope estimation and source/sink classification.

#include "defsim/errors.hpp"
#include "defsim/numerics.hpp"
#include "defsim/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace defsim {

enum class Direction { into_device, into_network };

inline const char* to_string(Direction d) { return d == Direction::into_device ? "into_device" : "into_network"; }

/// Cumulative energy of one measurement point. Channel vectors are either empty
/// (plain terminal measurement) or the same length as `total`.
struct EnergyTrace {
    std::string name;
    std::vector<double> t;
    std::vector<double> total;
    std::vector<double> w0;       // path-independent, linear in the deviation
    std::vector<double> stored;   // path-independent, quadratic stored energy
    std::vector<double> pathdep;  // remainder; its dc trend measures dissipation
    Direction direction = Direction::into_device;

    bool has_channels() const noexcept { return !pathdep.empty(); }

    EnergyTrace reversed() const {
        EnergyTrace r = *this;
        for (auto* ch : {&r.total, &r.w0, &r.stored, &r.pathdep})
            for (double& x : *ch) x = -x;
        r.direction = direction == Direction::into_device ? Direction::into_network : Direction::into_device;
        return r;
    }

    /// Largest |total - (w0 + stored + pathdep)| over the trace.
    double decomposition_error() const {
        double worst = 0.0;
        for (std::size_t n = 0; n < total.size(); ++n)
            worst = std::max(worst, std::abs(total[n] - (w0[n] + stored[n] + pathdep[n])));
        return worst;
    }
};

inline double peak_to_peak(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
}

/// Energy entering `branch` from `end_bus`: cumulative  int Im(conj(I) dV).
inline EnergyTrace def_terminal(const Trajectory& traj, const std::string& branch, int end_bus) {
    const auto w = cum_energy_integral(traj.branch_current(branch, end_bus), traj.voltage(end_bus));
    EnergyTrace e;
    e.name = branch + "@" + std::to_string(end_bus);
    e.t = w.t;
    e.total = w.v;
    e.direction = Direction::into_device;
    return e;
}

namespace detail {

inline void require_consistent(const EnergyTrace& e, double rel_tol) {
    const double tol = rel_tol * peak_to_peak(e.total) + 1e-12;
    const double err = e.decomposition_error();
    if (err > tol)
        throw ConsistencyFault(e.name + ": decomposition mismatch " + std::to_string(err) +
                               " exceeds " + std::to_string(tol));
}

}  // namespace detail

inline constexpr double decomposition_rel_tol = 1e-3;

/// TCSC energy with U = |V_i - V_k| and baselines from the first (steady) sample:
///   w0      = -b0 (1 - kc0) U0 dU
///   stored  = -1/2 b0 (1 - kc0) dU^2
///   pathdep =  b0 int dkc U d(dU)
/// The total is the sum of the two terminal measurements.
inline EnergyTrace def_tcsc_decompose(const Trajectory& traj) {
    if (!traj.tcsc) throw LookupError("trajectory has no TCSC");
    const TcscDevice& dev = *traj.tcsc;
    const Branch& br = traj.network.branches[traj.network.branch_index(dev.branch)];
    const auto a = def_terminal(traj, dev.branch, br.from);
    const auto b = def_terminal(traj, dev.branch, br.to);

    const auto& vi = traj.bus_v[traj.network.bus_index(br.from)];
    const auto& vk = traj.bus_v[traj.network.bus_index(br.to)];
    const auto& dkc = traj.state("TCSC.dkc");
    const std::size_t n = traj.size();
    std::vector<double> u(n), du(n), dkc_u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = std::abs(vi[i] - vk[i]);
    const double u0 = u.front();
    for (std::size_t i = 0; i < n; ++i) {
        du[i] = u[i] - u0;
        dkc_u[i] = dkc[i] * u[i];
    }
    const double bb = dev.b0 * (1.0 - dev.kc0);

    EnergyTrace e;
    e.name = "TCSC";
    e.t = traj.t;
    e.total.resize(n);
    e.w0.resize(n);
    e.stored.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        e.total[i] = a.total[i] + b.total[i];
        e.w0[i] = -bb * u0 * du[i];
        e.stored[i] = -0.5 * bb * du[i] * du[i];
    }
    e.pathdep = cum_stieltjes(dkc_u, du);
    for (double& x : e.pathdep) x *= dev.b0;
    detail::require_consistent(e, decomposition_rel_tol);
    return e;
}

/// STATCOM energy in the controller dq frame, deviations from the first sample:
///   total   = int Im(conj(Id + jIq) d(Vd + jVq))
///   w0      = -Iq0 dVd  (+ Id0 dVq, zero for a lossless device)
///   pathdep = int dId d(dVq) - int dIq d(dVd)
inline EnergyTrace def_statcom_decompose(const Trajectory& traj) {
    if (!traj.statcom) throw LookupError("trajectory has no STATCOM");
    const std::string& nm = traj.statcom->name;
    const auto& iq = traj.state(nm + ".iq");
    const auto& id = traj.state(nm + ".id");
    const auto& vd = traj.state(nm + ".vd");
    const auto& vq = traj.state(nm + ".vq");
    const std::size_t n = traj.size();

    std::vector<Phasor> i_dq(n), v_dq(n);
    for (std::size_t k = 0; k < n; ++k) {
        i_dq[k] = {id[k], iq[k]};
        v_dq[k] = {vd[k], vq[k]};
    }
    const auto total = cum_energy_integral({traj.t, i_dq}, {traj.t, v_dq});

    std::vector<double> did(n), diq(n), dvd(n), dvq(n);
    for (std::size_t k = 0; k < n; ++k) {
        did[k] = id[k] - id[0];
        diq[k] = iq[k] - iq[0];
        dvd[k] = vd[k] - vd[0];
        dvq[k] = vq[k] - vq[0];
    }
    const auto a = cum_stieltjes(did, dvq);
    const auto b = cum_stieltjes(diq, dvd);

    EnergyTrace e;
    e.name = nm;
    e.t = traj.t;
    e.total = total.v;
    e.w0.resize(n);
    e.stored.assign(n, 0.0);
    e.pathdep.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        e.w0[k] = -iq[0] * dvd[k] + id[0] * dvq[k];
        e.pathdep[k] = a[k] - b[k];
    }
    detail::require_consistent(e, decomposition_rel_tol);
    return e;
}

/// Inertia-weighted mean rotor angle; zero when the trajectory has no machines.
inline std::vector<double> coi_angle(const Trajectory& traj) {
    std::vector<double> coi(traj.size(), 0.0);
    double h_sum = 0.0;
    for (const auto& g : traj.network.generators) {
        if (!traj.has_state(g.name + ".delta")) continue;
        const auto& delta = traj.state(g.name + ".delta");
        for (std::size_t k = 0; k < coi.size(); ++k) coi[k] += g.h * delta[k];
        h_sum += g.h;
    }
    if (h_sum > 0.0)
        for (double& x : coi) x /= h_sum;
    return coi;
}

/// Energy a device delivers into the network through all of its terminals:
/// sum over terminals of  int Im(conj(I_inj) dV_bus).
///
/// Phasors are referred to the centre-of-inertia frame first. In the synchronous
/// frame a common frequency offset adds int P d(theta_coi) to every shunt device,
/// which swamps the oscillation component. Series elements and the sum over all
/// devices of a lossless network are unchanged by the rotation.
inline EnergyTrace def_injection(const Trajectory& traj, const std::string& device) {
    const DeviceRecord& d = traj.device(device);
    EnergyTrace e;
    e.name = device;
    e.t = traj.t;
    e.total.assign(traj.size(), 0.0);
    e.direction = Direction::into_network;
    const auto coi = coi_angle(traj);
    for (const auto& term : d.terminals) {
        Series<Phasor> v = traj.voltage(term.bus);
        Series<Phasor> i{traj.t, term.injection};
        for (std::size_t k = 0; k < v.v.size(); ++k) {
            const Phasor r = std::polar(1.0, -coi[k]);
            v.v[k] *= r;
            i.v[k] *= r;
        }
        const auto w = cum_energy_integral(i, v);
        for (std::size_t k = 0; k < w.v.size(); ++k) e.total[k] += w.v[k];
    }
    return e;
}

/// As above, additionally checking that the device is attached at `bus`.
inline EnergyTrace def_injection(const Trajectory& traj, int bus, const std::string& device) {
    const DeviceRecord& d = traj.device(device);
    const bool attached = std::any_of(d.terminals.begin(), d.terminals.end(),
                                      [bus](const DeviceTerminal& t) { return t.bus == bus; });
    if (!attached) throw LookupError("device '" + device + "' is not attached at bus " + std::to_string(bus));
    return def_injection(traj, device);
}

/// Sum of def_injection over every device in the trajectory.
inline EnergyTrace def_injection_total(const Trajectory& traj) {
    EnergyTrace e;
    e.name = "all_devices";
    e.t = traj.t;
    e.total.assign(traj.size(), 0.0);
    e.direction = Direction::into_network;
    for (const auto& d : traj.devices) {
        const auto w = def_injection(traj, d.name);
        for (std::size_t k = 0; k < w.total.size(); ++k) e.total[k] += w.total[k];
    }
    return e;
}

// ---------------------------------------------------------------------------
// Slope of the dc trend
// ---------------------------------------------------------------------------

struct Window {
    double t_start = 0.0;
    double t_end = 0.0;
};

enum class Label { source, sink, neutral };

inline const char* to_string(Label l) {
    switch (l) {
        case Label::source: return "source";
        case Label::sink: return "sink";
        case Label::neutral: return "neutral";
    }
    return "?";
}

struct SlopeVerdict {
    double slope = 0.0;         // energy / s
    double ci_halfwidth = 0.0;  // 95 % half-width of the slope estimate
    double threshold = 0.0;     // neutrality band
    double ripple = 0.0;        // half peak-to-peak of the detrended trace
    double period = 0.0;
    int cycles = 0;
    Label label = Label::neutral;
};

inline constexpr double neutral_ripple_fraction = 1e-2;  // per second
inline constexpr double neutral_floor = 1e-9;

namespace detail {

inline std::pair<std::size_t, std::size_t> window_indices(const std::vector<double>& t, Window w) {
    if (t.size() < 2) throw AnalysisError("series too short");
    const double dt = t[1] - t[0];
    const auto clampi = [&](double x) {
        const double idx = std::round((x - t.front()) / dt);
        return static_cast<std::size_t>(std::clamp(idx, 0.0, static_cast<double>(t.size() - 1)));
    };
    const std::size_t a = clampi(w.t_start), b = clampi(w.t_end);
    if (b <= a + 2) throw AnalysisError("analysis window is empty");
    return {a, b};
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double max_abs_residual = 0.0;
    double residual_p2p = 0.0;
};

inline LinearFit fit_line(const std::vector<double>& t, const std::vector<double>& y, std::size_t a, std::size_t b) {
    const double m = static_cast<double>(b - a + 1);
    double st = 0.0, sy = 0.0;
    for (std::size_t i = a; i <= b; ++i) {
        st += t[i];
        sy += y[i];
    }
    const double tm = st / m, ym = sy / m;
    double stt = 0.0, sty = 0.0;
    for (std::size_t i = a; i <= b; ++i) {
        stt += (t[i] - tm) * (t[i] - tm);
        sty += (t[i] - tm) * (y[i] - ym);
    }
    LinearFit f;
    f.slope = sty / stt;
    f.intercept = ym - f.slope * tm;
    double ss = 0.0, lo = 0.0, hi = 0.0;
    for (std::size_t i = a; i <= b; ++i) {
        const double r = y[i] - (f.intercept + f.slope * t[i]);
        ss += r * r;
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    f.slope_se = m > 2.0 ? std::sqrt(ss / (m - 2.0) / stt) : 0.0;
    f.max_abs_residual = std::max(-lo, hi);
    f.residual_p2p = hi - lo;
    return f;
}

}  // namespace detail

/// Mean oscillation period of `signal` inside `window`, from the spacing of the
/// zero crossings of the linearly detrended signal.
inline double dominant_period(const std::vector<double>& t, const std::vector<double>& signal, Window window) {
    if (t.size() != signal.size()) throw InputError("dominant_period: lengths differ");
    const auto [a, b] = detail::window_indices(t, window);
    const auto fit = detail::fit_line(t, signal, a, b);
    const double scale = fit.residual_p2p;
    if (!(scale > 0.0)) throw AnalysisError("dominant_period: signal has no oscillation");
    // Hysteresis against noise-level crossings.
    const double band = 1e-6 * scale;
    std::vector<double> crossings;
    int sign = 0;
    double prev_t = 0.0, prev_r = 0.0;
    for (std::size_t i = a; i <= b; ++i) {
        const double r = signal[i] - (fit.intercept + fit.slope * t[i]);
        const int s = r > band ? 1 : (r < -band ? -1 : 0);
        if (s != 0) {
            if (sign != 0 && s != sign) crossings.push_back(prev_t + (t[i] - prev_t) * prev_r / (prev_r - r));
            sign = s;
            prev_t = t[i];
            prev_r = r;
        }
    }
    if (crossings.size() < 3) throw AnalysisError("dominant_period: fewer than three zero crossings");
    return 2.0 * (crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
}

/// Least-squares slope of `trace` over the largest integer number of periods that
/// fits in `window` (aligned at its start). The neutrality band is
/// max(1e-2 * ripple per second, 1e-9). For an into_device trace a slope above
/// the band is a sink and below it a source; into_network flips the reading.
inline SlopeVerdict slope_estimate(const std::vector<double>& t, const std::vector<double>& trace, Window window,
                                   double period, Direction direction = Direction::into_device) {
    if (t.size() != trace.size()) throw InputError("slope_estimate: lengths differ");
    if (!(period > 0.0)) throw AnalysisError("slope_estimate: period must be positive");
    const double span = window.t_end - window.t_start;
    const int cycles = static_cast<int>(std::floor(span / period + 1e-9));
    if (cycles < 3)
        throw AnalysisError("slope_estimate: window holds " + std::to_string(span / period) +
                            " cycles; at least 3 are required");
    const auto [a, b] = detail::window_indices(t, {window.t_start, window.t_start + cycles * period});
    const auto fit = detail::fit_line(t, trace, a, b);

    SlopeVerdict v;
    v.slope = fit.slope;
    v.ci_halfwidth = 1.96 * fit.slope_se;
    v.ripple = 0.5 * fit.residual_p2p;
    v.threshold = std::max(neutral_ripple_fraction * v.ripple, neutral_floor);
    v.period = period;
    v.cycles = cycles;
    const double s = direction == Direction::into_device ? v.slope : -v.slope;
    v.label = s > v.threshold ? Label::sink : (s < -v.threshold ? Label::source : Label::neutral);
    return v;
}

inline SlopeVerdict slope_estimate(const Series<double>& trace, Window window, double period,
                                   Direction direction = Direction::into_device) {
    return slope_estimate(trace.t, trace.v, window, period, direction);
}

/// Increments of `trace` over consecutive whole periods starting at window.t_start
/// (linear interpolation between samples).
inline std::vector<double> cycle_increments(const std::vector<double>& t, const std::vector<double>& trace,
                                            Window window, double period) {
    auto at = [&](double x) {
        const double dt = t[1] - t[0];
        const double pos = (x - t.front()) / dt;
        const auto i = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(t.size() - 2)));
        const double f = pos - static_cast<double>(i);
        return trace[i] + f * (trace[i + 1] - trace[i]);
    };
    std::vector<double> inc;
    for (double s = window.t_start; s + period <= window.t_end + 1e-12; s += period)
        inc.push_back(at(s + period) - at(s));
    return inc;
}

}  // namespace defsim
