#pragma once

// Fixed-step electromechanical co-simulation. Differential states (rotor angles
// and speeds, controller states) advance with RK4; the network is re-solved at
// every stage, including the algebraic loops through the TCSC feedthrough and
// the STATCOM current command.

#include "defsim/devices.hpp"
#include "defsim/errors.hpp"
#include "defsim/network.hpp"
#include "defsim/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace defsim {

enum class DisturbanceKind { pm_pulse, load_step, qref_pulse };

inline const char* to_string(DisturbanceKind k) {
    switch (k) {
        case DisturbanceKind::pm_pulse: return "pm_pulse";
        case DisturbanceKind::load_step: return "load_step";
        case DisturbanceKind::qref_pulse: return "qref_pulse";
    }
    return "?";
}

/// pm_pulse:   mechanical power of generator `target` scaled by (1 + magnitude).
/// load_step:  admittance of load `target` scaled by (1 + magnitude).
/// qref_pulse: STATCOM reactive reference shifted by `magnitude` pu.
/// Active on [t_start, t_start + duration); a zero duration lasts to the end of the run.
struct Disturbance {
    DisturbanceKind kind = DisturbanceKind::pm_pulse;
    std::string target;
    double magnitude = 0.0;
    double t_start = 1.0;
    double duration = 0.1;

    bool operator==(const Disturbance&) const = default;

    double t_end() const noexcept { return duration > 0.0 ? t_start + duration : 1e300; }
    bool active(double t) const noexcept { return t >= t_start && t < t_end(); }
};

struct TcscSpec {
    std::string branch;
    double b0 = 0.0;  // 0 selects -1/x of the host line
    double kc0 = 0.3;
    double dkc_limit = 0.2;
    TcscStrategy strategy = TcscStrategy::fixed;
    double kp = 0.0;
    double tc = 0.1;
    double tw = 10.0;
    double td1 = 0.4867;
    double td2 = 0.0543;
    std::string feedback_branch;  // damping controller input: real power on this branch...
    int feedback_bus = 0;         // ...measured at this end

    bool operator==(const TcscSpec&) const = default;
};

struct StatcomSpec {
    std::string name = "STATCOM";
    int bus = 0;
    double q_gen = 0.0;  // steady reactive output, capacitive positive
    StatcomControl control = StatcomControl::constant_current;
    double kp_q = 0.0;
    double ki_q = 0.0;
    double kdroop = 0.0;
    PllMode pll = PllMode::instantaneous;
    double t_pll = 0.02;

    bool operator==(const StatcomSpec&) const = default;
};

struct SimulationSetup {
    Network network;
    std::optional<TcscSpec> tcsc;
    std::optional<StatcomSpec> statcom;
    std::vector<Disturbance> disturbances;
    double dt = 1e-3;
    double duration = 25.0;
    double frequency = 60.0;
};

enum class DeviceKind { generator, load, tcsc, statcom };

inline const char* to_string(DeviceKind k) {
    switch (k) {
        case DeviceKind::generator: return "generator";
        case DeviceKind::load: return "load";
        case DeviceKind::tcsc: return "tcsc";
        case DeviceKind::statcom: return "statcom";
    }
    return "?";
}

/// Injection of one device into the network at one bus (current leaving the device).
struct DeviceTerminal {
    int bus = 0;
    std::vector<Phasor> injection;
};

struct DeviceRecord {
    std::string name;
    DeviceKind kind = DeviceKind::generator;
    std::vector<DeviceTerminal> terminals;
};

/// Uniformly sampled record of a run; columns are indexed [item][sample].
struct Trajectory {
    double dt = 0.0;
    std::vector<double> t;
    Network network;  // network as simulated (TCSC branch at kc0)
    std::vector<std::vector<Phasor>> bus_v;
    std::vector<std::vector<Phasor>> branch_i_from;  // current entering at the from end
    std::vector<std::vector<Phasor>> branch_i_to;    // current entering at the to end
    std::vector<std::string> state_names;
    std::vector<std::vector<double>> states;
    std::vector<DeviceRecord> devices;
    EventLog events;
    std::optional<TcscDevice> tcsc;  // steady description (dkc = 0)
    std::optional<StatcomDevice> statcom;

    std::size_t size() const noexcept { return t.size(); }

    Series<Phasor> voltage(int bus) const { return {t, bus_v.at(network.bus_index(bus))}; }

    Series<Phasor> branch_current(const std::string& branch, int at_bus) const {
        const std::size_t b = network.branch_index(branch);
        const Branch& br = network.branches[b];
        if (at_bus == br.from) return {t, branch_i_from[b]};
        if (at_bus == br.to) return {t, branch_i_to[b]};
        throw LookupError("bus " + std::to_string(at_bus) + " is not an end of branch '" + branch + "'");
    }

    /// Real power entering the branch at the given end.
    std::vector<double> branch_power(const std::string& branch, int at_bus) const {
        const auto i = branch_current(branch, at_bus);
        const auto v = voltage(at_bus);
        std::vector<double> p(size());
        for (std::size_t n = 0; n < size(); ++n) p[n] = std::real(v.v[n] * std::conj(i.v[n]));
        return p;
    }

    bool has_state(const std::string& name) const {
        return std::find(state_names.begin(), state_names.end(), name) != state_names.end();
    }

    const std::vector<double>& state(const std::string& name) const {
        const auto it = std::find(state_names.begin(), state_names.end(), name);
        if (it == state_names.end()) throw LookupError("trajectory has no state '" + name + "'");
        return states[static_cast<std::size_t>(it - state_names.begin())];
    }

    const DeviceRecord& device(const std::string& name) const {
        for (const auto& d : devices)
            if (d.name == name) return d;
        throw LookupError("trajectory has no device '" + name + "'");
    }
};

/// Everything the integrator needs: the converted network, device models,
/// baselines for deviation signals, and the packed differential state.
struct SimulatorState {
    SimulationSetup setup;
    Network network;
    PowerFlowSolution power_flow;
    std::vector<Generator> generators;
    std::vector<Phasor> load_admittance;
    ComplexMatrix y_fixed;  // everything except the TCSC branch

    std::optional<TcscDevice> tcsc;
    LagController lag;
    DampingController damping;
    std::size_t tcsc_branch = 0;
    std::size_t tcsc_from = 0, tcsc_to = 0;
    std::size_t feedback_branch = 0;
    int feedback_bus = 0;
    double u0 = 0.0;  // steady |V_i - V_k| across the TCSC
    double p0 = 0.0;  // steady feedback power

    std::optional<StatcomDevice> statcom;
    PiDroopController pi_ctrl;
    std::size_t statcom_bus = 0;

    double omega_s = 2.0 * pi * 60.0;
    double t = 0.0;
    std::vector<double> x;
    EventLog events;
};

/// Network solution and device outputs for one differential state.
struct Snapshot {
    ComplexVector v;
    double dkc = 0.0;
    bool dkc_clamped = false;
    double iq = 0.0;
    double theta = 0.0;
    Phasor i_statcom;  // current from the bus into the STATCOM
};

namespace detail {

inline std::size_t tcsc_state_count(const SimulatorState& s) {
    if (!s.tcsc) return 0;
    switch (s.tcsc->strategy) {
        case TcscStrategy::lag: return 1;
        case TcscStrategy::damping_controller: return 2;
        default: return 0;
    }
}

inline std::size_t tcsc_offset(const SimulatorState& s) { return 2 * s.generators.size(); }
inline std::size_t statcom_offset(const SimulatorState& s) { return tcsc_offset(s) + tcsc_state_count(s); }

inline bool statcom_has_integrator(const SimulatorState& s) {
    return s.statcom && s.statcom->control == StatcomControl::pi_droop;
}

inline std::size_t pll_offset(const SimulatorState& s) {
    return statcom_offset(s) + (statcom_has_integrator(s) ? 1 : 0);
}

inline void unpack(SimulatorState& s, const std::vector<double>& x) {
    for (std::size_t g = 0; g < s.generators.size(); ++g) {
        s.generators[g].delta = x[2 * g];
        s.generators[g].omega_dev = x[2 * g + 1];
    }
    const std::size_t o = tcsc_offset(s);
    if (s.tcsc) {
        if (s.tcsc->strategy == TcscStrategy::lag) s.lag.state = x[o];
        if (s.tcsc->strategy == TcscStrategy::damping_controller) {
            s.damping.x_w = x[o];
            s.damping.x_ll = x[o + 1];
        }
    }
    if (statcom_has_integrator(s)) s.pi_ctrl.integ = x[statcom_offset(s)];
    if (s.statcom && s.statcom->pll == PllMode::filtered) s.statcom->pll_theta = x[pll_offset(s)];
}

inline double pm_at(const SimulatorState& s, std::size_t g, double t) {
    double pm = s.generators[g].pm;
    for (const auto& d : s.setup.disturbances)
        if (d.kind == DisturbanceKind::pm_pulse && d.target == s.generators[g].name && d.active(t))
            pm *= 1.0 + d.magnitude;
    return pm;
}

inline double qref_offset_at(const SimulatorState& s, double t) {
    double q = 0.0;
    for (const auto& d : s.setup.disturbances)
        if (d.kind == DisturbanceKind::qref_pulse && d.active(t)) q += d.magnitude;
    return q;
}

}  // namespace detail

/// Solves the network for the current unpacked state at (step) time t.
inline Snapshot solve_algebraic(SimulatorState& s, double t) {
    const Network& net = s.network;
    const auto n = static_cast<Eigen::Index>(net.bus_count());

    ComplexMatrix y_base = s.y_fixed;
    for (const auto& d : s.setup.disturbances) {
        if (d.kind != DisturbanceKind::load_step || !d.active(t)) continue;
        const std::size_t l = net.load_index(d.target);
        const auto b = static_cast<Eigen::Index>(net.bus_index(net.loads[l].bus));
        y_base(b, b) += d.magnitude * s.load_admittance[l];
    }

    ComplexVector src = ComplexVector::Zero(n);
    for (const auto& g : s.generators) {
        const auto b = static_cast<Eigen::Index>(net.bus_index(g.bus));
        src(b) += g.emf() / Phasor(0.0, g.xd_prime);
    }

    PiDroopController pi = s.pi_ctrl;
    pi.qref += detail::qref_offset_at(s, t);

    // Network response for a given TCSC perturbation, with the STATCOM loop closed.
    auto solve_for = [&](double dkc, Snapshot& out) {
        ComplexMatrix y = y_base;
        if (s.tcsc) {
            const Phasor ys(0.0, (1.0 - s.tcsc->kc0 - dkc) * s.tcsc->b0);
            const auto f = static_cast<Eigen::Index>(s.tcsc_from);
            const auto k = static_cast<Eigen::Index>(s.tcsc_to);
            y(f, f) += ys;
            y(k, k) += ys;
            y(f, k) -= ys;
            y(k, f) -= ys;
        }
        const NetworkSolver solver(y, t);
        ComplexVector v = solver.solve(src);
        out.dkc = dkc;
        if (!s.statcom || s.statcom->tripped) {
            out.v = std::move(v);
            out.iq = 0.0;
            out.i_statcom = 0.0;
            return;
        }
        const StatcomDevice& dev = *s.statcom;
        const auto sb = static_cast<Eigen::Index>(s.statcom_bus);
        ComplexVector e = ComplexVector::Zero(n);
        e(sb) = 1.0;
        const ComplexVector z = solver.solve(e);
        const Phasor v0 = v(sb);
        const Phasor zs = z(sb);
        auto device_current = [&](Phasor vs) {
            const double iq = statcom_current_command(dev, pi, vs);
            return StatcomDevice::current(iq, statcom_frame_angle(dev, vs));
        };
        auto residual = [&](Phasor vs) { return vs - v0 + zs * device_current(vs); };

        // 2-D Newton on the STATCOM bus voltage with a finite-difference Jacobian.
        Phasor vs = v0 - zs * StatcomDevice::current(dev.iq0, std::arg(v0));
        Phasor r = residual(vs);
        int it = 0;
        while (std::abs(r) > 1e-14) {
            if (++it > 60) throw IntegrationFault("STATCOM bus voltage iteration did not converge", t);
            const double h = 1e-7;
            const Phasor dr_dre = (residual(vs + Phasor(h, 0.0)) - r) / h;
            const Phasor dr_dim = (residual(vs + Phasor(0.0, h)) - r) / h;
            Eigen::Matrix2d jac;
            jac << dr_dre.real(), dr_dim.real(), dr_dre.imag(), dr_dim.imag();
            const Eigen::Vector2d step = jac.partialPivLu().solve(Eigen::Vector2d(-r.real(), -r.imag()));
            const Phasor next = vs + Phasor(step(0), step(1));
            const Phasor rn = residual(next);
            if (std::abs(rn) >= std::abs(r) && it > 8) break;  // at rounding floor
            vs = next;
            r = rn;
        }
        out.iq = statcom_current_command(dev, pi, vs);
        out.theta = statcom_frame_angle(dev, vs);
        out.i_statcom = StatcomDevice::current(out.iq, out.theta);
        out.v = v - z * out.i_statcom;
    };

    Snapshot snap;
    if (!s.tcsc || s.tcsc->strategy == TcscStrategy::fixed) {
        solve_for(0.0, snap);
        return snap;
    }
    if (s.tcsc->strategy == TcscStrategy::lag) {
        const auto [c, clamped] = s.tcsc->clamp(s.lag.state);
        solve_for(c, snap);
        snap.dkc_clamped = clamped;
        return snap;
    }

    // Feedthrough strategies: dkc depends on the network solution it shapes.
    auto requested = [&](const Snapshot& sn) {
        if (s.tcsc->strategy == TcscStrategy::algebraic) {
            const double u = std::abs(sn.v(static_cast<Eigen::Index>(s.tcsc_from)) -
                                      sn.v(static_cast<Eigen::Index>(s.tcsc_to)));
            return s.lag.kp * (u - s.u0);
        }
        const Branch& fb = net.branches[s.feedback_branch];
        std::vector<Phasor> vv(net.bus_count());
        for (Eigen::Index i = 0; i < n; ++i) vv[static_cast<std::size_t>(i)] = sn.v(i);
        const Phasor cur = branch_current(net, fb, vv, s.feedback_bus);
        const double p = std::real(vv[net.bus_index(s.feedback_bus)] * std::conj(cur));
        return s.damping.output(p - s.p0);
    };
    auto g = [&](double k, Snapshot& sn, bool& clamped) {
        solve_for(k, sn);
        const auto [c, cl] = s.tcsc->clamp(requested(sn));
        clamped = cl;
        return k - c;
    };

    // Secant iteration on dkc - clamp(requested(dkc)) = 0.
    bool clamped = false;
    Snapshot sa;
    double ka = 0.0;
    double ga = g(ka, sa, clamped);
    if (std::abs(ga) <= 1e-15) {
        sa.dkc_clamped = clamped;
        return sa;
    }
    double kb = ka - ga;  // fixed-point step as the second secant point
    Snapshot sb;
    double gb = g(kb, sb, clamped);
    int it = 0;
    while (std::abs(gb) > 1e-13) {
        if (++it > 50) {
            if (std::abs(gb) < 1e-11) break;  // rounding floor
            throw IntegrationFault("TCSC feedthrough loop did not converge", t);
        }
        const double denom = gb - ga;
        if (denom == 0.0) break;
        const double kn = kb - gb * (kb - ka) / denom;
        ka = kb;
        ga = gb;
        sa = std::move(sb);
        kb = kn;
        gb = g(kb, sb, clamped);
    }
    sb.dkc_clamped = clamped;
    return sb;
}

namespace detail {

inline std::vector<double> derivatives(SimulatorState& s, double t, const std::vector<double>& x,
                                       double step_time) {
    unpack(s, x);
    const Snapshot snap = solve_algebraic(s, step_time);
    std::vector<double> d(x.size(), 0.0);
    const Network& net = s.network;
    for (std::size_t g = 0; g < s.generators.size(); ++g) {
        const Phasor vt = snap.v(static_cast<Eigen::Index>(net.bus_index(s.generators[g].bus)));
        const auto sd = generator_derivs(s.generators[g], vt, s.omega_s, pm_at(s, g, step_time));
        d[2 * g] = sd.d_delta;
        d[2 * g + 1] = sd.d_omega;
    }
    const std::size_t o = tcsc_offset(s);
    if (s.tcsc && s.tcsc->strategy == TcscStrategy::lag) {
        const double u = std::abs(snap.v(static_cast<Eigen::Index>(s.tcsc_from)) -
                                  snap.v(static_cast<Eigen::Index>(s.tcsc_to)));
        d[o] = s.lag.derivative(u - s.u0);
    }
    if (s.tcsc && s.tcsc->strategy == TcscStrategy::damping_controller) {
        std::vector<Phasor> vv(net.bus_count());
        for (std::size_t i = 0; i < vv.size(); ++i) vv[i] = snap.v(static_cast<Eigen::Index>(i));
        const Branch& fb = net.branches[s.feedback_branch];
        const double p = std::real(vv[net.bus_index(s.feedback_bus)] *
                                   std::conj(branch_current(net, fb, vv, s.feedback_bus)));
        const auto [dw, dll] = s.damping.derivatives(p - s.p0);
        d[o] = dw;
        d[o + 1] = dll;
    }
    if (s.statcom && !s.statcom->tripped) {
        const Phasor vs = snap.v(static_cast<Eigen::Index>(s.statcom_bus));
        const auto [vd, vq] = dq_transform(vs, snap.theta);
        if (statcom_has_integrator(s)) {
            PiDroopController pi = s.pi_ctrl;
            pi.qref += qref_offset_at(s, step_time);
            d[statcom_offset(s)] = pi.ki_q * pi.error(-snap.iq * vd, std::abs(vs));
        }
        if (s.statcom->pll == PllMode::filtered) d[pll_offset(s)] = std::atan2(vq, vd) / s.statcom->t_pll;
    }
    (void)t;
    return d;
}

}  // namespace detail

/// Builds the equilibrium: power flow, machine EMFs, load admittances, controller
/// baselines. Throws InitializationFault if any state derivative is >= 1e-8.
inline SimulatorState initialize(const SimulationSetup& setup) {
    if (!(setup.dt > 0.0)) throw InputError("dt must be positive");
    if (!(setup.duration > 0.0)) throw InputError("duration must be positive");
    for (const auto& d : setup.disturbances) {
        if (!(d.t_start > 0.0)) throw InputError("disturbance must start after t = 0");
        if (d.duration < 0.0) throw InputError("disturbance duration must be non-negative");
    }

    SimulatorState s;
    s.setup = setup;
    s.network = setup.network;
    s.omega_s = 2.0 * pi * setup.frequency;
    Network& net = s.network;

    if (setup.tcsc) {
        const TcscSpec& ts = *setup.tcsc;
        Branch& br = net.branches[net.branch_index(ts.branch)];
        TcscDevice dev;
        dev.branch = ts.branch;
        dev.b0 = ts.b0 != 0.0 ? ts.b0 : (br.kind == BranchKind::tcsc ? br.b0 : -1.0 / br.x);
        dev.kc0 = ts.kc0;
        dev.dkc_limit = ts.dkc_limit;
        dev.strategy = ts.strategy;
        if (dev.kc0 + dev.dkc_limit >= 1.0) throw InputError("tcsc limits must keep kc below 1");
        br.kind = BranchKind::tcsc;
        br.b0 = dev.b0;
        br.kc = dev.kc0;
        br.b_charging = 0.0;
        s.tcsc = dev;
        s.tcsc_branch = net.branch_index(ts.branch);
        s.tcsc_from = net.bus_index(br.from);
        s.tcsc_to = net.bus_index(br.to);
        s.lag = LagController{ts.tc, ts.kp, 0.0};
        s.damping = DampingController{ts.kp, ts.tw, ts.td1, ts.td2, 0.0, 0.0};
        if (ts.strategy == TcscStrategy::damping_controller) {
            s.feedback_branch = net.branch_index(ts.feedback_branch);
            s.feedback_bus = ts.feedback_bus;
            const Branch& fb = net.branches[s.feedback_branch];
            if (fb.from != ts.feedback_bus && fb.to != ts.feedback_bus)
                throw LookupError("feedback bus is not an end of '" + ts.feedback_branch + "'");
        }
    }
    if (setup.statcom) {
        const StatcomSpec& ss = *setup.statcom;
        s.statcom_bus = net.bus_index(ss.bus);
        Bus& b = net.buses[s.statcom_bus];
        if (b.kind != BusKind::pq) throw InputError("STATCOM must sit on a PQ bus");
        b.q_gen += ss.q_gen;
    }

    s.power_flow = solve_power_flow(net);
    const auto& vpf = s.power_flow.v;
    const ComplexMatrix ybus = build_ybus(net);
    const auto s_inj = bus_injections(ybus, vpf);

    const auto nb = static_cast<Eigen::Index>(net.bus_count());
    s.y_fixed = ybus;
    if (s.tcsc) {
        Branch& br = net.branches[s.tcsc_branch];
        const Phasor ys = br.y_series(net.lossless);
        const auto f = static_cast<Eigen::Index>(s.tcsc_from);
        const auto k = static_cast<Eigen::Index>(s.tcsc_to);
        s.y_fixed(f, f) -= ys;
        s.y_fixed(k, k) -= ys;
        s.y_fixed(f, k) += ys;
        s.y_fixed(k, f) += ys;
    }
    for (const auto& ld : net.loads) {
        const std::size_t b = net.bus_index(ld.bus);
        const double vm2 = std::norm(vpf[b]);
        const Phasor yl = Phasor(ld.p, -ld.q) / vm2;
        s.load_admittance.push_back(yl);
        s.y_fixed(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b)) += yl;
    }

    std::vector<int> gen_buses;
    for (const auto& gd : net.generators) {
        if (std::find(gen_buses.begin(), gen_buses.end(), gd.bus) != gen_buses.end())
            throw InputError("more than one generator on bus " + std::to_string(gd.bus));
        gen_buses.push_back(gd.bus);
        if (!(gd.h > 0.0) || !(gd.xd_prime > 0.0))
            throw InputError("generator '" + gd.name + "' needs H > 0 and xd' > 0");
        const std::size_t b = net.bus_index(gd.bus);
        Phasor sg = s_inj[b];
        for (const auto& ld : net.loads)
            if (ld.bus == gd.bus) sg += Phasor(ld.p, ld.q);
        if (setup.statcom && setup.statcom->bus == gd.bus) sg -= Phasor(0.0, setup.statcom->q_gen);
        const Phasor ig = std::conj(sg / vpf[b]);
        const Phasor e = vpf[b] + Phasor(0.0, gd.xd_prime) * ig;
        Generator g;
        g.name = gd.name;
        g.bus = gd.bus;
        g.h = gd.h;
        g.d = gd.d;
        g.xd_prime = gd.xd_prime;
        g.e_mag = std::abs(e);
        g.delta = std::arg(e);
        g.pm = sg.real();
        s.generators.push_back(g);
        const auto bi = static_cast<Eigen::Index>(b);
        s.y_fixed(bi, bi) += 1.0 / Phasor(0.0, gd.xd_prime);
    }
    (void)nb;

    if (setup.statcom) {
        const StatcomSpec& ss = *setup.statcom;
        StatcomDevice dev;
        dev.name = ss.name;
        dev.bus = ss.bus;
        dev.iq0 = ss.q_gen / std::abs(vpf[s.statcom_bus]);
        dev.iq = dev.iq0;
        dev.control = StatcomControl::constant_current;  // refs are fixed after the first solve
        dev.pll = ss.pll;
        dev.t_pll = ss.t_pll;
        dev.pll_theta = std::arg(vpf[s.statcom_bus]);
        s.statcom = dev;
        s.pi_ctrl = PiDroopController{ss.kp_q, ss.ki_q, ss.kdroop, 0.0, 1.0, 0.0};
    }

    // Pack the state and take the first network solution.
    s.x.assign(2 * s.generators.size() + detail::tcsc_state_count(s), 0.0);
    for (std::size_t g = 0; g < s.generators.size(); ++g) s.x[2 * g] = s.generators[g].delta;
    if (s.statcom) {
        if (setup.statcom->control == StatcomControl::pi_droop) s.x.push_back(0.0);
        if (setup.statcom->pll == PllMode::filtered) s.x.push_back(s.statcom->pll_theta);
    }
    detail::unpack(s, s.x);

    // First solve with dkc = 0 and constant STATCOM current; baselines come from it.
    std::optional<TcscStrategy> strategy;
    if (s.tcsc) {
        strategy = s.tcsc->strategy;
        s.tcsc->strategy = TcscStrategy::fixed;
    }
    Snapshot snap = solve_algebraic(s, 0.0);
    if (s.tcsc) s.tcsc->strategy = *strategy;
    if (s.statcom) {
        const Phasor vs = snap.v(static_cast<Eigen::Index>(s.statcom_bus));
        const auto [vd, vq] = dq_transform(vs, snap.theta);
        (void)vq;
        s.pi_ctrl.vref = std::abs(vs);
        s.pi_ctrl.qref = -s.statcom->iq0 * vd;
        s.statcom->control = setup.statcom->control;
    }
    if (s.tcsc) {
        s.u0 = std::abs(snap.v(static_cast<Eigen::Index>(s.tcsc_from)) -
                        snap.v(static_cast<Eigen::Index>(s.tcsc_to)));
        if (s.tcsc->strategy == TcscStrategy::damping_controller) {
            std::vector<Phasor> vv(net.bus_count());
            for (std::size_t i = 0; i < vv.size(); ++i) vv[i] = snap.v(static_cast<Eigen::Index>(i));
            const Branch& fb = net.branches[s.feedback_branch];
            s.p0 = std::real(vv[net.bus_index(s.feedback_bus)] *
                             std::conj(branch_current(net, fb, vv, s.feedback_bus)));
        }
    }
    for (auto& g : s.generators) {
        const Phasor vt = snap.v(static_cast<Eigen::Index>(net.bus_index(g.bus)));
        g.pm = g.electrical_power(vt);
    }

    const auto d = detail::derivatives(s, 0.0, s.x, 0.0);
    double worst = 0.0;
    std::size_t worst_i = 0;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (std::abs(d[i]) > worst) {
            worst = std::abs(d[i]);
            worst_i = i;
        }
    if (worst >= 1e-8) {
        std::string who = worst_i < 2 * s.generators.size()
                              ? s.generators[worst_i / 2].name
                              : (worst_i < detail::statcom_offset(s) ? std::string("tcsc") : std::string("statcom"));
        throw InitializationFault("initial state is not steady: |dx/dt| = " + std::to_string(worst) +
                                  " at " + who);
    }
    return s;
}

namespace detail {

inline void record(const SimulatorState& s, const Snapshot& snap, Trajectory& tr) {
    const Network& net = s.network;
    tr.t.push_back(s.t);
    std::vector<Phasor> vv(net.bus_count());
    for (std::size_t i = 0; i < vv.size(); ++i) {
        vv[i] = snap.v(static_cast<Eigen::Index>(i));
        tr.bus_v[i].push_back(vv[i]);
    }
    for (std::size_t b = 0; b < net.branches.size(); ++b) {
        Branch br = net.branches[b];
        if (br.kind == BranchKind::tcsc) br.kc = s.tcsc->kc0 + snap.dkc;
        tr.branch_i_from[b].push_back(branch_current(net, br, vv, br.from));
        tr.branch_i_to[b].push_back(branch_current(net, br, vv, br.to));
    }

    std::size_t k = 0;
    auto push = [&](double value) { tr.states[k++].push_back(value); };
    for (const auto& g : s.generators) {
        push(g.delta);
        push(g.omega_dev);
    }
    if (s.tcsc) {
        push(snap.dkc);
        const double u = std::abs(vv[s.tcsc_from] - vv[s.tcsc_to]);
        push(u - s.u0);
        if (s.tcsc->strategy == TcscStrategy::damping_controller) {
            push(s.damping.x_w);
            push(s.damping.x_ll);
        }
    }
    if (s.statcom) {
        const Phasor vs = vv[s.statcom_bus];
        const auto [vd, vq] = dq_transform(vs, snap.theta);
        const auto [id, iq] = dq_transform(snap.i_statcom, snap.theta);
        push(iq);
        push(id);
        push(vd);
        push(vq);
        push(snap.theta);
        push(s.pi_ctrl.integ);
        push(s.statcom->tripped ? 1.0 : 0.0);
    }

    std::size_t dev = 0;
    for (const auto& g : s.generators)
        tr.devices[dev++].terminals[0].injection.push_back(g.terminal_current(vv[net.bus_index(g.bus)]));
    for (std::size_t l = 0; l < net.loads.size(); ++l) {
        const std::size_t b = net.bus_index(net.loads[l].bus);
        Phasor yl = s.load_admittance[l];
        for (const auto& d : s.setup.disturbances)
            if (d.kind == DisturbanceKind::load_step && d.target == net.loads[l].name && d.active(s.t + 0.5 * s.setup.dt))
                yl *= 1.0 + d.magnitude;
        tr.devices[dev++].terminals[0].injection.push_back(-yl * vv[b]);
    }
    if (s.tcsc) {
        auto& terms = tr.devices[dev++].terminals;
        terms[0].injection.push_back(-tr.branch_i_from[s.tcsc_branch].back());
        terms[1].injection.push_back(-tr.branch_i_to[s.tcsc_branch].back());
    }
    if (s.statcom) tr.devices[dev++].terminals[0].injection.push_back(-snap.i_statcom);
}

inline Trajectory empty_trajectory(const SimulatorState& s) {
    const Network& net = s.network;
    Trajectory tr;
    tr.dt = s.setup.dt;
    tr.network = net;
    tr.bus_v.resize(net.bus_count());
    tr.branch_i_from.resize(net.branches.size());
    tr.branch_i_to.resize(net.branches.size());
    for (const auto& g : s.generators) {
        tr.state_names.push_back(g.name + ".delta");
        tr.state_names.push_back(g.name + ".omega_dev");
    }
    if (s.tcsc) {
        tr.state_names.push_back("TCSC.dkc");
        tr.state_names.push_back("TCSC.dU");
        if (s.tcsc->strategy == TcscStrategy::damping_controller) {
            tr.state_names.push_back("TCSC.x_w");
            tr.state_names.push_back("TCSC.x_ll");
        }
    }
    if (s.statcom) {
        for (const char* n : {"iq", "id", "vd", "vq", "theta", "integ", "tripped"})
            tr.state_names.push_back(s.statcom->name + "." + n);
    }
    tr.states.resize(tr.state_names.size());

    for (const auto& g : s.generators) tr.devices.push_back({g.name, DeviceKind::generator, {{g.bus, {}}}});
    for (const auto& l : net.loads) tr.devices.push_back({l.name, DeviceKind::load, {{l.bus, {}}}});
    if (s.tcsc) {
        const Branch& br = net.branches[s.tcsc_branch];
        tr.devices.push_back({"TCSC", DeviceKind::tcsc, {{br.from, {}}, {br.to, {}}}});
        TcscDevice d = *s.tcsc;
        d.dkc = 0.0;
        tr.tcsc = d;
    }
    if (s.statcom) {
        tr.devices.push_back({s.statcom->name, DeviceKind::statcom, {{s.statcom->bus, {}}}});
        tr.statcom = *s.statcom;
    }
    return tr;
}

}  // namespace detail

/// Integrates from the current state to setup.duration, recording every step.
inline Trajectory run(SimulatorState& s) {
    Trajectory tr = detail::empty_trajectory(s);
    const double dt = s.setup.dt;
    const auto steps = static_cast<std::size_t>(std::llround(s.setup.duration / dt));
    for (auto& col : tr.bus_v) col.reserve(steps + 1);

    std::size_t n = static_cast<std::size_t>(std::llround(s.t / dt));
    bool clamped = false;  // log entry into the limit, not every clamped step
    auto snapshot_now = [&] {
        detail::unpack(s, s.x);
        Snapshot snap = solve_algebraic(s, s.t + 0.5 * dt);
        if (snap.dkc_clamped && !clamped) s.events.push_back({s.t, "tcsc dkc clamped at limit"});
        clamped = snap.dkc_clamped;
        if (s.statcom && !s.statcom->tripped &&
            std::abs(snap.v(static_cast<Eigen::Index>(s.statcom_bus))) < StatcomDevice::trip_voltage) {
            s.statcom->tripped = true;
            s.events.push_back({s.t, s.statcom->name + " tripped on low voltage"});
            snap = solve_algebraic(s, s.t + 0.5 * dt);
        }
        return snap;
    };

    detail::record(s, snapshot_now(), tr);
    while (n < steps) {
        const double t0 = static_cast<double>(n) * dt;
        const double mid = t0 + 0.5 * dt;  // disturbances are piecewise constant per step
        s.x = rk4_step(
            s.x, [&](double ts, const std::vector<double>& xs) { return detail::derivatives(s, ts, xs, mid); },
            t0, dt);
        ++n;
        s.t = static_cast<double>(n) * dt;
        detail::record(s, snapshot_now(), tr);
    }
    tr.events = s.events;
    return tr;
}

inline Trajectory run(const SimulationSetup& setup) {
    SimulatorState s = initialize(setup);
    return run(s);
}

}  // namespace defsim
