#pragma once

// Hand-built trajectories for exercising the energy engine without the simulator.

#include "defsim/simulator.hpp"

#include <functional>
#include <string>
#include <vector>

namespace testing {

using defsim::Phasor;

/// Two buses joined by a TCSC branch "T" (1 -> 2). Bus 1 sits at 1.0 pu; bus 2 is
/// placed so that V1 - V2 = U(t) at angle phi(t). Branch currents follow the
/// admittance j (1 - kc0 - dkc) b0.
inline defsim::Trajectory tcsc_trajectory(const std::vector<double>& t, const std::vector<double>& u,
                                          const std::vector<double>& phi, const std::vector<double>& dkc, double b0,
                                          double kc0) {
    defsim::Trajectory tr;
    tr.dt = t[1] - t[0];
    tr.t = t;
    defsim::Bus b1;
    b1.id = 1;
    b1.kind = defsim::BusKind::slack;
    defsim::Bus b2;
    b2.id = 2;
    tr.network.buses = {b1, b2};
    defsim::Branch br;
    br.name = "T";
    br.from = 1;
    br.to = 2;
    br.x = -1.0 / b0;
    br.kind = defsim::BranchKind::tcsc;
    br.b0 = b0;
    br.kc = kc0;
    tr.network.branches = {br};

    const std::size_t n = t.size();
    tr.bus_v.assign(2, std::vector<Phasor>(n));
    tr.branch_i_from.assign(1, std::vector<Phasor>(n));
    tr.branch_i_to.assign(1, std::vector<Phasor>(n));
    for (std::size_t k = 0; k < n; ++k) {
        const Phasor v1 = 1.0;
        const Phasor v2 = v1 - std::polar(u[k], phi[k]);
        const Phasor y(0.0, (1.0 - kc0 - dkc[k]) * b0);
        tr.bus_v[0][k] = v1;
        tr.bus_v[1][k] = v2;
        tr.branch_i_from[0][k] = y * (v1 - v2);
        tr.branch_i_to[0][k] = y * (v2 - v1);
    }
    tr.state_names = {"TCSC.dkc"};
    tr.states = {dkc};
    defsim::TcscDevice dev;
    dev.branch = "T";
    dev.b0 = b0;
    dev.kc0 = kc0;
    tr.tcsc = dev;
    return tr;
}

/// STATCOM-only trajectory from dq-frame samples.
inline defsim::Trajectory statcom_trajectory(const std::vector<double>& t, const std::vector<double>& vd,
                                             const std::vector<double>& vq, const std::vector<double>& id,
                                             const std::vector<double>& iq) {
    defsim::Trajectory tr;
    tr.dt = t[1] - t[0];
    tr.t = t;
    tr.state_names = {"S.vd", "S.vq", "S.id", "S.iq"};
    tr.states = {vd, vq, id, iq};
    defsim::StatcomDevice dev;
    dev.name = "S";
    tr.statcom = dev;
    return tr;
}

inline std::vector<double> axis(double dt, std::size_t n) {
    std::vector<double> t(n);
    for (std::size_t k = 0; k < n; ++k) t[k] = static_cast<double>(k) * dt;
    return t;
}

inline std::vector<double> sample(const std::vector<double>& t, const std::function<double(double)>& f) {
    std::vector<double> v(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) v[k] = f(t[k]);
    return v;
}

}  // namespace testing
