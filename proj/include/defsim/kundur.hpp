#pragma once

// Two-area, four-machine benchmark on a 100 MVA base. Machine data are the
// 900 MVA classical-model values converted to the system base; line data are
// per kilometre values times section length. Resistances are kept so the
// lossless switch is the only thing that removes them.

#include "defsim/network.hpp"

#include <string>

namespace defsim {

inline constexpr const char* kundur_dataset_name = "kundur-2area";

/// Uniform generator damping on the 100 MVA base (1 pu on the 900 MVA machine base).
inline constexpr double kundur_default_damping = 9.0;

inline Network kundur_two_area(double damping = kundur_default_damping) {
    Network net;
    net.base_mva = 100.0;
    net.lossless = true;

    auto bus = [&](int id, BusKind kind, double kv, double v, double ang, double pg) {
        Bus b;
        b.id = id;
        b.kind = kind;
        b.base_kv = kv;
        b.v_set = v;
        b.angle_deg = ang;
        b.p_gen = pg;
        net.buses.push_back(b);
    };
    bus(1, BusKind::pv, 20.0, 1.03, 0.0, 7.0);
    bus(2, BusKind::pv, 20.0, 1.01, 0.0, 7.0);
    bus(3, BusKind::slack, 20.0, 1.03, -6.8, 0.0);
    bus(4, BusKind::pv, 20.0, 1.01, 0.0, 7.0);
    for (int id = 5; id <= 11; ++id) bus(id, BusKind::pq, 230.0, 1.0, 0.0, 0.0);
    net.buses[6].shunt_b = 2.0;  // bus 7
    net.buses[8].shunt_b = 3.5;  // bus 9

    constexpr double xt = 0.15 / 9.0;
    auto branch = [&](std::string name, int f, int t, double r, double x, double b, BranchKind k) {
        Branch br;
        br.name = std::move(name);
        br.from = f;
        br.to = t;
        br.r = r;
        br.x = x;
        br.b_charging = b;
        br.kind = k;
        net.branches.push_back(br);
    };
    branch("1-5", 1, 5, 0.0, xt, 0.0, BranchKind::transformer);
    branch("2-6", 2, 6, 0.0, xt, 0.0, BranchKind::transformer);
    branch("3-11", 3, 11, 0.0, xt, 0.0, BranchKind::transformer);
    branch("4-10", 4, 10, 0.0, xt, 0.0, BranchKind::transformer);
    // r, x, b per km: 0.0001, 0.001, 0.00175
    auto line = [&](std::string name, int f, int t, double km) {
        branch(std::move(name), f, t, 1e-4 * km, 1e-3 * km, 1.75e-3 * km, BranchKind::line);
    };
    line("5-6", 5, 6, 25.0);
    line("6-7", 6, 7, 10.0);
    line("7-8#1", 7, 8, 110.0);
    line("7-8#2", 7, 8, 110.0);
    line("8-9#1", 8, 9, 110.0);
    line("8-9#2", 8, 9, 110.0);
    line("9-10", 9, 10, 10.0);
    line("10-11", 10, 11, 25.0);

    constexpr double xd = 0.3 / 9.0;
    net.generators = {
        {"G1", 1, 6.5 * 9.0, damping, xd},
        {"G2", 2, 6.5 * 9.0, damping, xd},
        {"G3", 3, 6.175 * 9.0, damping, xd},
        {"G4", 4, 6.175 * 9.0, damping, xd},
    };
    net.loads = {{"L7", 7, 9.67, 1.0}, {"L9", 9, 17.67, 1.0}};
    return net;
}

}  // namespace defsim
