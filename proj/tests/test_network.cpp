#include "defsim/kundur.hpp"
#include "defsim/network.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace defsim;
using Catch::Approx;

namespace {

Network two_bus(double x, double p_transfer) {
    Network net;
    Bus a;
    a.id = 1;
    a.kind = BusKind::slack;
    a.v_set = 1.0;
    Bus b;
    b.id = 2;
    b.kind = BusKind::pv;
    b.v_set = 1.0;
    b.p_gen = -p_transfer;
    net.buses = {a, b};
    Branch br;
    br.name = "1-2";
    br.from = 1;
    br.to = 2;
    br.x = x;
    net.branches = {br};
    return net;
}

}  // namespace

TEST_CASE("single line admittance matrix") {
    const auto y = build_ybus(two_bus(0.2, 0.0));
    CHECK(std::abs(y(0, 0) - Phasor(0.0, -5.0)) < 1e-12);
    CHECK(std::abs(y(0, 1) - Phasor(0.0, 5.0)) < 1e-12);
    CHECK(std::abs(y(1, 0) - Phasor(0.0, 5.0)) < 1e-12);
    CHECK(std::abs(y(1, 1) - Phasor(0.0, -5.0)) < 1e-12);
}

TEST_CASE("tcsc branch admittance at kc = 0.3") {
    Branch br;
    br.kind = BranchKind::tcsc;
    br.b0 = -10.0;
    br.kc = 0.3;
    CHECK(std::abs(br.y_series(true) - Phasor(0.0, 0.7 * -10.0)) < 1e-12);
}

TEST_CASE("tcsc at kc = 0 stamps like a plain line") {
    Network plain = two_bus(0.2, 0.0);
    plain.branches.push_back(plain.branches[0]);
    plain.branches[1].name = "1-2#2";
    Network with_tcsc = plain;
    with_tcsc.branches[1].kind = BranchKind::tcsc;
    with_tcsc.branches[1].b0 = -1.0 / 0.2;
    with_tcsc.branches[1].kc = 0.0;
    CHECK((build_ybus(plain) - build_ybus(with_tcsc)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("admittance matrix is symmetric and rows sum to the shunts") {
    const Network net = kundur_two_area();
    const auto y = build_ybus(net);
    CHECK((y - y.transpose()).cwiseAbs().maxCoeff() == 0.0);
    for (std::size_t i = 0; i < net.bus_count(); ++i) {
        double shunt = net.buses[i].shunt_b;
        for (const auto& br : net.branches)
            if (br.from == net.buses[i].id || br.to == net.buses[i].id) shunt += br.b_shunt_half();
        const Phasor row = y.row(static_cast<Eigen::Index>(i)).sum();
        CHECK(std::abs(row - Phasor(0.0, shunt)) < 1e-9);
    }
}

TEST_CASE("lossless switch zeroes every series resistance") {
    Network net = kundur_two_area();
    for (const auto& br : net.branches) CHECK(br.y_series(true).real() == 0.0);
    net.lossless = false;
    CHECK(build_ybus(net).real().cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("rebuilding after a compensation change restores the matrix bit for bit") {
    Network net = kundur_two_area();
    Branch& br = net.branches[net.branch_index("8-9#1")];
    br.kind = BranchKind::tcsc;
    br.b0 = -1.0 / br.x;
    br.kc = 0.3;
    const auto before = build_ybus(net);
    br.kc = 0.3 + 0.0173;
    const auto perturbed = build_ybus(net);
    br.kc = 0.3;
    const auto after = build_ybus(net);
    CHECK((perturbed - before).cwiseAbs().maxCoeff() > 0.0);
    CHECK(before == after);
}

TEST_CASE("topology errors name the problem") {
    Network net = two_bus(0.2, 0.0);
    net.branches[0].to = 7;
    CHECK_THROWS_AS(build_ybus(net), StructuralError);

    net = two_bus(0.0, 0.0);
    CHECK_THROWS_AS(build_ybus(net), StructuralError);

    net = two_bus(0.2, 0.0);
    Bus island;
    island.id = 3;
    net.buses.push_back(island);
    try {
        build_ybus(net);
        FAIL("expected a structural error");
    } catch (const StructuralError& e) {
        CHECK(std::string(e.what()).find("3") != std::string::npos);
    }
}

TEST_CASE("power flow on a lone slack bus needs no correction") {
    Network net;
    Bus b;
    b.id = 1;
    b.kind = BusKind::slack;
    b.v_set = 1.02;
    b.angle_deg = 10.0;
    net.buses = {b};
    const auto pf = solve_power_flow(net);
    CHECK(pf.iterations == 0);
    CHECK(std::abs(pf.v[0] - std::polar(1.02, 10.0 * pi / 180.0)) < 1e-12);
}

TEST_CASE("two-bus transfer angle follows P = V1 V2 sin(delta) / x") {
    const auto pf = solve_power_flow(two_bus(0.5, 0.5));
    const double delta = std::arg(pf.v[0]) - std::arg(pf.v[1]);
    CHECK(delta * 180.0 / pi == Approx(std::asin(0.25) * 180.0 / pi).epsilon(1e-9));
    CHECK(delta * 180.0 / pi == Approx(14.4775).margin(1e-4));
    CHECK(std::abs(pf.v[1]) == Approx(1.0));
    CHECK(pf.mismatch <= 1e-8);
}

TEST_CASE("two-area dataset power flow converges with PV magnitudes held") {
    const Network net = kundur_two_area();
    const auto pf = solve_power_flow(net);
    CHECK(pf.mismatch <= 1e-8);
    for (std::size_t i = 0; i < net.bus_count(); ++i)
        if (net.buses[i].kind != BusKind::pq) CHECK(std::abs(pf.v[i]) == Approx(net.buses[i].v_set).epsilon(1e-12));
    const auto s = bus_injections(build_ybus(net), pf.v);
    const auto sched = scheduled_injections(net);
    for (std::size_t i = 0; i < net.bus_count(); ++i) {
        if (net.buses[i].kind == BusKind::pq) {
            CHECK(std::abs(s[i] - sched[i]) < 1e-8);
        }
    }
}

TEST_CASE("power flow non-convergence reports the mismatch") {
    Network net = two_bus(0.5, 5.0);  // beyond the transfer limit of 2 pu
    try {
        solve_power_flow(net);
        FAIL("expected a convergence error");
    } catch (const ConvergenceError& e) {
        CHECK(e.residual() > 1e-8);
        CHECK(e.iterations() == 50);
    }
}

TEST_CASE("network solve reproduces the power flow from internal voltages") {
    const Network net = kundur_two_area();
    const auto pf = solve_power_flow(net);
    ComplexMatrix y = build_ybus(net);
    const auto s = bus_injections(y, pf.v);
    ComplexVector inj = ComplexVector::Zero(static_cast<Eigen::Index>(net.bus_count()));
    for (const auto& ld : net.loads) {
        const auto i = net.bus_index(ld.bus);
        const double vm = std::abs(pf.v[i]);
        y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += Phasor(ld.p, -ld.q) / (vm * vm);
    }
    for (const auto& g : net.generators) {
        const auto i = net.bus_index(g.bus);
        // Terminal injection of the machine: S_bus plus the load at that bus (none on generator buses).
        const Phasor cur = std::conj(s[i] / pf.v[i]);
        const Phasor e = pf.v[i] + Phasor(0.0, g.xd_prime) * cur;
        const Phasor yg = 1.0 / Phasor(0.0, g.xd_prime);
        y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += yg;
        inj(static_cast<Eigen::Index>(i)) += e * yg;
    }
    const ComplexVector v = network_solve(y, inj);
    for (std::size_t i = 0; i < net.bus_count(); ++i) CHECK(std::abs(v(static_cast<Eigen::Index>(i)) - pf.v[i]) < 1e-8);
    CHECK(NetworkSolver(y).residual(v, inj) <= 1e-10);
}

TEST_CASE("network solve with no sources gives zero voltages") {
    ComplexMatrix y(2, 2);
    y << Phasor(0, -15), Phasor(0, 5), Phasor(0, 5), Phasor(0, -7);
    const ComplexVector v = network_solve(y, ComplexVector::Zero(2));
    CHECK(v.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("quadrature current injection follows the hand-computed Thevenin response") {
    // Line -j5 between buses; -j10 to ground at bus 1, -j2 at bus 2.
    ComplexMatrix y(2, 2);
    y << Phasor(0, -15), Phasor(0, 5), Phasor(0, 5), Phasor(0, -7);
    // det = (-15)(-7) j^2 - (5j)^2 = -105 + 25 = -80; Z22 = y11 / det = -15j / -80 = 0.1875j
    const Phasor z22(0.0, 0.1875), z12(0.0, -5.0 / -80.0);
    ComplexVector inj = ComplexVector::Zero(2);
    inj(1) = Phasor(0.0, 0.1);
    const ComplexVector v = network_solve(y, inj);
    CHECK(std::abs(v(1) - z22 * inj(1)) < 1e-14);
    CHECK(std::abs(v(0) - z12 * inj(1)) < 1e-14);
}

TEST_CASE("singular network matrix is a fault with the time") {
    ComplexMatrix y(2, 2);
    y << Phasor(0, -5), Phasor(0, 5), Phasor(0, 5), Phasor(0, -5);
    try {
        network_solve(y, ComplexVector::Zero(2), 3.5);
        FAIL("expected a fault");
    } catch (const IntegrationFault& e) {
        CHECK(e.time() == 3.5);
    }
}

TEST_CASE("branch currents are lossless at both ends") {
    const Network net = kundur_two_area();
    const auto pf = solve_power_flow(net);
    for (const auto& br : net.branches) {
        const Phasor sf = pf.v[net.bus_index(br.from)] * std::conj(branch_current(net, br, pf.v, br.from));
        const Phasor st = pf.v[net.bus_index(br.to)] * std::conj(branch_current(net, br, pf.v, br.to));
        CHECK(std::abs(sf.real() + st.real()) < 1e-9);
    }
}
