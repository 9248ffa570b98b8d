#include "defsim/config.hpp"
#include "defsim/def_engine.hpp"
#include "defsim/simulator.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace defsim;
using Catch::Approx;

namespace {

SimulationSetup both_devices(double duration) {
    ScenarioConfig c = preset("A-ii");
    SimulationSetup s = c.setup();
    s.statcom = preset("B-droop-sink").statcom;
    s.duration = duration;
    return s;
}

double envelope(const std::vector<double>& t, const std::vector<double>& p, double from, double to) {
    double peak = 0.0;
    for (std::size_t n = 0; n < t.size(); ++n)
        if (t[n] >= from && t[n] < to) peak = std::max(peak, std::abs(p[n] - p[0]));
    return peak;
}

}  // namespace

TEST_CASE("undisturbed run stays at the initial equilibrium") {
    SimulationSetup s = both_devices(10.0);
    s.disturbances.clear();
    const auto tr = run(s);
    double worst = 0.0;
    for (const auto& v : tr.bus_v)
        for (const auto& x : v) worst = std::max(worst, std::abs(x - v.front()));
    CHECK(worst < 1e-6);
}

TEST_CASE("undisturbed runs are bit for bit reproducible") {
    SimulationSetup s = both_devices(3.0);
    s.disturbances.clear();
    const auto a = run(s);
    const auto b = run(s);
    CHECK(a.bus_v == b.bus_v);
    CHECK(a.states == b.states);
}

TEST_CASE("initialization back-solves a steady start") {
    const SimulationSetup s = both_devices(1.0);
    SimulatorState st = initialize(s);
    CHECK(st.power_flow.mismatch <= 1e-8);
    const auto x0 = st.x;
    const auto d = detail::derivatives(st, 0.0, x0, 0.0);
    double worst = 0.0;
    for (double v : d) worst = std::max(worst, std::abs(v));
    CHECK(worst < 1e-8);
    CHECK(st.pi_ctrl.integ == 0.0);
    REQUIRE(st.statcom);
    const double vm = std::abs(st.power_flow.v[st.statcom_bus]);
    CHECK(st.statcom->iq0 == Approx(1.0 / vm).epsilon(1e-12));
    CHECK(st.pi_ctrl.kconst() == Approx(st.pi_ctrl.qref + st.pi_ctrl.kdroop * st.pi_ctrl.vref));
}

TEST_CASE("tcsc branch flow at the start equals the power-flow flow") {
    SimulationSetup s = both_devices(0.01);
    s.statcom.reset();
    SimulatorState st = initialize(s);
    const auto tr = run(st);
    const Branch& br = st.network.branches[st.tcsc_branch];
    const Phasor expected = branch_current(st.network, br, st.power_flow.v, br.from);
    CHECK(std::abs(tr.branch_current(br.name, br.from).v.front() - expected) < 1e-10);
    CHECK(br.kc == 0.3);
}

TEST_CASE("every sample is network consistent and lossless") {
    const auto tr = run(both_devices(4.0));
    const Network& net = tr.network;
    double kcl = 0.0, loss = 0.0, cur = 0.0;
    const auto& dkc = tr.state("TCSC.dkc");
    for (std::size_t n = 0; n < tr.size(); n += 7) {
        std::vector<Phasor> v(net.bus_count());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = tr.bus_v[i][n];
        std::vector<Phasor> net_inj(net.bus_count());
        for (std::size_t b = 0; b < net.branches.size(); ++b) {
            Branch br = net.branches[b];
            if (br.kind == BranchKind::tcsc) br.kc = tr.tcsc->kc0 + dkc[n];
            cur = std::max(cur, std::abs(tr.branch_i_from[b][n] - branch_current(net, br, v, br.from)));
            cur = std::max(cur, std::abs(tr.branch_i_to[b][n] - branch_current(net, br, v, br.to)));
            const Phasor sf = v[net.bus_index(br.from)] * std::conj(tr.branch_i_from[b][n]);
            const Phasor st = v[net.bus_index(br.to)] * std::conj(tr.branch_i_to[b][n]);
            loss = std::max(loss, std::abs(sf.real() + st.real()));
            net_inj[net.bus_index(br.from)] += tr.branch_i_from[b][n];
            net_inj[net.bus_index(br.to)] += tr.branch_i_to[b][n];
        }
        // Device injections plus the bus shunt must feed the branches.
        std::vector<Phasor> dev_inj(net.bus_count());
        for (const auto& d : tr.devices)
            for (const auto& term : d.terminals) {
                if (d.kind == DeviceKind::tcsc) continue;
                dev_inj[net.bus_index(term.bus)] += term.injection[n];
            }
        for (std::size_t i = 0; i < v.size(); ++i) {
            const Phasor shunt = Phasor(0.0, net.buses[i].shunt_b) * v[i];
            kcl = std::max(kcl, std::abs(dev_inj[i] - shunt - net_inj[i]));
        }
    }
    CHECK(cur < 1e-9);
    CHECK(loss < 1e-9);
    CHECK(kcl < 1e-9);
}

TEST_CASE("fixed compensation rings down in the inter-area band") {
    const ScenarioConfig c = preset("A-i");
    const auto tr = run(c.setup());
    const auto p = tr.branch_power("9-10", 10);
    const double f = 1.0 / dominant_period(tr.t, p, {2.1, 25.0});
    CHECK(f >= 0.4);
    CHECK(f <= 0.8);
    CHECK(envelope(tr.t, p, 20.0, 25.0) < envelope(tr.t, p, 2.1, 7.0));
}

TEST_CASE("reversed damping gain damps less than the designed gain") {
    const auto pos = run(preset("A-ii").setup());
    const auto neg = run(preset("A-iii").setup());
    const auto pp = pos.branch_power("9-10", 10), pn = neg.branch_power("9-10", 10);
    const double ratio_pos = envelope(pos.t, pp, 20.0, 25.0) / envelope(pos.t, pp, 2.1, 7.0);
    const double ratio_neg = envelope(neg.t, pn, 20.0, 25.0) / envelope(neg.t, pn, 2.1, 7.0);
    CHECK(ratio_neg > ratio_pos);
    CHECK(neg.events.empty());
}

TEST_CASE("halving the step barely moves the bus voltages") {
    SimulationSetup s = preset("A-ii").setup();
    s.duration = 6.0;
    const auto coarse = run(s);
    s.dt = 0.5e-3;
    const auto fine = run(s);
    double worst = 0.0;
    for (std::size_t i = 0; i < coarse.bus_v.size(); ++i)
        for (std::size_t n = 0; n < coarse.size(); ++n)
            worst = std::max(worst, std::abs(coarse.bus_v[i][n] - fine.bus_v[i][2 * n]));
    CHECK(worst < 1e-5);
}

TEST_CASE("large compensation requests are clamped and logged") {
    SimulationSetup s = preset("A-i").setup();
    s.tcsc->strategy = TcscStrategy::lag;
    s.tcsc->kp = 80.0;
    s.duration = 4.0;
    const auto tr = run(s);
    REQUIRE_FALSE(tr.events.empty());
    CHECK(tr.events.front().what.find("clamped") != std::string::npos);
    double worst = 0.0;
    for (double k : tr.state("TCSC.dkc")) worst = std::max(worst, std::abs(k));
    CHECK(worst <= 0.2 + 1e-12);
}

TEST_CASE("setup errors") {
    SimulationSetup s = preset("A-i").setup();
    s.dt = 0.0;
    CHECK_THROWS_AS(initialize(s), InputError);
    s = preset("A-i").setup();
    s.disturbances[0].t_start = 0.0;
    CHECK_THROWS_AS(initialize(s), InputError);
    s = preset("B-constI").setup();
    s.statcom->bus = 1;
    CHECK_THROWS_AS(initialize(s), InputError);
}
