#pragma once

// Bus/branch network model, admittance assembly, Newton-Raphson power flow and
// the per-step linear network solve used by the simulator.

#include "defsim/errors.hpp"
#include "defsim/numerics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace defsim {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

enum class BusKind { slack, pv, pq };
enum class BranchKind { line, transformer, tcsc };

inline const char* to_string(BusKind k) {
    switch (k) {
        case BusKind::slack: return "slack";
        case BusKind::pv: return "pv";
        case BusKind::pq: return "pq";
    }
    return "?";
}

inline const char* to_string(BranchKind k) {
    switch (k) {
        case BranchKind::line: return "line";
        case BranchKind::transformer: return "transformer";
        case BranchKind::tcsc: return "tcsc";
    }
    return "?";
}

struct Bus {
    int id = 0;
    BusKind kind = BusKind::pq;
    double base_kv = 230.0;
    double v_set = 1.0;      // magnitude set-point for slack/PV buses
    double angle_deg = 0.0;  // slack reference angle
    double p_gen = 0.0;      // scheduled generation (PV buses and PQ generators)
    double q_gen = 0.0;      // scheduled reactive generation on PQ buses
    double shunt_b = 0.0;    // fixed shunt susceptance (capacitor banks)

    bool operator==(const Bus&) const = default;
};

/// Series branch with optional line charging. A `tcsc` branch ignores r/x and
/// carries y = j (1 - kc) b0 with a live compensation level kc.
struct Branch {
    std::string name;
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double b_charging = 0.0;  // total line charging; half at each end
    BranchKind kind = BranchKind::line;
    double b0 = 0.0;  // tcsc nominal susceptance
    double kc = 0.0;  // tcsc live compensation level kc0 + dkc

    double b_shunt_half() const noexcept { return 0.5 * b_charging; }

    Phasor y_series(bool lossless) const {
        if (kind == BranchKind::tcsc) return {0.0, (1.0 - kc) * b0};
        const double rr = lossless ? 0.0 : r;
        return 1.0 / Phasor(rr, x);
    }

    bool operator==(const Branch&) const = default;
};

/// Classical machine data on the system base.
struct GeneratorData {
    std::string name;
    int bus = 0;
    double h = 0.0;         // inertia constant, s
    double d = 0.0;         // damping, pu torque / pu speed
    double xd_prime = 0.0;  // transient reactance, pu

    bool operator==(const GeneratorData&) const = default;
};

struct LoadData {
    std::string name;
    int bus = 0;
    double p = 0.0;
    double q = 0.0;

    bool operator==(const LoadData&) const = default;
};

struct Network {
    double base_mva = 100.0;
    bool lossless = true;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<GeneratorData> generators;
    std::vector<LoadData> loads;

    bool operator==(const Network&) const = default;

    std::size_t bus_count() const noexcept { return buses.size(); }

    std::optional<std::size_t> find_bus(int id) const {
        for (std::size_t i = 0; i < buses.size(); ++i)
            if (buses[i].id == id) return i;
        return std::nullopt;
    }

    std::size_t bus_index(int id) const {
        if (auto i = find_bus(id)) return *i;
        throw LookupError("unknown bus " + std::to_string(id));
    }

    std::optional<std::size_t> find_branch(const std::string& name) const {
        for (std::size_t i = 0; i < branches.size(); ++i)
            if (branches[i].name == name) return i;
        return std::nullopt;
    }

    std::size_t branch_index(const std::string& name) const {
        if (auto i = find_branch(name)) return *i;
        throw LookupError("unknown branch '" + name + "'");
    }

    std::size_t generator_index(const std::string& name) const {
        for (std::size_t i = 0; i < generators.size(); ++i)
            if (generators[i].name == name) return i;
        throw LookupError("unknown generator '" + name + "'");
    }

    std::size_t load_index(const std::string& name) const {
        for (std::size_t i = 0; i < loads.size(); ++i)
            if (loads[i].name == name) return i;
        throw LookupError("unknown load '" + name + "'");
    }
};

/// Checks endpoints, impedances and that every island holds exactly one slack bus.
inline void validate_topology(const Network& net) {
    const std::size_t n = net.bus_count();
    if (n == 0) throw StructuralError("network has no buses");
    for (const auto& br : net.branches) {
        if (!net.find_bus(br.from) || !net.find_bus(br.to))
            throw StructuralError("branch '" + br.name + "' references an unknown bus");
        if (br.from == br.to) throw StructuralError("branch '" + br.name + "' is a self loop");
        if (br.kind == BranchKind::tcsc) {
            if (br.b0 == 0.0 || br.kc >= 1.0)
                throw StructuralError("tcsc branch '" + br.name + "' has zero admittance");
        } else if (br.x == 0.0 && (net.lossless || br.r == 0.0)) {
            throw StructuralError("branch '" + br.name + "' has zero impedance");
        }
    }

    std::vector<int> island(n, -1);
    int count = 0;
    for (std::size_t s = 0; s < n; ++s) {
        if (island[s] >= 0) continue;
        std::vector<std::size_t> stack{s};
        island[s] = count;
        std::vector<int> members;
        while (!stack.empty()) {
            const std::size_t b = stack.back();
            stack.pop_back();
            members.push_back(net.buses[b].id);
            for (const auto& br : net.branches) {
                const std::size_t f = net.bus_index(br.from);
                const std::size_t t = net.bus_index(br.to);
                const std::size_t other = f == b ? t : (t == b ? f : n);
                if (other < n && island[other] < 0) {
                    island[other] = count;
                    stack.push_back(other);
                }
            }
        }
        int slacks = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (island[i] == count && net.buses[i].kind == BusKind::slack) ++slacks;
        if (slacks != 1) {
            std::sort(members.begin(), members.end());
            std::string ids;
            for (int id : members) ids += (ids.empty() ? "" : ",") + std::to_string(id);
            throw StructuralError("island {" + ids + "} has " + std::to_string(slacks) +
                                  " slack buses (expected exactly one)");
        }
        ++count;
    }
}

/// Stamps one branch into an admittance matrix.
inline void stamp_branch(ComplexMatrix& y, const Network& net, const Branch& br) {
    const auto f = static_cast<Eigen::Index>(net.bus_index(br.from));
    const auto t = static_cast<Eigen::Index>(net.bus_index(br.to));
    const Phasor ys = br.y_series(net.lossless);
    const Phasor ysh(0.0, br.b_shunt_half());
    y(f, f) += ys + ysh;
    y(t, t) += ys + ysh;
    y(f, t) -= ys;
    y(t, f) -= ys;
}

/// Bus admittance matrix of branches and fixed bus shunts (loads excluded).
inline ComplexMatrix build_ybus(const Network& net) {
    validate_topology(net);
    const auto n = static_cast<Eigen::Index>(net.bus_count());
    ComplexMatrix y = ComplexMatrix::Zero(n, n);
    for (const auto& br : net.branches) stamp_branch(y, net, br);
    for (Eigen::Index i = 0; i < n; ++i) y(i, i) += Phasor(0.0, net.buses[static_cast<std::size_t>(i)].shunt_b);
    return y;
}

/// Scheduled net injection per bus: generation minus load.
inline std::vector<Phasor> scheduled_injections(const Network& net) {
    std::vector<Phasor> s(net.bus_count());
    for (std::size_t i = 0; i < net.bus_count(); ++i) s[i] = {net.buses[i].p_gen, net.buses[i].q_gen};
    for (const auto& ld : net.loads) s[net.bus_index(ld.bus)] -= Phasor(ld.p, ld.q);
    return s;
}

/// Complex power injected into the network at every bus, S = V conj(Y V).
inline std::vector<Phasor> bus_injections(const ComplexMatrix& y, const std::vector<Phasor>& v) {
    const auto n = static_cast<Eigen::Index>(v.size());
    ComplexVector vv(n);
    for (Eigen::Index i = 0; i < n; ++i) vv(i) = v[static_cast<std::size_t>(i)];
    const ComplexVector cur = y * vv;
    std::vector<Phasor> s(v.size());
    for (Eigen::Index i = 0; i < n; ++i) s[static_cast<std::size_t>(i)] = vv(i) * std::conj(cur(i));
    return s;
}

struct PowerFlowSolution {
    std::vector<Phasor> v;
    double mismatch = 0.0;
    int iterations = 0;
};

struct PowerFlowOptions {
    double tolerance = 1e-11;
    int max_iterations = 50;
};

/// Polar Newton-Raphson load flow. Starts from V_set at PV/slack buses, 1 pu elsewhere,
/// slack angle as configured, all other angles zero.
inline PowerFlowSolution solve_power_flow(const Network& net, PowerFlowOptions opts = {}) {
    const ComplexMatrix y = build_ybus(net);
    const std::size_t n = net.bus_count();
    const std::vector<Phasor> sched = scheduled_injections(net);

    std::vector<double> vm(n), va(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& b = net.buses[i];
        vm[i] = b.kind == BusKind::pq ? 1.0 : b.v_set;
        va[i] = b.kind == BusKind::slack ? b.angle_deg * pi / 180.0 : 0.0;
    }

    std::vector<std::size_t> ang_idx, mag_idx;  // unknown angles / magnitudes
    for (std::size_t i = 0; i < n; ++i) {
        if (net.buses[i].kind != BusKind::slack) ang_idx.push_back(i);
        if (net.buses[i].kind == BusKind::pq) mag_idx.push_back(i);
    }
    const std::size_t na = ang_idx.size();
    const std::size_t nu = na + mag_idx.size();

    auto voltages = [&] {
        std::vector<Phasor> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = std::polar(vm[i], va[i]);
        return v;
    };
    auto mismatch = [&](std::vector<double>& f) {
        const auto s = bus_injections(y, voltages());
        f.assign(nu, 0.0);
        double worst = 0.0;
        for (std::size_t k = 0; k < na; ++k) {
            const std::size_t i = ang_idx[k];
            f[k] = sched[i].real() - s[i].real();
            worst = std::max(worst, std::abs(f[k]));
        }
        for (std::size_t k = 0; k < mag_idx.size(); ++k) {
            const std::size_t i = mag_idx[k];
            f[na + k] = sched[i].imag() - s[i].imag();
            worst = std::max(worst, std::abs(f[na + k]));
        }
        return worst;
    };

    std::vector<double> f;
    double worst = mismatch(f);
    int it = 0;
    while (worst > opts.tolerance) {
        if (it >= opts.max_iterations)
            throw ConvergenceError("power flow did not converge in " + std::to_string(it) +
                                       " iterations; final mismatch " + std::to_string(worst),
                                   worst, it);
        // Analytic Jacobian of (P, Q) with respect to (angle, magnitude).
        const auto v = voltages();
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nu), static_cast<Eigen::Index>(nu));
        std::vector<Phasor> cur(n);
        for (std::size_t i = 0; i < n; ++i) {
            Phasor acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) * v[k];
            cur[i] = acc;
        }
        auto dS = [&](std::size_t i, std::size_t k, bool wrt_angle) -> Phasor {
            // dS_i/dtheta_k and V_k dS_i/d|V_k| style partials via complex calculus.
            const Phasor yik = y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
            if (wrt_angle) {
                Phasor d = Phasor(0.0, -1.0) * v[i] * std::conj(yik * v[k]);
                if (i == k) d += Phasor(0.0, 1.0) * v[i] * std::conj(cur[i]);
                return d;
            }
            const Phasor unit_k = v[k] / vm[k];
            Phasor d = v[i] * std::conj(yik * unit_k);
            if (i == k) d += unit_k * std::conj(cur[i]);
            return d;
        };
        for (std::size_t r = 0; r < nu; ++r) {
            const bool p_row = r < na;
            const std::size_t i = p_row ? ang_idx[r] : mag_idx[r - na];
            for (std::size_t c = 0; c < nu; ++c) {
                const bool a_col = c < na;
                const std::size_t k = a_col ? ang_idx[c] : mag_idx[c - na];
                const Phasor d = dS(i, k, a_col);
                jac(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = p_row ? d.real() : d.imag();
            }
        }
        Eigen::VectorXd rhs(static_cast<Eigen::Index>(nu));
        for (std::size_t k = 0; k < nu; ++k) rhs(static_cast<Eigen::Index>(k)) = f[k];
        const Eigen::VectorXd dx = jac.partialPivLu().solve(rhs);
        for (std::size_t k = 0; k < na; ++k) va[ang_idx[k]] += dx(static_cast<Eigen::Index>(k));
        for (std::size_t k = 0; k < mag_idx.size(); ++k) vm[mag_idx[k]] += dx(static_cast<Eigen::Index>(na + k));
        ++it;
        worst = mismatch(f);
        if (!std::isfinite(worst))
            throw ConvergenceError("power flow diverged", worst, it);
    }
    return {voltages(), worst, it};
}

/// Dense LU of an augmented admittance matrix for repeated network solves.
class NetworkSolver {
public:
    NetworkSolver() = default;

    explicit NetworkSolver(const ComplexMatrix& y_aug, double time = 0.0) : y_(y_aug), lu_(y_aug) {
        if (!(lu_.rcond() > 1e-13))
            throw IntegrationFault("singular network admittance matrix", time);
    }

    ComplexVector solve(const ComplexVector& injections) const { return lu_.solve(injections); }

    const ComplexMatrix& matrix() const noexcept { return y_; }

    /// Largest per-bus Kirchhoff residual |Y V - I|.
    double residual(const ComplexVector& v, const ComplexVector& injections) const {
        return (y_ * v - injections).cwiseAbs().maxCoeff();
    }

private:
    ComplexMatrix y_;
    Eigen::PartialPivLU<ComplexMatrix> lu_;
};

/// Solves Y_aug V = I for the bus voltages.
inline ComplexVector network_solve(const ComplexMatrix& y_aug, const ComplexVector& injections,
                                   double time = 0.0) {
    return NetworkSolver(y_aug, time).solve(injections);
}

/// Current entering a branch at one of its ends, given the bus voltages.
inline Phasor branch_current(const Network& net, const Branch& br, const std::vector<Phasor>& v,
                             int at_bus) {
    const Phasor vf = v[net.bus_index(br.from)];
    const Phasor vt = v[net.bus_index(br.to)];
    const Phasor ys = br.y_series(net.lossless);
    const Phasor ysh(0.0, br.b_shunt_half());
    if (at_bus == br.from) return ys * (vf - vt) + ysh * vf;
    if (at_bus == br.to) return ys * (vt - vf) + ysh * vt;
    throw LookupError("bus " + std::to_string(at_bus) + " is not an end of branch '" + br.name + "'");
}

}  // namespace defsim
