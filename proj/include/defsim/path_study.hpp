#pragma once

// Path-dependence experiment on the TCSC energy integral: the voltage-difference
// phasor is driven from the same start to the same end point along two different
// paths, and the lag-controller term of the energy is evaluated along each.

#include "defsim/errors.hpp"
#include "defsim/numerics.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace defsim {

enum class PathId { I, II };

inline const char* to_string(PathId p) { return p == PathId::I ? "I" : "II"; }

/// Path I:  Ux = Ux0 + a t,        Uy = Uy0 + a t
/// Path II: Ux = Ux0 + (a t)^k,    Uy = Uy0 + (a t)^n
/// Both run over [0, 1/a] and meet at (Ux0 + 1, Uy0 + 1).
struct PathSpec {
    PathId path = PathId::I;
    double alpha = 1.0;
    int k = 3;
    int n = 5;
    double ux0 = 0.8;
    double uy0 = 0.6;

    double t1() const { return 1.0 / alpha; }
    double u0() const { return std::hypot(ux0, uy0); }
};

struct PathPoint {
    double ux = 0.0;
    double uy = 0.0;
    double u = 0.0;
};

inline void validate(const PathSpec& spec) {
    if (!(spec.alpha > 0.0) || !std::isfinite(spec.alpha)) throw DomainError("path: alpha must be positive");
    if (spec.k < 1 || spec.n < 1) throw DomainError("path: exponents k and n must be positive integers");
}

inline PathPoint path_point(const PathSpec& spec, double t) {
    validate(spec);
    const double t1 = spec.t1();
    // Tolerate rounding at the far end of a sampled grid.
    if (!(t >= 0.0) || t > t1 * (1.0 + 1e-12))
        throw DomainError("path: t = " + std::to_string(t) + " outside [0, " + std::to_string(t1) + "]");
    const double s = std::min(spec.alpha * t, 1.0);
    PathPoint p;
    if (spec.path == PathId::I) {
        p.ux = spec.ux0 + s;
        p.uy = spec.uy0 + s;
    } else {
        p.ux = spec.ux0 + std::pow(s, spec.k);
        p.uy = spec.uy0 + std::pow(s, spec.n);
    }
    p.u = std::hypot(p.ux, p.uy);
    return p;
}

enum class Kernel { lag, algebraic };

inline const char* to_string(Kernel k) { return k == Kernel::lag ? "lag" : "algebraic"; }

struct SecondTermOptions {
    Kernel kernel = Kernel::lag;
    double points_per_second = 1e4;
    double rel_tol = 1e-6;
    std::size_t max_steps = std::size_t{1} << 23;
};

struct SecondTerm {
    double value = 0.0;
    double error = 0.0;  // change of the extrapolated value at the last refinement
    std::size_t steps = 0;
};

namespace detail {

inline double second_term_raw(const PathSpec& spec, double tc, Kernel kernel, std::size_t steps) {
    const double u0 = spec.u0();
    auto du = [&spec, u0](double t) { return path_point(spec, t).u - u0; };
    return kernel == Kernel::lag ? nested_convolution_integral(du, u0, tc, spec.t1(), steps)
                                 : algebraic_energy_integral(du, u0, spec.t1(), steps);
}

}  // namespace detail

/// prefactor * int int exp(-(t - tau)/Tc) dU(tau) (U0 + dU(t)) dU'(t) dtau dt along
/// the path, with prefactor standing for b0 Kp / Tc. The algebraic kernel replaces
/// (1/Tc) int exp(...) dU dtau by dU (the Tc -> 0 limit), so its value is
/// prefactor * Tc * int dU (U0 + dU) dU' dt.
///
/// The step is halved until two successive Richardson-extrapolated values agree to
/// rel_tol; the lag quadrature is first order, the algebraic one second order.
inline SecondTerm eval_second_term(const PathSpec& spec, double tc, double prefactor,
                                   const SecondTermOptions& opt = {}) {
    validate(spec);
    if (!(tc > 0.0)) throw InputError("eval_second_term: Tc must be positive");
    SecondTerm out;
    if (prefactor == 0.0) return out;

    const double order = opt.kernel == Kernel::lag ? 1.0 : 2.0;
    const double scale = prefactor * (opt.kernel == Kernel::lag ? 1.0 : tc);
    const double factor = std::pow(2.0, order) - 1.0;

    std::size_t n = std::max<std::size_t>(static_cast<std::size_t>(std::ceil(opt.points_per_second * spec.t1())), 100);
    double coarse = detail::second_term_raw(spec, tc, opt.kernel, n);
    double fine = detail::second_term_raw(spec, tc, opt.kernel, 2 * n);
    double prev = fine + (fine - coarse) / factor;
    for (n *= 2; 2 * n <= opt.max_steps; n *= 2) {
        coarse = fine;
        fine = detail::second_term_raw(spec, tc, opt.kernel, 2 * n);
        const double extrap = fine + (fine - coarse) / factor;
        const double change = std::abs(extrap - prev);
        prev = extrap;
        if (change <= opt.rel_tol * std::abs(extrap) || extrap == 0.0) {
            out.value = scale * extrap;
            out.error = std::abs(scale) * change;
            out.steps = 2 * n;
            return out;
        }
    }
    throw ConvergenceError("eval_second_term: step halving did not reach the tolerance", std::abs(prev), 0);
}

struct PathResult {
    double alpha = 0.0;
    double value_I = 0.0;
    double value_II = 0.0;
    double delta = 0.0;
    double tolerance = 0.0;  // quadrature tolerance, rel_tol times the larger magnitude
};

/// Evaluates both paths for every alpha. `spec_template` supplies k, n and the
/// start point; its path and alpha fields are overwritten.
inline std::vector<PathResult> alpha_sweep(const std::vector<double>& alphas, const PathSpec& spec_template,
                                           double tc, double prefactor, const SecondTermOptions& opt = {}) {
    std::vector<PathResult> out;
    out.reserve(alphas.size());
    for (double a : alphas) {
        if (!(a > 0.0)) throw DomainError("alpha_sweep: alpha must be positive");
        PathSpec s = spec_template;
        s.alpha = a;
        s.path = PathId::I;
        const auto one = eval_second_term(s, tc, prefactor, opt);
        s.path = PathId::II;
        const auto two = eval_second_term(s, tc, prefactor, opt);
        PathResult r;
        r.alpha = a;
        r.value_I = one.value;
        r.value_II = two.value;
        r.delta = two.value - one.value;
        r.tolerance = opt.rel_tol * std::max(std::abs(one.value), std::abs(two.value));
        out.push_back(r);
    }
    return out;
}

}  // namespace defsim
