#pragma once

// Shared numerical kernels: phasor type, uniformly sampled series,
// cumulative energy quadrature, nested convolution quadrature and RK4.

#include "defsim/errors.hpp"

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace defsim {

/// Complex per-unit quantity in rectangular form (voltage, current, admittance).
using Phasor = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846;

/// Uniformly sampled time series.
template <class T>
struct Series {
    std::vector<double> t;
    std::vector<T> v;

    std::size_t size() const noexcept { return v.size(); }
    bool empty() const noexcept { return v.empty(); }
    double step() const { return t.size() >= 2 ? t[1] - t[0] : 0.0; }
};

/// Builds the time axis t0 + i*dt for `count` samples.
inline std::vector<double> uniform_axis(double t0, double dt, std::size_t count) {
    std::vector<double> t(count);
    for (std::size_t i = 0; i < count; ++i) t[i] = t0 + static_cast<double>(i) * dt;
    return t;
}

/// Throws InputError unless the axis has at least two samples and a constant positive step.
inline void require_uniform(const std::vector<double>& t, const char* what) {
    if (t.size() < 2) throw InputError(std::string(what) + ": series needs at least two samples");
    const double dt = t[1] - t[0];
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw InputError(std::string(what) + ": time axis must be strictly increasing");
    const double tol = 1e-9 * std::max(dt, std::abs(t.back()) * 1e-3);
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (std::abs((t[i] - t[i - 1]) - dt) > tol)
            throw InputError(std::string(what) + ": non-uniform sampling at index " +
                             std::to_string(i));
    }
}

template <class T>
void require_valid(const Series<T>& s, const char* what) {
    if (s.t.size() != s.v.size())
        throw InputError(std::string(what) + ": time and value lengths differ");
    require_uniform(s.t, what);
}

/// Cumulative energy W[n] = sum Im(conj(I[n-1/2]) * (V[n] - V[n-1])), W[0] = 0,
/// with the midpoint current taken as the average of the two adjacent samples.
/// I is the current flowing from the measurement bus into the element, so W is
/// the energy entering the element.
inline Series<double> cum_energy_integral(const Series<Phasor>& current,
                                          const Series<Phasor>& voltage) {
    require_valid(current, "cum_energy_integral(I)");
    require_valid(voltage, "cum_energy_integral(V)");
    if (current.size() != voltage.size())
        throw InputError("cum_energy_integral: current and voltage lengths differ");
    const double tol = 1e-9 * current.step();
    if (std::abs(current.t.front() - voltage.t.front()) > tol ||
        std::abs(current.step() - voltage.step()) > tol)
        throw InputError("cum_energy_integral: time axes are not aligned");

    Series<double> w{current.t, std::vector<double>(current.size(), 0.0)};
    double acc = 0.0;
    for (std::size_t n = 1; n < current.size(); ++n) {
        const Phasor mid = 0.5 * (current.v[n] + current.v[n - 1]);
        acc += std::imag(std::conj(mid) * (voltage.v[n] - voltage.v[n - 1]));
        w.v[n] = acc;
    }
    return w;
}

/// Trapezoidal cumulative integral of a(t) db(t): sum 0.5*(a[n]+a[n-1])*(b[n]-b[n-1]).
inline std::vector<double> cum_stieltjes(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw InputError("cum_stieltjes: lengths differ");
    std::vector<double> out(a.size(), 0.0);
    double acc = 0.0;
    for (std::size_t n = 1; n < a.size(); ++n) {
        acc += 0.5 * (a[n] + a[n - 1]) * (b[n] - b[n - 1]);
        out[n] = acc;
    }
    return out;
}

namespace detail {

// Samples f on n+1 equally spaced points of [0, t1] and returns values plus
// their time derivative (central differences inside, one-sided at the ends).
inline void sample_with_derivative(const std::function<double(double)>& f, double t1, std::size_t n,
                                   std::vector<double>& u, std::vector<double>& du) {
    const double h = t1 / static_cast<double>(n);
    u.resize(n + 1);
    du.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        u[i] = f(static_cast<double>(i) * h);
        if (!std::isfinite(u[i]))
            throw InputError("non-finite sample at t = " + std::to_string(static_cast<double>(i) * h));
    }
    du[0] = (u[1] - u[0]) / h;
    du[n] = (u[n] - u[n - 1]) / h;
    for (std::size_t i = 1; i < n; ++i) du[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
}

inline double trapezoid(const std::vector<double>& f, double h) {
    double s = 0.5 * (f.front() + f.back());
    for (std::size_t i = 1; i + 1 < f.size(); ++i) s += f[i];
    return s * h;
}

}  // namespace detail

/// Evaluates  int_0^t1 int_0^t exp(-(t - tau)/tc) dU(tau) (u0 + dU(t)) dU'(t) dtau dt.
///
/// The inner convolution c(t) obeys c' = -c/tc + dU and is advanced with the
/// exact zero-order-hold recursion c[n] = a c[n-1] + tc (1 - a) dU[n-1],
/// a = exp(-h/tc); the outer integral is a trapezoidal sum. The scheme is
/// first order in h, dominated by the hold.
inline double nested_convolution_integral(const std::function<double(double)>& delta_u, double u0,
                                          double tc, double t1, std::size_t steps) {
    if (!(tc > 0.0)) throw InputError("nested_convolution_integral: Tc must be positive");
    if (!(t1 > 0.0)) throw InputError("nested_convolution_integral: t1 must be positive");
    if (steps < 100) throw InputError("nested_convolution_integral: need at least 100 steps");

    std::vector<double> u, du;
    detail::sample_with_derivative(delta_u, t1, steps, u, du);
    const double h = t1 / static_cast<double>(steps);
    const double a = std::exp(-h / tc);
    const double gain = tc * (1.0 - a);

    std::vector<double> f(steps + 1);
    double conv = 0.0;
    f[0] = 0.0;
    for (std::size_t i = 1; i <= steps; ++i) {
        conv = a * conv + gain * u[i - 1];
        f[i] = conv * (u0 + u[i]) * du[i];
    }
    return detail::trapezoid(f, h);
}

/// Same outer rule as nested_convolution_integral with the convolution replaced by
/// dU itself:  int_0^t1 dU (u0 + dU) dU' dt. The integrand is an exact differential,
/// so the result depends only on dU(t1) (second-order accurate in h).
inline double algebraic_energy_integral(const std::function<double(double)>& delta_u, double u0,
                                        double t1, std::size_t steps) {
    if (!(t1 > 0.0)) throw InputError("algebraic_energy_integral: t1 must be positive");
    if (steps < 100) throw InputError("algebraic_energy_integral: need at least 100 steps");
    std::vector<double> u, du;
    detail::sample_with_derivative(delta_u, t1, steps, u, du);
    std::vector<double> f(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) f[i] = u[i] * (u0 + u[i]) * du[i];
    return detail::trapezoid(f, t1 / static_cast<double>(steps));
}

/// One classical Runge-Kutta step of x' = deriv(t, x). Throws IntegrationFault
/// carrying the stage time if any derivative component is not finite.
template <class Deriv>
std::vector<double> rk4_step(const std::vector<double>& x, Deriv&& deriv, double t, double dt) {
    if (!(dt > 0.0)) throw InputError("rk4_step: dt must be positive");
    const std::size_t n = x.size();
    auto eval = [&](double ts, const std::vector<double>& xs) {
        std::vector<double> d = deriv(ts, xs);
        if (d.size() != n) throw InputError("rk4_step: derivative has wrong dimension");
        for (double v : d)
            if (!std::isfinite(v)) throw IntegrationFault("non-finite state derivative", ts);
        return d;
    };
    auto axpy = [n](const std::vector<double>& a, double s, const std::vector<double>& b) {
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i) r[i] = a[i] + s * b[i];
        return r;
    };

    const auto k1 = eval(t, x);
    const auto k2 = eval(t + 0.5 * dt, axpy(x, 0.5 * dt, k1));
    const auto k3 = eval(t + 0.5 * dt, axpy(x, 0.5 * dt, k2));
    const auto k4 = eval(t + dt, axpy(x, dt, k3));
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return out;
}

}  // namespace defsim
