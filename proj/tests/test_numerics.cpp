#include "defsim/numerics.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace defsim;
using Catch::Approx;

namespace {

Series<Phasor> phasor_series(const std::vector<double>& t, const std::function<Phasor(double)>& f) {
    Series<Phasor> s{t, {}};
    for (double x : t) s.v.push_back(f(x));
    return s;
}

}  // namespace

TEST_CASE("phasor magnitude and conjugate") {
    const Phasor p(0.6, -0.8);
    CHECK(std::abs(p) == Approx(1.0));
    CHECK(std::conj(std::conj(p)) == p);
}

TEST_CASE("energy integral vanishes for constant magnitude through a susceptance") {
    const auto t = uniform_axis(0.0, 1e-3, 5001);
    const double w = 2.0 * pi * 0.7;
    const auto v = phasor_series(t, [&](double x) { return std::polar(1.0, w * x); });
    const auto i = phasor_series(t, [&](double x) { return Phasor(0.0, -0.7) * std::polar(1.0, w * x); });
    const auto e = cum_energy_integral(i, v);
    double worst = 0.0;
    for (double x : e.v) worst = std::max(worst, std::abs(x));
    CHECK(worst < 1e-12);
}

TEST_CASE("energy integral of zero current is zero") {
    const auto t = uniform_axis(0.0, 1e-3, 100);
    const auto v = phasor_series(t, [](double x) { return Phasor(1.0 + x, x); });
    const auto i = phasor_series(t, [](double) { return Phasor(0.0, 0.0); });
    for (double x : cum_energy_integral(i, v).v) CHECK(x == 0.0);
}

TEST_CASE("energy integral through a susceptance follows -b dU^2 / 2 and closes over a cycle") {
    // I = j b V with b = -0.7 gives W = -b (U^2 - U0^2) / 2.
    const double b = -0.7, w = 2.0 * pi;
    const auto t = uniform_axis(0.0, 1e-3, 1001);  // one period
    auto u = [&](double x) { return 1.0 + 0.1 * std::sin(w * x); };
    const auto v = phasor_series(t, [&](double x) { return Phasor(u(x), 0.0); });
    const auto i = phasor_series(t, [&](double x) { return Phasor(0.0, b) * Phasor(u(x), 0.0); });
    const auto e = cum_energy_integral(i, v);
    REQUIRE(e.v.front() == 0.0);
    for (std::size_t n = 0; n < t.size(); n += 50) CHECK(e.v[n] == Approx(-b * (u(t[n]) * u(t[n]) - 1.0) / 2.0).margin(1e-13));
    CHECK(std::abs(e.v.back()) < 1e-13);
}

TEST_CASE("energy integral of a nonlinear potential current closes to second order") {
    // I = j b(U) V with b depending on |V|: the integrand -b(U) U dU has a potential.
    auto closure = [](std::size_t steps) {
        const double w = 2.0 * pi;
        const auto t = uniform_axis(0.0, 1.0 / static_cast<double>(steps), steps + 1);
        auto vf = [&](double x) { return std::polar(1.0 + 0.2 * std::sin(w * x), 0.3 * std::sin(2.0 * w * x)); };
        const auto v = phasor_series(t, vf);
        const auto i = phasor_series(t, [&](double x) {
            const Phasor vv = vf(x);
            const double uu = std::abs(vv);
            return Phasor(0.0, -2.0 * (1.0 + 3.0 * uu * uu)) * vv;
        });
        return std::abs(cum_energy_integral(i, v).v.back());
    };
    const double e1 = closure(200), e2 = closure(400), e3 = closure(800);
    const double h1 = 1.0 / 200.0;
    CHECK(e1 <= 10.0 * h1 * h1);
    CHECK(e2 <= e1 / 3.5 + 1e-14);
    CHECK(e3 <= e2 / 3.5 + 1e-14);
}

TEST_CASE("energy integral rejects bad input") {
    const auto t = uniform_axis(0.0, 1e-3, 10);
    const auto v = phasor_series(t, [](double) { return Phasor(1.0, 0.0); });
    Series<Phasor> shorter = v;
    shorter.t.pop_back();
    shorter.v.pop_back();
    CHECK_THROWS_AS(cum_energy_integral(shorter, v), InputError);
    Series<Phasor> uneven = v;
    uneven.t[5] += 3e-4;
    CHECK_THROWS_AS(cum_energy_integral(uneven, v), InputError);
    Series<Phasor> shifted = v;
    for (double& x : shifted.t) x += 5e-4;
    CHECK_THROWS_AS(cum_energy_integral(shifted, v), InputError);
}

TEST_CASE("nested convolution integral trivial cases") {
    CHECK(nested_convolution_integral([](double) { return 0.0; }, 1.0, 0.1, 1.0, 1000) == 0.0);
    // Constant dU: the derivative vanishes everywhere except the one-sided end points,
    // which are also zero for a constant.
    CHECK(nested_convolution_integral([](double) { return 0.3; }, 1.0, 0.1, 1.0, 1000) == 0.0);
}

TEST_CASE("nested convolution integral per-cycle value for a sinusoid") {
    // Steady state of c' = -c/Tc + A sin wt is c = A Tc (sin wt - wTc cos wt) / (1 + w^2 Tc^2).
    // Over one cycle, int c (U0 + dU) dU' dt = -pi A^2 w Tc^2 U0 / (1 + w^2 Tc^2); the cubic
    // term averages to zero.
    const double a = 0.02, f = 0.6, w = 2.0 * pi * f, tc = 0.1, u0 = 1.0;
    const double period = 1.0 / f;
    auto du = [&](double t) { return a * std::sin(w * t); };
    const std::size_t per_cycle = 20000;
    const double i20 = nested_convolution_integral(du, u0, tc, 20 * period, 20 * per_cycle);
    const double i19 = nested_convolution_integral(du, u0, tc, 19 * period, 19 * per_cycle);
    const double oracle = -pi * a * a * w * tc * tc * u0 / (1.0 + w * w * tc * tc);
    CHECK((i20 - i19) == Approx(oracle).epsilon(2e-3));
}

TEST_CASE("nested convolution integral converges at first order") {
    auto du = [](double t) { return 0.1 * std::sin(3.0 * t) + 0.05 * t * t; };
    const std::size_t n = 2000;
    const double reference = nested_convolution_integral(du, 1.0, 0.2, 2.0, 20 * n);
    const double e1 = std::abs(nested_convolution_integral(du, 1.0, 0.2, 2.0, n) - reference);
    const double e2 = std::abs(nested_convolution_integral(du, 1.0, 0.2, 2.0, 2 * n) - reference);
    const double ratio = e1 / e2;
    CHECK(ratio >= 1.7);
    CHECK(ratio <= 2.3);
}

TEST_CASE("nested convolution integral rejects bad input") {
    auto du = [](double t) { return t; };
    CHECK_THROWS_AS(nested_convolution_integral(du, 1.0, 0.0, 1.0, 1000), InputError);
    CHECK_THROWS_AS(nested_convolution_integral(du, 1.0, 0.1, 0.0, 1000), InputError);
    CHECK_THROWS_AS(nested_convolution_integral(du, 1.0, 0.1, 1.0, 99), InputError);
    CHECK_THROWS_AS(nested_convolution_integral([](double t) { return t > 0.5 ? NAN : t; }, 1.0, 0.1, 1.0, 1000),
                    InputError);
}

TEST_CASE("algebraic energy integral matches its closed form") {
    // int dU (U0 + dU) d(dU) = U0 dU^2 / 2 + dU^3 / 3
    auto du = [](double t) { return 0.4 * t + 0.3 * std::sin(5.0 * t); };
    const double end = du(1.5);
    const double exact = 1.2 * end * end / 2.0 + end * end * end / 3.0;
    CHECK(algebraic_energy_integral(du, 1.2, 1.5, 20000) == Approx(exact).epsilon(1e-6));
}

TEST_CASE("rk4 keeps a constant state") {
    const auto x = rk4_step(std::vector<double>{5.0}, [](double, const std::vector<double>&) { return std::vector<double>{0.0}; },
                            0.0, 0.1);
    CHECK(x[0] == 5.0);
}

TEST_CASE("rk4 matches the exponential for a decaying state") {
    const double tc = 0.3, dt = tc / 100.0;
    const auto x = rk4_step(std::vector<double>{2.0},
                            [&](double, const std::vector<double>& s) { return std::vector<double>{-s[0] / tc}; }, 0.0, dt);
    CHECK(std::abs(x[0] / (2.0 * std::exp(-dt / tc)) - 1.0) < 1e-10);
}

TEST_CASE("rk4 on x' = lambda x follows the fifth-order remainder") {
    // One RK4 step multiplies by the quartic Taylor polynomial of exp(z); the Lagrange
    // remainder bounds the error by |z|^5 / 120 * exp(max(z, 0)).
    for (double z : {-0.1, -0.05, -0.01, 0.01, 0.04, 0.1}) {
        const auto x = rk4_step(std::vector<double>{1.0},
                                [&](double, const std::vector<double>& s) { return std::vector<double>{z * s[0]}; }, 0.0, 1.0);
        const double err = std::abs(x[0] - std::exp(z));
        CHECK(err <= std::pow(std::abs(z), 5) / 120.0 * std::exp(std::max(z, 0.0)) + 1e-16);
        CHECK(err >= 0.9 * std::pow(std::abs(z), 5) / 120.0 * std::exp(std::min(z, 0.0)));
        if (std::abs(z) <= 0.04) CHECK(err / std::exp(z) < 1e-9);
    }
}

TEST_CASE("rk4 preserves the magnitude of a rotation to fifth order per step") {
    const double w = 1.0;
    auto f = [&](double, const std::vector<double>& s) { return std::vector<double>{-w * s[1], w * s[0]}; };
    for (double dt : {0.1, 0.05}) {
        const auto x = rk4_step(std::vector<double>{1.0, 0.0}, f, 0.0, dt);
        const double drift = std::abs(std::hypot(x[0], x[1]) - 1.0);
        CHECK(drift <= std::pow(dt, 5));
    }
}

TEST_CASE("rk4 reports the time of a non-finite derivative") {
    auto f = [](double t, const std::vector<double>&) { return std::vector<double>{t > 0.2 ? NAN : 1.0}; };
    try {
        rk4_step(std::vector<double>{0.0}, f, 0.0, 0.1);
        rk4_step(std::vector<double>{0.0}, f, 0.2, 0.1);
        FAIL("expected an integration fault");
    } catch (const IntegrationFault& e) {
        CHECK(e.time() == Approx(0.25));
    }
}
