#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "kinglab/math/interp.hpp"
#include "kinglab/math/ode.hpp"
#include "kinglab/math/quadrature.hpp"
#include "kinglab/math/rng.hpp"
#include "kinglab/math/roots.hpp"

using namespace kinglab;

namespace {
double pi_val() { return 3.14159265358979323846; }
}

TEST_CASE("gauss-legendre integrates polynomials exactly") {
    const auto& gl = math::gl8();
    // degree 15 is exact for an 8-point rule
    const double got = gl.integrate([](double x) { return std::pow(x, 15) + 3 * x * x; }, 0.0, 2.0);
    const double want = std::pow(2.0, 16) / 16.0 + 8.0;
    CHECK(got == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("adaptive simpson resolves peaked smooth integrands") {
    // narrow gaussian: integral over [0,1] of exp(-400 (x - 0.3)^2)
    const double want = std::sqrt(pi_val() / 400.0) *
                        0.5 * (std::erf(0.7 * 20.0) + std::erf(0.3 * 20.0));
    const double got = math::adaptive_simpson(
        [](double x) { return std::exp(-400.0 * (x - 0.3) * (x - 0.3)); }, 0.0, 1.0, 1e-13);
    CHECK(got == doctest::Approx(want).epsilon(1e-11));
    CHECK_THROWS_AS(math::adaptive_simpson([](double x) { return std::sqrt(std::abs(x)); },
                                           0.0, 1.0, 1e-16, 3),
                    QuadratureNonConvergence);
}

TEST_CASE("simpson weights and cumulative integral are 4th order") {
    const std::size_t n = 65;
    const double h = 1.0 / double(n - 1);
    auto f = [](double x) { return std::exp(x); };
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = f(i * h);
    const auto w = math::simpson_weights(n, h);
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += w[i] * y[i];
    CHECK(s == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-9));

    const auto cum = math::cumulative_integral(y, h);
    double max_err = 0;
    for (std::size_t i = 0; i < n; ++i)
        max_err = std::fmax(max_err, std::abs(cum[i] - (std::exp(i * h) - 1.0)));
    CHECK(max_err < 1e-8);
}

TEST_CASE("brent finds roots to the requested bracket width") {
    const double r = math::brent([](double x) { return std::cos(x) - x; }, 0.0, 1.0, 1e-14);
    CHECK(std::abs(std::cos(r) - r) < 1e-12);
}

TEST_CASE("newton_bracketed respects orientation") {
    auto fdf_inc = [](double x) { return std::pair<double, double>(x * x - 2.0, 2.0 * x); };
    const double ri = math::newton_bracketed(fdf_inc, 0.5, 3.0, 1.0, 1e-14, true);
    CHECK(ri == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    auto fdf_dec = [](double x) { return std::pair<double, double>(2.0 - x * x, -2.0 * x); };
    const double rd = math::newton_bracketed(fdf_dec, 0.5, 3.0, 2.5, 1e-14, false);
    CHECK(rd == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("dormand-prince integrates the harmonic oscillator") {
    using St = math::State<2>;
    std::vector<math::OdeStep<2>> steps;
    auto rhs = [](double, const St& y) -> St { return {y[1], -y[0]}; };
    math::integrate_dp45<2>(rhs, 0.0, {1.0, 0.0}, 10.0, 1e-12, 1e-14, 10.0, steps,
                            [](double, const St&) { return false; });
    const auto& last = steps.back();
    CHECK(last.y1[0] == doctest::Approx(std::cos(10.0)).epsilon(1e-9));
    CHECK(last.y1[1] == doctest::Approx(-std::sin(10.0)).epsilon(1e-9));
    // dense output mid-step
    const auto& mid = steps[steps.size() / 2];
    const double tm = 0.5 * (mid.t0 + mid.t1);
    CHECK(mid.eval(0, tm) == doctest::Approx(std::cos(tm)).epsilon(1e-7));
}

TEST_CASE("monotone cubic preserves monotone data and matches derivatives") {
    const std::size_t n = 21;
    std::vector<double> y(n), dy(n);
    const double dx = 0.1;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = i * dx;
        y[i] = std::tanh(x);
        dy[i] = 1.0 / std::cosh(x) / std::cosh(x);
    }
    math::MonotoneCubic c(0.0, dx, y, dy);
    double prev = c(0.0);
    for (int i = 1; i <= 400; ++i) {
        const double x = 2.0 * i / 400.0;
        const double v = c(x);
        CHECK(v >= prev - 1e-15);
        prev = v;
        CHECK(v == doctest::Approx(std::tanh(x)).epsilon(1e-5));
    }
    CHECK(c.derivative(1.0) == doctest::Approx(1.0 / std::cosh(1.0) / std::cosh(1.0)).epsilon(1e-4));
}

TEST_CASE("rng stream is deterministic and uniform-ish") {
    math::Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
    math::Rng r(7);
    double mean = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) mean += r.uniform();
    mean /= n;
    CHECK(std::abs(mean - 0.5) < 0.01);
}
