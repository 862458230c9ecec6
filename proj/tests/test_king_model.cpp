#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "kinglab/king_model.hpp"
#include "kinglab/math/quadrature.hpp"

using namespace kinglab;

namespace {

/// independent high-order quadrature of the defining integral
/// 4 pi sqrt(2) int_0^w (e^{w-eps} - 1) sqrt(eps) d eps
double density_oracle(double w) {
    if (w <= 0) return 0.0;
    // substitute eps = w t^2 to remove the sqrt endpoint: d eps = 2 w t dt
    return 4.0 * pi * std::sqrt(2.0) *
           math::adaptive_simpson(
               [w](double t) {
                   const double eps = w * t * t;
                   return std::expm1(w - eps) * std::sqrt(eps) * 2.0 * w * t;
               },
               0.0, 1.0, 1e-14 * std::fmax(1.0, std::exp(w)));
}

} // namespace

TEST_CASE("density_of_depth matches the quadrature oracle") {
    for (double w : {1e-3, 0.1, 0.5, 1.0, 2.0, 3.9, 4.1, 6.0, 9.0}) {
        const double got = density_of_depth(w);
        const double want = density_oracle(w);
        CHECK(got == doctest::Approx(want).epsilon(1e-8));
    }
}

TEST_CASE("density_of_depth edge and Taylor behavior") {
    CHECK(density_of_depth(0.0) == 0.0);
    CHECK(density_of_depth(-1.0) == 0.0);
    const double w = 1e-3;
    const double leading = 16.0 * std::sqrt(2.0) * pi / 15.0 * std::pow(w, 2.5);
    CHECK(density_of_depth(w) == doctest::Approx(leading).epsilon(1e-2));
    // strictly increasing in the depth
    double prev = 0.0;
    for (int i = 1; i <= 50; ++i) {
        const double v = density_of_depth(0.1 * i);
        CHECK(v > prev);
        prev = v;
    }
}

TEST_CASE("ddensity_of_depth is the derivative") {
    for (double w : {0.3, 1.0, 2.5, 5.0}) {
        const double h = 1e-6;
        const double num = (density_of_depth(w + h) - density_of_depth(w - h)) / (2 * h);
        CHECK(ddensity_of_depth(w) == doctest::Approx(num).epsilon(1e-7));
    }
}

TEST_CASE("build_king satisfies the steady-state invariants at W0 = 2") {
    KingParameters params;
    params.w0 = 2.0;
    const KingModel m = build_king(params);

    CHECK(m.W0 == 2.0);
    CHECK(m.E0 < 0.0);
    CHECK(m.R > 0.0);
    CHECK(m.M > 0.0);
    CHECK(m.f0_sup == doctest::Approx(std::expm1(2.0)).epsilon(1e-15));
    CHECK(m.C0 == 1.0 / (2.0 + 2.0 * m.f0_sup));

    // self-consistency of the exterior match: U0(R) = E0 = -M/R
    CHECK(m.potential_at(m.R) == doctest::Approx(m.E0).epsilon(1e-12));
    CHECK(m.E0 == doctest::Approx(-m.M / m.R).epsilon(1e-14));
    CHECK(m.potential_at(0.0) == doctest::Approx(m.E0 - m.W0).epsilon(1e-12));

    // monotone profiles
    for (std::size_t i = 0; i + 1 < m.grid_r.size(); ++i) {
        CHECK(m.grid_u0[i] < m.grid_u0[i + 1]);
        CHECK(m.grid_m0[i] <= m.grid_m0[i + 1]);
        CHECK(m.grid_rho0[i] >= m.grid_rho0[i + 1]);
    }
    CHECK(m.grid_rho0.front() > 0.0);   // rho0(0) > 0
    CHECK(m.grid_m0.front() == 0.0);
    CHECK(m.mass_at(2 * m.R) == m.M);
    CHECK(m.potential_at(2 * m.R) == doctest::Approx(-m.M / (2 * m.R)).epsilon(1e-15));
    CHECK(m.density_at(1.5 * m.R) == 0.0);

    // U0'(r) = m0(r)/r^2 at grid nodes through the interpolation surface
    for (std::size_t i = 1; i < m.grid_r.size(); i += 97) {
        const double r = m.grid_r[i];
        CHECK(m.dpotential_at(r) ==
              doctest::Approx(m.grid_m0[i] / (r * r)).epsilon(1e-10));
    }
}

TEST_CASE("build_king: semilinear Poisson residual on the grid") {
    KingParameters params;
    params.w0 = 2.0;
    const KingModel m = build_king(params);
    // residual |dm/dr - 4 pi r^2 rho| / (1 + m) via 4th-order differences of
    // the grid values (uses values only, not the stored slopes)
    const double h = m.grid_r[1] - m.grid_r[0];
    double worst = 0.0;
    for (std::size_t i = 2; i + 2 < m.grid_r.size(); ++i) {
        const double dm = (8.0 * (m.grid_m0[i + 1] - m.grid_m0[i - 1]) -
                           (m.grid_m0[i + 2] - m.grid_m0[i - 2])) / (12.0 * h);
        const double r = m.grid_r[i];
        const double resid = std::abs(dm - 4.0 * pi * r * r * m.grid_rho0[i]) / (1.0 + m.grid_m0[i]);
        worst = std::fmax(worst, resid);
    }
    CHECK(worst < 1e-7);  // acceptance bound is 1e-6; keep margin

}

TEST_CASE("build_king: fixed-point residual of the density") {
    KingParameters params;
    params.w0 = 2.0;
    const KingModel m = build_king(params);
    for (std::size_t i = 0; i < m.grid_r.size(); i += 53) {
        const double want = density_of_depth(m.E0 - m.grid_u0[i]);
        CHECK(m.grid_rho0[i] == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("build_king: refinement stability of M and R") {
    KingParameters p1;
    p1.w0 = 2.0;
    KingParameters p2 = p1;
    p2.grid_size = 2 * p1.grid_size - 1;
    const KingModel a = build_king(p1);
    const KingModel b = build_king(p2);
    CHECK(std::abs(a.M - b.M) / a.M < 4e-6);
    CHECK(std::abs(a.R - b.R) / a.R < 4e-6);
}

TEST_CASE("build_king: vacuum limit W0 -> 0") {
    double prev_M = -1.0;
    for (double w0 : {1e-3, 2e-3, 4e-3}) {
        KingParameters p;
        p.w0 = w0;
        p.r_max_hint = 400.0;
        const KingModel m = build_king(p);
        CHECK(std::isfinite(m.R));
        CHECK(m.M > prev_M);  // M monotone in W0 near zero
        prev_M = m.M;
        CHECK(m.M < 1.0);
    }
}

TEST_CASE("build_king error paths") {
    KingParameters p;
    p.w0 = 2.0;
    p.r_max_hint = 1e-2;
    CHECK_THROWS_AS(build_king(p), DepthNeverVanishes);
    KingParameters bad;
    bad.w0 = -1.0;
    CHECK_THROWS_AS(build_king(bad), ConfigError);
    bad = KingParameters{};
    bad.grid_size = 10;
    CHECK_THROWS_AS(build_king(bad), ConfigError);
}

TEST_CASE("f0_of_energy closed form") {
    KingParameters params;
    params.w0 = 2.0;
    const KingModel m = build_king(params);
    CHECK(m.f0_of_energy(m.E0) == 0.0);
    CHECK(m.f0_of_energy(m.E0 + 0.5) == 0.0);
    CHECK(m.f0_of_energy(m.E0 - m.W0) == doctest::Approx(m.f0_sup).epsilon(1e-14));
    CHECK(m.f0_of_energy(m.E0 - 1.0) == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-14));
    CHECK(m.df0_of_energy(m.E0 - 1.0) == doctest::Approx(-std::exp(1.0)).epsilon(1e-14));
    CHECK(m.df0_of_energy(m.E0 + 0.1) == 0.0);
}
