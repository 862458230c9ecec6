#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "kinglab/king_model.hpp"
#include "kinglab/orbit.hpp"
#include "kinglab/perturbation.hpp"
#include "kinglab/math/rng.hpp"

using namespace kinglab;

namespace {

const KingModel& king2() {
    static const KingModel m = [] {
        KingParameters p;
        p.w0 = 2.0;
        return build_king(p);
    }();
    return m;
}

/// naive midpoint-rule oracle for the radial time integral on a clipped
/// interval [r- + d, r+ - d]; the clipped tails are bounded analytically
double naive_time_integral(const PointMassModel& m, double E, double L, double rm, double rp) {
    const double d = 1e-8 * (rp - rm);
    const double a = rm + d, b = rp - d;
    const std::size_t n = 1000000;
    const double h = (b - a) / n;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = a + (i + 0.5) * h;
        const double psi = m.potential_at(r) + 0.5 * L / (r * r);
        s += h / std::sqrt(2.0 * (E - psi));
    }
    return s;
}

} // namespace

TEST_CASE("find_r_L on the Kepler stub is L/M") {
    PointMassModel kep{1.7, 0.0};
    for (double L : {0.01, 0.3, 2.0}) {
        const auto rl = find_r_L(kep, L);
        CHECK(rl[0] == doctest::Approx(L / kep.M).epsilon(1e-10));
        // psi_min = -M/r + L/(2r^2) at r = L/M: -M^2/(2L)
        CHECK(rl[1] == doctest::Approx(-kep.M * kep.M / (2.0 * L)).epsilon(1e-10));
        CHECK(rl[2] > 0.0);
    }
}

TEST_CASE("find_r_L on the King model: sign change oracle and L -> 0 limit") {
    const KingModel& m = king2();
    double prev = 1e300;
    for (double frac : {0.4, 0.2, 0.1, 0.05, 0.01, 1e-3, 1e-5}) {
        const double L = frac * m.M * m.R;
        const auto rl = find_r_L(m, L);
        EffectivePotential<KingModel> psi{m, L};
        CHECK(psi.slope(rl[0] * (1 - 1e-6)) < 0.0);
        CHECK(psi.slope(rl[0] * (1 + 1e-6)) > 0.0);
        CHECK(rl[2] == doctest::Approx(4.0 * pi * m.density_at(rl[0]) +
                                       L / std::pow(rl[0], 4)).epsilon(1e-12));
        CHECK(rl[0] < prev);  // r_L decreases monotonically with L
        prev = rl[0];
    }
    CHECK(prev < 3e-2 * m.R);  // r_L ~ L^{1/4} -> 0 as L -> 0
}

TEST_CASE("turning points match the Kepler quadratic roots") {
    PointMassModel kep{1.3, 0.0};
    math::Rng rng(99);
    for (int i = 0; i < 50; ++i) {
        const double L = rng.uniform(0.05, 1.0);
        const auto rl = find_r_L(kep, L);
        const double E = rng.uniform(rl[1] * 0.999, rl[1] * 0.01);  // psi_min < E < 0
        auto [rm, rp] = turning_points(kep, E, L, rl[0], rl[1]);
        const double disc = std::sqrt(kep.M * kep.M + 2.0 * E * L);
        const double rm_exact = (kep.M - disc) / (-2.0 * E);
        const double rp_exact = (kep.M + disc) / (-2.0 * E);
        CHECK(rm == doctest::Approx(rm_exact).epsilon(1e-10));
        CHECK(rp == doctest::Approx(rp_exact).epsilon(1e-10));
        // the well is genuinely below E between the roots
        EffectivePotential<PointMassModel> psi{kep, L};
        CHECK(psi.value(0.5 * (rm + rp)) < E);
    }
}

TEST_CASE("turning points: near-circular degeneracy and error paths") {
    const KingModel& m = king2();
    const double L = 0.1 * m.M * m.R;
    const auto rl = find_r_L(m, L);
    auto [rm, rp] = turning_points(m, rl[1] + 1e-12, L, rl[0], rl[1]);
    CHECK(std::abs(rm - rl[0]) < 1e-4);
    CHECK(std::abs(rp - rl[0]) < 1e-4);
    CHECK(rm <= rl[0]);
    CHECK(rp >= rl[0]);
    CHECK_THROWS_AS(turning_points(m, rl[1] - 1e-9, L, rl[0], rl[1]), NoOrbit);
    CHECK_THROWS_AS(turning_points(m, 0.1, L, rl[0], rl[1]), NoOrbit);
}

TEST_CASE("turning points are monotone in E (King model)") {
    const KingModel& m = king2();
    const double L = 0.05 * m.M * m.R;
    const auto rl = find_r_L(m, L);
    double prev_rm = 1e300, prev_rp = 0.0;
    for (int j = 1; j <= 12; ++j) {
        const double E = rl[1] + (m.E0 - rl[1]) * j / 13.0;
        auto [rm, rp] = turning_points(m, E, L, rl[0], rl[1]);
        CHECK(rm < prev_rm);
        CHECK(rp > prev_rp);
        prev_rm = rm;
        prev_rp = rp;
        EffectivePotential<KingModel> psi{m, L};
        CHECK(std::abs(psi.value(rm) - E) < 1e-8 * (1.0 + std::abs(E)));
        CHECK(std::abs(psi.value(rp) - E) < 1e-8 * (1.0 + std::abs(E)));
    }
}

TEST_CASE("radial time integral: Kepler half period") {
    PointMassModel kep{1.0, 0.0};
    for (double L : {0.2, 0.5}) {
        for (double Efrac : {0.9, 0.5, 0.2}) {
            const auto rl = find_r_L(kep, L);
            const double E = rl[1] * Efrac;
            OrbitRecord rec = solve_orbit(kep, E, L);
            const double want = pi * kep.M / std::pow(-2.0 * E, 1.5);
            CHECK(rec.time_integral == doctest::Approx(want).epsilon(1e-6));
        }
    }
}

TEST_CASE("radial time integral agrees with the naive midpoint oracle") {
    PointMassModel kep{1.0, 0.0};
    const double L = 0.37;
    const auto rl = find_r_L(kep, L);
    const double E = rl[1] * 0.55;
    OrbitRecord rec = solve_orbit(kep, E, L);
    const double oracle = naive_time_integral(kep, E, L, rec.r_minus, rec.r_plus);
    // the clipped oracle misses O(sqrt(d)) of the endpoint mass
    CHECK(rec.time_integral == doctest::Approx(oracle).epsilon(1e-3));
    CHECK(oracle < rec.time_integral);
}

TEST_CASE("radial time integral: near-circular harmonic limit") {
    const KingModel& m = king2();
    const double L = 0.2 * m.M * m.R;
    const auto rl = find_r_L(m, L);
    const double harmonic = pi / std::sqrt(rl[2]);
    {
        OrbitRecord rec = solve_orbit(m, rl[1] + 1e-8, L);
        CHECK(rec.time_integral == doctest::Approx(harmonic).epsilon(1e-3));
    }
    {
        // short-circuit branch
        OrbitRecord rec;
        rec.E = rl[1] + 1e-12;
        rec.L = L;
        rec.r_L = rl[0];
        rec.psi_min = rl[1];
        rec.psi_second = rl[2];
        rec.r_minus = rec.r_plus = rl[0];
        CHECK(radial_time_integral(m, rec) == doctest::Approx(harmonic).epsilon(1e-12));
    }
}

TEST_CASE("radial time integral: quadrature budget convergence") {
    const KingModel& m = king2();
    const double L = 0.03 * m.M * m.R;
    const auto rl = find_r_L(m, L);
    OrbitRecord rec;
    rec.E = rl[1] + 0.7 * (m.E0 - rl[1]);
    rec.L = L;
    rec.r_L = rl[0]; rec.psi_min = rl[1]; rec.psi_second = rl[2];
    auto [rm, rp] = turning_points(m, rec.E, L, rl[0], rl[1]);
    rec.r_minus = rm; rec.r_plus = rp;
    const double coarse = radial_time_integral(m, rec, 1e-8, 6);
    const double fine = radial_time_integral(m, rec, 1e-10, 9);
    CHECK(std::abs(coarse - fine) / fine < 1e-6);
}

TEST_CASE("orbit line integral: trivial fields") {
    const KingModel& m = king2();
    const double L = 0.1 * m.M * m.R;
    const auto rl = find_r_L(m, L);
    OrbitRecord rec = solve_orbit(m, rl[1] + 0.6 * (m.E0 - rl[1]), L);
    auto one = [](double, double, double) { return 1.0; };
    auto zero = [](double, double, double) { return 0.0; };
    CHECK(orbit_line_integral(m, rec, one, rec.r_plus) ==
          doctest::Approx(rec.time_integral).epsilon(1e-8));
    CHECK(orbit_line_integral(m, rec, zero, rec.r_plus) == 0.0);
    // cumulative value at r_minus is zero, and sits below the full period
    CHECK(orbit_line_integral(m, rec, one, rec.r_minus) == doctest::Approx(0.0));
    const double at_rl = orbit_line_integral(m, rec, one, rec.r_L);
    CHECK(at_rl > 0.0);
    CHECK(at_rl < rec.time_integral);
}

TEST_CASE("orbit line integral: bracket fields integrate to zero over full orbits") {
    const KingModel& m = king2();
    Generator h(m, 1.0, {0.8, -0.4, 0.3, 0.5});
    auto g = bracket_with_f0(m, h);
    math::Rng rng(2024);
    for (int i = 0; i < 12; ++i) {
        const double L = rng.uniform(0.02, 0.5) * m.M * m.R;
        const auto rl = find_r_L(m, L);
        if (rl[1] >= m.E0 - 0.06 * m.W0) continue;
        const double E = rl[1] + rng.uniform(0.1, 0.95) * (m.E0 - 0.06 * m.W0 - rl[1]);
        OrbitRecord rec = solve_orbit(m, E, L);
        const double full = orbit_line_integral(m, rec, g, rec.r_plus);
        double gmax = 0.0;
        for (int q = 0; q <= 10; ++q) {
            const double r = rec.r_minus + (rec.r_plus - rec.r_minus) * q / 10.0;
            const double ww = std::sqrt(std::fmax(2.0 * (E - m.potential_at(r) - 0.5 * L / (r * r)), 0.0));
            gmax = std::fmax(gmax, std::abs(g(r, ww, L)));
        }
        // oracle: the integrand is d/dr of h along the orbit; h vanishes at
        // both turning points (w = 0, h odd), so the integral must vanish
        CHECK(std::abs(full) < 1e-6 * std::fmax(gmax * rec.time_integral, 1e-300));
    }
}

TEST_CASE("empirical orbit bounds are finite and positive") {
    const KingModel& m = king2();
    const auto bounds = empirical_orbit_bounds(m, 0.05 * m.W0, 1e-2 * m.M * m.R, 8, 8);
    CHECK(bounds.orbits > 0);
    CHECK(bounds.C > 0.0);
    CHECK(std::isfinite(bounds.C));
    CHECK(bounds.eta > 0.0);
}
