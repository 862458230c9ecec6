#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "kinglab/king_model.hpp"
#include "kinglab/orbit.hpp"
#include "kinglab/simulation.hpp"
#include "kinglab/math/quadrature.hpp"
#include "kinglab/math/roots.hpp"

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

/// largest L whose circular-orbit energy lies below E (well exists)
double L_star(const KingModel& m, double E) {
    double lo = 1e-12, hi = 1e-12;
    while (find_r_L(m, hi)[1] < E) hi *= 2.0;
    return math::brent([&](double L) { return find_r_L(m, L)[1] - E; }, lo, hi, 1e-12);
}

/// dM/dE = 8 pi^2 f0(E) int_0^{L*(E)} T(E, L) dL — the density-of-states
/// route through the orbit module, independent of the sampler
double mass_per_energy(const KingModel& m, double E) {
    const double Ls = L_star(m, E);
    const auto& gl = math::gl16();
    const double integral = gl.integrate([&](double L) {
        const auto rl = find_r_L(m, L);
        OrbitRecord rec;
        rec.E = E; rec.L = L;
        rec.r_L = rl[0]; rec.psi_min = rl[1]; rec.psi_second = rl[2];
        auto [rm, rp] = turning_points(m, E, L, rl[0], rl[1]);
        rec.r_minus = rm; rec.r_plus = rp;
        return radial_time_integral(m, rec, 1e-7, 6);
    }, 1e-10, Ls * (1.0 - 1e-12));
    return 8.0 * pi * pi * m.f0_of_energy(E) * integral;
}

} // namespace

TEST_CASE("sampling: exact mass, support and determinism") {
    const KingModel& m = king2();
    const ParticleEnsemble ens = sample_steady_state(m, 20000, 42);
    CHECK(ens.size() == 20000);
    CHECK(ens.total_mass == m.M);
    double wsum = 0.0;
    for (double w : ens.weight) wsum += w;
    CHECK(wsum == doctest::Approx(m.M).epsilon(1e-12));
    for (std::size_t i = 0; i < ens.size(); ++i) {
        const double E = particle_energy(m, ens.r[i], ens.w[i], ens.L[i]);
        CHECK(E <= m.E0);
        CHECK(ens.f[i] == m.f0_of_energy(E));
    }
    const ParticleEnsemble again = sample_steady_state(m, 20000, 42);
    CHECK(again.r == ens.r);
    CHECK(again.L == ens.L);
}

TEST_CASE("sampling: chi^2 of the energy marginal against the orbit oracle") {
    const KingModel& m = king2();
    const std::size_t N = 100000;
    const ParticleEnsemble ens = sample_steady_state(m, N, 1234);

    const int nbins = 12;
    const double E_lo = m.E0 - m.W0, span = m.W0;
    // expected bin masses: integrate dM/dE with Gauss-Legendre per bin
    std::vector<double> expected(nbins, 0.0);
    const auto& gl = math::gl8();
    double total = 0.0;
    for (int b = 0; b < nbins; ++b) {
        const double a = E_lo + span * b / nbins;
        const double c = E_lo + span * (b + 1) / nbins;
        expected[b] = gl.integrate([&](double E) { return mass_per_energy(m, E); }, a, c);
        total += expected[b];
    }
    CHECK(total == doctest::Approx(m.M).epsilon(1e-3));  // DoS route recovers the mass

    std::vector<double> counts(nbins, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        const double E = particle_energy(m, ens.r[i], ens.w[i], ens.L[i]);
        int b = int((E - E_lo) / span * nbins);
        if (b < 0) b = 0;
        if (b >= nbins) b = nbins - 1;
        counts[b] += 1.0;
    }
    double chi2 = 0.0;
    for (int b = 0; b < nbins; ++b) {
        const double mean = double(N) * expected[b] / total;
        chi2 += (counts[b] - mean) * (counts[b] - mean) / mean;
    }
    // 99.9% quantile of chi^2 with 11 dof is 31.3
    CHECK(chi2 < 31.3);
}

TEST_CASE("single orbiter around a heavy shell: period matches the Kepler oracle") {
    PointMassModel kep{1.0, 0.0};
    const double L = 0.3;
    const auto rl = find_r_L(kep, L);
    const double E = rl[1] * 0.6;
    const OrbitRecord rec = solve_orbit(kep, E, L);
    const double period = 2.0 * rec.time_integral;

    ParticleEnsemble ens;
    ens.push_back(1e-8, 0.0, 0.0, 1.0, 1.0);           // central mass, at rest
    ens.push_back(rec.r_plus, 0.0, L, 1.0, 1e-9);      // test orbiter at apocenter
    SimConfig cfg;
    cfg.N = 1000;  // unused by step()
    const double dt = period / 2000.0;
    SortedField sf = field_from_particles(ens);

    double t = 0.0, prev_w = 0.0, t10 = 0.0;
    int crossings = 0;
    for (long n = 0; n < 25000 && crossings < 10; ++n) {
        sf = step(ens, sf, dt, cfg, 1e-3, 1e6);
        t += dt;
        const double w = ens.w[1];
        if (prev_w > 0.0 && w <= 0.0) {
            // apocenter passage: linear interpolation of the w zero crossing
            ++crossings;
            if (crossings == 10) t10 = t - dt * w / (w - prev_w);
        }
        prev_w = w;
    }
    REQUIRE(crossings == 10);
    CHECK(t10 == doctest::Approx(10.0 * period).epsilon(1e-4));
}

TEST_CASE("two isolated shells: second-order energy convergence") {
    // two light shells bound to a heavy central one, on non-crossing orbits
    auto drift = [&](double dt) {
        ParticleEnsemble ens;
        ens.push_back(1e-8, 0.0, 0.0, 1.0, 1.0);       // central
        ens.push_back(0.30, 0.05, 0.30, 1.0, 0.05);    // near-circular inner
        ens.push_back(1.10, -0.02, 1.155, 1.0, 0.05);  // near-circular outer
        SimConfig cfg;
        SortedField sf = field_from_particles(ens);
        const double H0 = energy(ens, sf).H;
        double worst = 0.0;
        const long steps = std::lround(2.0 / dt);  // about one inner dynamical time
        for (long n = 0; n < steps; ++n) {
            sf = step(ens, sf, dt, cfg, 1e-3, 1e6);
            worst = std::fmax(worst, std::abs(energy(ens, sf).H - H0));
        }
        return worst / std::abs(H0);
    };
    const double d1 = drift(2e-3);
    const double d2 = drift(1e-3);
    CHECK(d1 < 1e-6);                // conserved to 1e-6 per dynamical time
    CHECK(d1 / d2 > 2.5);            // 2nd order: halving dt -> ~4x smaller
    CHECK(d1 / d2 < 6.0);
}

TEST_CASE("frozen-field leapfrog is time reversible") {
    const KingModel& m = king2();
    ParticleEnsemble ens = sample_steady_state(m, 2000, 99);
    const ParticleEnsemble start = ens;
    SimConfig cfg;
    cfg.frozen_field = true;
    cfg.fixed_substeps = true;
    const SortedField sf = field_from_particles(ens);
    const std::vector<double> frozen_r = ens.r;
    const double dt = 1e-3;
    const int nsteps = 200;
    for (int n = 0; n < nsteps; ++n) step(ens, sf, dt, cfg, 1e-3, 1e6, &frozen_r);
    for (int n = 0; n < nsteps; ++n) step(ens, sf, -dt, cfg, 1e-3, 1e6, &frozen_r);
    double worst = 0.0;
    for (std::size_t i = 0; i < ens.size(); ++i) {
        worst = std::fmax(worst, std::abs(ens.r[i] - start.r[i]));
        worst = std::fmax(worst, std::abs(ens.w[i] - start.w[i]));
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("step blowup raises when a particle leaves the box") {
    ParticleEnsemble ens;
    ens.push_back(1.0, 1e6, 0.0, 1.0, 1.0);
    SimConfig cfg;
    const SortedField sf = field_from_particles(ens);
    CHECK_THROWS_AS(step(ens, sf, 1.0, cfg, 1e-3, 10.0), StepBlowup);
}

TEST_CASE("short self-consistent run: conservation and bounded deviation") {
    const KingModel& m = king2();
    ParticleEnsemble ens = sample_steady_state(m, 4000, 2025);
    const std::vector<double> L0 = ens.L, f0 = ens.f, wg0 = ens.weight;

    SimConfig cfg;
    cfg.N = 4000;
    cfg.tdyn_horizon = 2.0;
    cfg.steps_per_tdyn = 300;
    cfg.output_stride = 30;
    const DiagnosticsSeries series = run(ens, m, cfg);

    REQUIRE(series.rows.size() > 3);
    CHECK(series.T_dyn > 0.0);
    // exact invariants
    CHECK(ens.L == L0);
    CHECK(ens.f == f0);
    CHECK(ens.weight == wg0);
    // conservation and boundedness
    const double H0 = series.rows.front().H;
    const double d0 = series.rows.front().d;
    double mean_w = 0.0;
    for (double w : ens.w) mean_w += w;
    mean_w /= double(ens.size());
    CHECK(std::abs(mean_w) < 0.05);  // statistical w-symmetry preserved
    for (const auto& row : series.rows) {
        CHECK(std::abs(row.H - H0) < 2e-4 * std::abs(H0));
        CHECK(row.d < 3.0 * d0);
        for (int b = 0; b < CasimirBattery::size; ++b)
            CHECK(row.battery[b] == series.rows.front().battery[b]);
    }
    // time column strictly increasing
    for (std::size_t i = 1; i < series.rows.size(); ++i)
        CHECK(series.rows[i].t > series.rows[i - 1].t);
}
