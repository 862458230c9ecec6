#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "kinglab/king_model.hpp"
#include "kinglab/perturbation.hpp"
#include "kinglab/phase_grid.hpp"
#include "kinglab/stability.hpp"
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

const PhaseGrid& grid97() {
    static const PhaseGrid g = PhaseGrid::covering(king2(), 1.15, 97, 97, 49);
    return g;
}

/// deliberately even-in-w object with the generator surface (negative control)
struct EvenFake {
    const KingModel* m;
    const KingModel& model() const { return *m; }
    double value(double r, double w, double) const { return w * w * r; }
    void partials(double, double w, double, double& Hr, double& Hw) const {
        Hr = w * w;
        Hw = 2 * w;
    }
    double mu(double, double, double) const { return 0; }
    void mu_partials(double, double, double, double& a, double& b) const { a = b = 0; }
};

} // namespace

TEST_CASE("quadratic form: zero field and odd-in-w negative control") {
    const KingModel& m = king2();
    auto zero = [](double, double, double) { return 0.0; };
    const auto rep0 = quadratic_form(m, grid97(), zero);
    CHECK(rep0.value == 0.0);
    CHECK(rep0.first_term == 0.0);
    CHECK(rep0.field_norm2 == 0.0);

    // an odd-in-w field has zero spatial density: no field term, positive form
    auto odd = [&](double r, double w, double L) {
        const double E = particle_energy(m, r, w, L);
        return E < m.E0 ? w * std::exp(m.E0 - E) * (1.0 - r / m.R) : 0.0;
    };
    const auto rep = quadratic_form(m, grid97(), odd);
    CHECK(rep.first_term > 0.0);
    CHECK(rep.field_norm2 < 1e-8 * rep.first_term);
    CHECK(rep.value == doctest::Approx(rep.first_term).epsilon(1e-8));
}

TEST_CASE("quadratic form raises on support violations") {
    const KingModel& m = king2();
    auto bad = [&](double r, double, double) { return r < 1.1 * m.R ? 1.0 : 0.0; };
    CHECK_THROWS_AS(quadratic_form(m, grid97(), bad), SupportViolation);
}

TEST_CASE("density-moment identity: -int w^2 phi0' dv = rho0 across 50 radii") {
    const KingModel& m = king2();
    double worst = 0.0;
    for (int i = 1; i <= 50; ++i) {
        const double r = m.R * i / 51.0;
        const double lhs = density_moment_lhs(m, r);
        const double rhs = m.density_at(r);
        worst = std::fmax(worst, std::abs(lhs - rhs) / rhs);
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("bracket decomposition identity at random interior points") {
    const KingModel& m = king2();
    math::Rng rng(404);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double r = rng.uniform(0.05, 0.95) * m.R;
        const double w = rng.uniform(0.1, 1.5);
        const double L = rng.uniform(1e-3, 0.5) * 2 * r * r * m.W0;
        const auto chk = check_bracket_decomposition(m, r, w, L);
        worst = std::fmax(worst, chk.rel_err);
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("dual-route field norm: rho route vs U_h' route") {
    const KingModel& m = king2();
    Generator h(m, 1.0, {0.8, -0.3, 0.2, 0.4});
    auto g = bracket_with_f0(m, h);
    const auto qf = quadratic_form(m, grid97(), g);
    const double direct = field_norm2_bracket_route(m, h);
    CHECK(qf.field_norm2 == doctest::Approx(direct).epsilon(1e-4));
}

TEST_CASE("bracket potential derivative: parity and total bracket mass") {
    const KingModel& m = king2();
    // even-in-w h gives an odd integrand: U_h' vanishes identically
    auto heven = [&](double r, double w, double L) {
        const double E = particle_energy(m, r, w, L);
        return E < m.E0 ? w * w * (1 - r / m.R) : 0.0;
    };
    for (double r : {0.2 * m.R, 0.5 * m.R, 0.8 * m.R})
        CHECK(std::abs(bracket_potential_derivative(m, heven, r)) < 1e-12);

    // total bracket mass vanishes: m_g(inf) = -r^2 U_h' -> 0 at the edge
    Generator h(m, 1.0, {0.5, 0.5, -0.3, 0.1});
    auto g = bracket_with_f0(m, h);
    const auto mu = radial_shell_density(grid97(), g);
    const auto mg = math::cumulative_integral(mu, grid97().dr());
    double mu_abs_int = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) mu_abs_int += std::abs(mu[i]) * grid97().dr();
    CHECK(std::abs(mg.back()) < 1e-4 * mu_abs_int);
}

TEST_CASE("antonov bound: trivial, randomized generators, parity control") {
    const KingModel& m = king2();
    math::Rng rng(2718);
    for (int i = 0; i < 8; ++i) {
        Generator h = make_random_generator(m, rng);
        const AntonovReport rep = antonov_bound_check(m, h, grid97());
        CHECK(rep.rhs > 0.0);  // strictly positive for h != 0
        CHECK(rep.margin >= -1e-4 * rep.scale);
    }
    EvenFake fake{&m};
    CHECK_THROWS_AS(antonov_bound_check(m, fake, grid97()), ParityViolation);
}

TEST_CASE("reconstruction round trip recovers the generator on the cutoff region") {
    const KingModel& m = king2();
    const CutoffRegion cutoff = CutoffRegion::defaults(m);
    // note eps_fraction of the generator must exceed the cutoff margin so
    // that h* is supported where the reconstruction is performed
    Generator hstar(m, 1.0, {0.6, -0.4, 0.3, 0.2});
    auto g = bracket_with_f0(m, hstar);
    const PhaseGrid grid = PhaseGrid::covering(m, 1.05, 65, 65, 33);
    const Reconstruction rec = reconstruct_h(m, g, cutoff, grid);
    CHECK(rec.max_orth_residual < 1e-6);

    // relative L2 error over the cutoff region
    double num = 0.0, den = 0.0;
    const GridWeights wt(grid);
    for (std::size_t i = 0; i < grid.nr; ++i)
        for (std::size_t j = 0; j < grid.nw; ++j)
            for (std::size_t k = 0; k < grid.nl; ++k) {
                const double r = grid.r(i), w = grid.w(j), L = grid.L(k);
                if (r <= 0.0) continue;
                const double E = particle_energy(m, r, w, L);
                if (!cutoff.contains(E, L, m.E0)) continue;
                const double hv = rec.h.at(i, j, k);
                const double hs = hstar.value(r, w, L);
                const double wgt = wt.wr[i] * wt.ww[j] * wt.wl[k];
                num += wgt * (hv - hs) * (hv - hs);
                den += wgt * hs * hs;
            }
    CHECK(den > 0.0);
    CHECK(std::sqrt(num / den) < 1e-3);

    // oddness in w by construction
    for (std::size_t i = 1; i < grid.nr; i += 7)
        for (std::size_t j = 0; j < grid.nw; ++j)
            for (std::size_t k = 0; k < grid.nl; k += 5)
                CHECK(rec.h.at(i, j, k) == -rec.h.at(i, grid.nw - 1 - j, k));
}

TEST_CASE("reconstruction rejects non-bracket inputs") {
    const KingModel& m = king2();
    const CutoffRegion cutoff = CutoffRegion::defaults(m);
    // an even, positive bump is not in the range of the bracket: its
    // full-orbit integrals are strictly positive
    auto bump = [&](double r, double w, double L) {
        const double E = particle_energy(m, r, w, L);
        return E < m.E0 ? std::exp(m.E0 - E) - 1.0 : 0.0;
    };
    const PhaseGrid grid = PhaseGrid::covering(m, 1.05, 33, 33, 17);
    CHECK_THROWS_AS(reconstruct_h(m, bump, cutoff, grid), OrthogonalityViolation);
}

TEST_CASE("weak identity holds for a battery of test functions") {
    const KingModel& m = king2();
    const CutoffRegion cutoff = CutoffRegion::defaults(m);
    Generator hstar(m, 1.0, {0.7, -0.2, 0.25, 0.35});
    auto g = bracket_with_f0(m, hstar);

    struct ConstPsi {
        double operator()(double, double, double) const { return 1.0; }
        void partials(double, double, double, double& a, double& b) const { a = b = 0; }
    };
    struct R2Psi {
        double R;
        double operator()(double r, double, double) const { return (r / R) * (r / R); }
        void partials(double r, double, double, double& a, double& b) const {
            a = 2 * r / (R * R);
            b = 0;
        }
    };
    struct W2Psi {
        double operator()(double, double w, double) const { return w * w; }
        void partials(double, double w, double, double& a, double& b) const {
            a = 0;
            b = 2 * w;
        }
    };
    struct LPsi {
        double operator()(double, double, double L) const { return std::exp(-L); }
        void partials(double, double, double, double& a, double& b) const { a = b = 0; }
    };
    struct RWPsi {  // odd: both sides vanish by parity
        double operator()(double r, double w, double) const { return r * w; }
        void partials(double r, double w, double, double& a, double& b) const {
            a = w;
            b = r;
        }
    };

    const WeakIdentityReport r1 = weak_identity_check(m, g, cutoff, ConstPsi{});
    CHECK(r1.residual < 1e-6);
    const WeakIdentityReport r2 = weak_identity_check(m, g, cutoff, R2Psi{m.R});
    CHECK(r2.residual < 1e-3);
    CHECK(std::abs(r2.lhs) > 0.0);  // non-vacuous: both sides genuinely nonzero
    const WeakIdentityReport r3 = weak_identity_check(m, g, cutoff, W2Psi{});
    CHECK(r3.residual < 1e-3);
    const WeakIdentityReport r4 = weak_identity_check(m, g, cutoff, LPsi{});
    CHECK(r4.residual < 1e-3);
    const WeakIdentityReport r5 = weak_identity_check(m, g, cutoff, RWPsi{});
    CHECK(r5.residual < 1e-3);
}
