#ifndef KINGLAB_VERIFY_HPP
#define KINGLAB_VERIFY_HPP

#include <cmath>
#include <string>
#include <vector>

#include "kinglab/functionals.hpp"
#include "kinglab/king_model.hpp"
#include "kinglab/orbit.hpp"
#include "kinglab/perturbation.hpp"
#include "kinglab/phase_grid.hpp"
#include "kinglab/simulation.hpp"
#include "kinglab/stability.hpp"
#include "kinglab/math/rng.hpp"

namespace kinglab {

/// One verification row: both sides of the identity or inequality, the
/// tolerance and the scale it was measured against. Never a bare pass/fail.
struct CheckRow {
    std::string name;
    double lhs = 0, rhs = 0, tol = 0, scale = 1;
    bool pass = false;
};

inline CheckRow make_leq_row(std::string name, double lhs, double rhs, double tol, double scale) {
    CheckRow row{std::move(name), lhs, rhs, tol, scale, false};
    row.pass = lhs <= rhs + tol * scale;
    return row;
}

struct VerifyOptions {
    int antonov_generators = 8;      ///< 50 at full check level
    int roundtrip_generators = 2;    ///< 10 at full check level
    int weak_identity_tests = 5;
    int identity_amplitudes = 1;     ///< 3 at full check level
    std::uint64_t seed = 12345;
    std::size_t grid_nr = 129, grid_nw = 129, grid_nl = 65;

    static VerifyOptions fast() { return {}; }
    static VerifyOptions full() {
        VerifyOptions o;
        o.antonov_generators = 50;
        o.roundtrip_generators = 10;
        o.identity_amplitudes = 3;
        return o;
    }
};

namespace verify_detail {

/// test functions for the weak (distributional) form of the bracket equation
struct PsiConst {
    double operator()(double, double, double) const { return 1.0; }
    void partials(double, double, double, double& a, double& b) const { a = b = 0; }
};
struct PsiR2 {
    double R;
    double operator()(double r, double, double) const { return (r / R) * (r / R); }
    void partials(double r, double, double, double& a, double& b) const {
        a = 2 * r / (R * R);
        b = 0;
    }
};
struct PsiW2 {
    double operator()(double, double w, double) const { return w * w; }
    void partials(double, double w, double, double& a, double& b) const { a = 0; b = 2 * w; }
};
struct PsiExpL {
    double operator()(double, double, double L) const { return std::exp(-L); }
    void partials(double, double, double, double& a, double& b) const { a = b = 0; }
};
struct PsiRW {
    double operator()(double r, double w, double) const { return r * w; }
    void partials(double r, double w, double, double& a, double& b) const { a = w; b = r; }
};

/// pointwise convexity audit of a representation at random support points
template <class F>
int convexity_violations(const KingModel& model, F&& f, std::uint64_t seed, int n_points) {
    math::Rng rng(seed);
    int violations = 0;
    const double wm = std::sqrt(2.0 * model.W0);
    for (int i = 0; i < n_points; ++i) {
        const double r = rng.uniform(1e-3, 1.0) * model.R;
        const double w = rng.uniform(-wm, wm);
        const double L = rng.uniform(0.0, 1.0) * 2.0 * r * r * model.W0;
        const double E = particle_energy(model, r, w, L);
        const double v = f(r, w, L), v0 = model.f0_of_energy(E);
        const double lhs = phi0_casimir(v) - phi0_casimir(v0) + (E - model.E0) * (v - v0);
        const double rhs = model.C0 * (v - v0) * (v - v0);
        if (lhs < rhs - 1e-12 * (1.0 + std::abs(lhs))) ++violations;
    }
    return violations;
}

/// smallest flow amplitude with d(f_s, f0) in a usable window; deterministic
/// for a fixed model and generator
inline double calibrate_amplitude(const KingModel& model, const Generator& gen) {
    const double scale = model.M * model.M / model.R;
    double s = 0.25;
    for (int it = 0; it < 12; ++it) {
        auto fs = flowed_state_evaluator(model, gen, s, 32);
        const double d = aligned_distance(model, fs, 97).d;
        if (d > 1e-2 * scale) { s *= 0.6; continue; }
        if (d < 1e-3 * scale) { s *= 1.6; continue; }
        break;
    }
    return s;
}

} // namespace verify_detail

/// ---- per-criterion sections; each appends rows to the shared list ----

/// steady-state build contract: residual, monotonicity, exterior match,
/// grid-refinement stability
inline void verify_king_build(const KingModel& model, const KingParameters& params,
                              std::vector<CheckRow>& rows) {
    const double h = model.grid_r[1] - model.grid_r[0];
    double worst = 0.0;
    for (std::size_t i = 2; i + 2 < model.grid_r.size(); ++i) {
        const double dm = (8.0 * (model.grid_m0[i + 1] - model.grid_m0[i - 1]) -
                           (model.grid_m0[i + 2] - model.grid_m0[i - 2])) / (12.0 * h);
        const double r = model.grid_r[i];
        worst = std::fmax(worst, std::abs(dm - 4.0 * pi * r * r * model.grid_rho0[i]) /
                                     (1.0 + model.grid_m0[i]));
    }
    rows.push_back(make_leq_row("king.poisson_residual", worst, 0.0, 1e-6, 1.0));

    bool monotone = true;
    for (std::size_t i = 0; i + 1 < model.grid_u0.size(); ++i)
        monotone = monotone && model.grid_u0[i] < model.grid_u0[i + 1];
    rows.push_back(make_leq_row("king.potential_monotone", monotone ? 0.0 : 1.0, 0.0, 0.5, 1.0));

    rows.push_back(make_leq_row("king.exterior_match",
                                std::abs(model.potential_at(model.R) + model.M / model.R),
                                0.0, 1e-8, std::abs(model.E0)));

    KingParameters refined = params;
    refined.grid_size = 2 * params.grid_size - 1;
    const KingModel fine = build_king(refined);
    rows.push_back(make_leq_row("king.refinement_M", std::abs(model.M - fine.M) / model.M,
                                0.0, 4e-6, 1.0));
    rows.push_back(make_leq_row("king.refinement_R", std::abs(model.R - fine.R) / model.R,
                                0.0, 4e-6, 1.0));
}

/// orbit geometry against the Kepler stub plus well-curvature positivity
inline void verify_orbit_geometry(const KingModel& model, std::uint64_t seed,
                                  std::vector<CheckRow>& rows) {
    PointMassModel kep{1.0, 0.0};
    double worst_tp = 0.0, worst_period = 0.0;
    math::Rng orng(seed + 1);
    for (int i = 0; i < 20; ++i) {
        const double L = orng.uniform(0.05, 1.0);
        const auto rl = find_r_L(kep, L);
        const double E = orng.uniform(0.999 * rl[1], 0.05 * rl[1]);
        const OrbitRecord rec = solve_orbit(kep, E, L);
        const double disc = std::sqrt(kep.M * kep.M + 2.0 * E * L);
        const double rm = (kep.M - disc) / (-2.0 * E), rp = (kep.M + disc) / (-2.0 * E);
        worst_tp = std::fmax(worst_tp, std::abs(rec.r_minus - rm) / rm);
        worst_tp = std::fmax(worst_tp, std::abs(rec.r_plus - rp) / rp);
        const double period = pi * kep.M / std::pow(-2.0 * E, 1.5);
        worst_period = std::fmax(worst_period, std::abs(rec.time_integral - period) / period);
    }
    rows.push_back(make_leq_row("orbit.kepler_turning_points", worst_tp, 0.0, 1e-10, 1.0));
    rows.push_back(make_leq_row("orbit.kepler_period", worst_period, 0.0, 1e-6, 1.0));

    double min_psi2 = 1e300;
    double L_hi = 0.0;
    for (std::size_t i = 0; i < model.grid_r.size(); ++i) {
        const double r = model.grid_r[i];
        L_hi = std::fmax(L_hi, 2.0 * r * r * (model.E0 - model.grid_u0[i]));
    }
    for (int k = 0; k < 20; ++k) {
        const double L = 1e-4 * L_hi + (L_hi - 1e-4 * L_hi) * (k + 0.5) / 20.0;
        min_psi2 = std::fmin(min_psi2, find_r_L(model, L)[2]);
    }
    rows.push_back(make_leq_row("orbit.psi_second_positive", 0.0, min_psi2, -1e-12, 1.0));
}

/// structural identities: the velocity-moment density identity and the double
/// bracket decomposition
inline void verify_structural_identities(const KingModel& model, std::uint64_t seed,
                                       std::vector<CheckRow>& rows) {
    double worst = 0.0;
    for (int i = 1; i <= 50; ++i) {
        const double r = model.R * i / 51.0;
        const double lhs = density_moment_lhs(model, r);
        const double rhs = model.density_at(r);
        worst = std::fmax(worst, std::abs(lhs - rhs) / rhs);
    }
    rows.push_back(make_leq_row("identity.density_moment", worst, 0.0, 1e-6, 1.0));

    math::Rng brng(seed + 2);
    double worst_dec = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double r = brng.uniform(0.05, 0.95) * model.R;
        const double w = brng.uniform(0.1, 1.5);
        const double L = brng.uniform(1e-3, 0.5) * 2 * r * r * model.W0;
        worst_dec = std::fmax(worst_dec, check_bracket_decomposition(model, r, w, L).rel_err);
    }
    rows.push_back(make_leq_row("identity.bracket_decomposition", worst_dec, 0.0, 1e-6, 1.0));
}

/// Antonov coercivity bound over randomized generators, plus the dual-route
/// field-norm consistency
inline void verify_antonov_bound(const KingModel& model, const PhaseGrid& qgrid, int n_generators,
                                 math::Rng& rng, std::vector<CheckRow>& rows) {
    double worst_margin = 0.0, min_rhs = 1e300, worst_dual = 0.0;
    for (int i = 0; i < n_generators; ++i) {
        const Generator h = make_random_generator(model, rng);
        const AntonovReport rep = antonov_bound_check(model, h, qgrid);
        worst_margin = std::fmin(worst_margin, rep.margin / rep.scale);
        min_rhs = std::fmin(min_rhs, rep.rhs);
        if (i < 3) {
            const double direct = field_norm2_bracket_route(model, h);
            worst_dual = std::fmax(worst_dual, std::abs(rep.field_norm2 - direct) /
                                                   std::fmax(direct, 1e-300));
        }
    }
    rows.push_back(make_leq_row("antonov.margin", -worst_margin, 0.0, 1e-4, 1.0));
    rows.push_back(make_leq_row("antonov.rhs_positive", 0.0, min_rhs, -1e-300, 1.0));
    rows.push_back(make_leq_row("antonov.dual_route_field", worst_dual, 0.0, 1e-4, 1.0));
}

/// g -> h reconstruction round trip
inline void verify_reconstruction(const KingModel& model, int n_generators, math::Rng& rng,
                                  std::vector<CheckRow>& rows) {
    const CutoffRegion cutoff = CutoffRegion::defaults(model);
    const PhaseGrid rgrid = PhaseGrid::covering(model, 1.05, 65, 65, 33);
    double worst_l2 = 0.0, worst_orth = 0.0;
    for (int i = 0; i < n_generators; ++i) {
        const Generator hstar = make_random_generator(model, rng);
        auto gb = bracket_with_f0(model, hstar);
        const Reconstruction rec = reconstruct_h(model, gb, cutoff, rgrid);
        worst_orth = std::fmax(worst_orth, rec.max_orth_residual);
        double num = 0.0, den = 0.0;
        const GridWeights wt(rgrid);
        for (std::size_t a = 0; a < rgrid.nr; ++a)
            for (std::size_t b = 0; b < rgrid.nw; ++b)
                for (std::size_t c = 0; c < rgrid.nl; ++c) {
                    const double r = rgrid.r(a), w = rgrid.w(b), L = rgrid.L(c);
                    if (r <= 0.0) continue;
                    const double E = particle_energy(model, r, w, L);
                    if (!cutoff.contains(E, L, model.E0)) continue;
                    const double hv = rec.h.at(a, b, c);
                    const double hs = hstar.value(r, w, L);
                    const double wgt = wt.wr[a] * wt.ww[b] * wt.wl[c];
                    num += wgt * (hv - hs) * (hv - hs);
                    den += wgt * hs * hs;
                }
        worst_l2 = std::fmax(worst_l2, std::sqrt(num / std::fmax(den, 1e-300)));
    }
    rows.push_back(make_leq_row("reconstruction.l2_roundtrip", worst_l2, 0.0, 1e-3, 1.0));
    rows.push_back(make_leq_row("reconstruction.orthogonality", worst_orth, 0.0, 1e-6, 1.0));
}

inline void verify_weak_identity(const KingModel& model, std::vector<CheckRow>& rows) {
    const CutoffRegion cutoff = CutoffRegion::defaults(model);
    const Generator hw(model, 1.0, {0.7, -0.2, 0.25, 0.35});
    auto gw = bracket_with_f0(model, hw);
    using namespace verify_detail;
    const WeakIdentityReport w1 = weak_identity_check(model, gw, cutoff, PsiConst{});
    const WeakIdentityReport w2 = weak_identity_check(model, gw, cutoff, PsiR2{model.R});
    const WeakIdentityReport w3 = weak_identity_check(model, gw, cutoff, PsiW2{});
    const WeakIdentityReport w4 = weak_identity_check(model, gw, cutoff, PsiExpL{});
    const WeakIdentityReport w5 = weak_identity_check(model, gw, cutoff, PsiRW{});
    double worst_weak = 0.0;
    for (const auto& w : {w1, w2, w3, w4, w5}) worst_weak = std::fmax(worst_weak, w.residual);
    rows.push_back(make_leq_row("weak_identity.residual", worst_weak, 0.0, 1e-3, 1.0));
}

/// the deviation-functional identities (the energy-Casimir relation and pointwise
/// convexity) together with the local-minimizer amplitude sweep
inline void verify_deviation_and_local_min(const KingModel& model, const VerifyOptions& opt,
                                           std::vector<CheckRow>& rows) {
    const double e_scale = model.M * model.M / model.R;
    const Generator gen(model, 1.0, {0.6, -0.4, 0.3, 0.2});
    const double s0 = verify_detail::calibrate_amplitude(model, gen);

    double worst_mismatch = 0.0;
    int violations = 0;
    double min_ratio = 1e300, prev_hc = 0.0;
    bool hc_positive = true, hc_monotone = true;
    const double fractions[3] = {0.02, 0.05, 0.1};
    for (int j = 0; j < 3; ++j) {
        const double s = fractions[j] * s0;
        const auto fs = flowed_state_evaluator(model, gen, s, 32);
        const AlignedDistanceReport rep = aligned_distance(model, fs, 257);
        violations += verify_detail::convexity_violations(model, fs, opt.seed + 100 + j, 30000);
        if (!(rep.delta_hc > 0.0)) hc_positive = false;
        if (j > 0 && rep.delta_hc < prev_hc) hc_monotone = false;
        prev_hc = rep.delta_hc;
        const double field2 = 8.0 * pi * rep.field_term;
        min_ratio = std::fmin(min_ratio, rep.delta_hc / std::fmax(field2, 1e-300));
        if (j < opt.identity_amplitudes)
            worst_mismatch = std::fmax(worst_mismatch, std::abs(rep.mismatch) /
                                                           (std::abs(rep.d) + e_scale));
    }
    rows.push_back(make_leq_row("deviation.energy_casimir_identity", worst_mismatch, 0.0, 1e-8, 1.0));
    rows.push_back(make_leq_row("deviation.convexity_violations", violations, 0.0, 0.5, 1.0));
    rows.push_back(make_leq_row("local_min.hc_positive", hc_positive ? 0.0 : 1.0, 0.0, 0.5, 1.0));
    rows.push_back(make_leq_row("local_min.ratio_bounded", 1e-6, min_ratio, 0.0, 1.0));
    rows.push_back(make_leq_row("local_min.monotone_in_s", hc_monotone ? 0.0 : 1.0, 0.0, 0.5, 1.0));
}

/// Casimir battery conservation under the generator flow
inline void verify_casimir_flow(const KingModel& model, std::uint64_t seed,
                                std::vector<CheckRow>& rows) {
    const ParticleEnsemble ens = sample_steady_state(model, 20000, seed + 7);
    const Generator gen(model, 1.0, {0.4, 0.4, -0.1, 0.2});
    const FlowResult res = flow(ens, gen, 0.1);
    const MembershipReport rep = verify_S_membership(res.ensemble, ens, model);
    rows.push_back(make_leq_row("casimir.flow_conservation", rep.max_rel_deviation, 0.0,
                                1e-6, 1.0));
    rows.push_back(make_leq_row("casimir.sup_f_bounded", rep.sup_f, model.f0_sup,
                                1e-12, model.f0_sup));
    rows.push_back(make_leq_row("flow.hamiltonian_drift", res.h_drift, 0.0, 1e-8, 1.0));
}

inline void verify_measure(const KingModel& model, const PhaseGrid& qgrid,
                           std::vector<CheckRow>& rows) {
    const double mass_grid = phase_integral(qgrid, [&](double r, double w, double L) {
        return model.f0_of_energy(particle_energy(model, r, w, L));
    });
    rows.push_back(make_leq_row("measure.grid_mass", std::abs(mass_grid - model.M) / model.M,
                                0.0, 2e-3, 1.0));
}

/// Runs the full identity/inequality battery against a built model.
inline std::vector<CheckRow> run_verification(const KingModel& model, const KingParameters& params,
                                              const VerifyOptions& opt = {}) {
    std::vector<CheckRow> rows;
    math::Rng rng(opt.seed);
    verify_king_build(model, params, rows);
    verify_orbit_geometry(model, opt.seed, rows);
    verify_structural_identities(model, opt.seed, rows);
    const PhaseGrid qgrid =
        PhaseGrid::covering(model, 1.15, opt.grid_nr, opt.grid_nw, opt.grid_nl);
    verify_antonov_bound(model, qgrid, opt.antonov_generators, rng, rows);
    verify_reconstruction(model, opt.roundtrip_generators, rng, rows);
    verify_weak_identity(model, rows);
    verify_deviation_and_local_min(model, opt, rows);
    verify_casimir_flow(model, opt.seed, rows);
    verify_measure(model, qgrid, rows);
    return rows;
}

} // namespace kinglab

#endif
