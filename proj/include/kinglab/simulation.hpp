#ifndef KINGLAB_SIMULATION_HPP
#define KINGLAB_SIMULATION_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "kinglab/ensemble.hpp"
#include "kinglab/errors.hpp"
#include "kinglab/functionals.hpp"
#include "kinglab/king_model.hpp"
#include "kinglab/math/parallel.hpp"
#include "kinglab/math/rng.hpp"
#include "kinglab/orbit.hpp"
#include "kinglab/phase_grid.hpp"

namespace kinglab {

struct SimConfig {
    double dt = 0;             ///< time step; <= 0 means T_dyn / steps_per_tdyn
    double horizon = 0;        ///< end time; <= 0 means tdyn_horizon * T_dyn
    double tdyn_horizon = 10.0;
    double steps_per_tdyn = 400.0;
    std::size_t N = 100000;
    double softening = 0.0;    ///< radial softening (shell theorem needs none)
    std::uint64_t seed = 1;
    int output_stride = 20;    ///< steps between diagnostics rows
    int checkpoint_stride = 0; ///< steps between checkpoints (0 = none)
    bool frozen_field = false; ///< keep the t=0 field (reversibility tests)
    bool fixed_substeps = false; ///< disable per-particle adaptive subdivision
    double w_scale_fraction = 0.01;  ///< velocity floor of the subdivision rule
    // grid used for the CIC distance reconstruction, fixed across the run
    std::size_t dgrid_nr = 33, dgrid_nw = 33, dgrid_nl = 17;

    void validate() const {
        if (N < 1000) throw ConfigError("SimConfig: N must be >= 1e3");
        if (output_stride < 1) throw ConfigError("SimConfig: output_stride must be >= 1");
    }
};

/// Draws N markers from f0 by rejection sampling in the (r, w, L) box; the
/// proposal measure dr dw dL is exactly the reduced phase-space measure up to
/// the constant Jacobian, so acceptance is proportional to f0(E) alone.
inline ParticleEnsemble sample_steady_state(const KingModel& model, std::size_t N,
                                            std::uint64_t seed) {
    math::Rng rng(seed);
    const double wm = std::sqrt(2.0 * model.W0);
    double L_max = 0.0;
    for (std::size_t i = 0; i < model.grid_r.size(); ++i) {
        const double r = model.grid_r[i];
        L_max = std::fmax(L_max, 2.0 * r * r * (model.E0 - model.grid_u0[i]));
    }
    ParticleEnsemble ens;
    ens.reserve(N);
    const double wgt = model.M / static_cast<double>(N);
    std::uint64_t proposals = 0;
    while (ens.size() < N) {
        const double r = rng.uniform(0.0, model.R);
        const double w = rng.uniform(-wm, wm);
        const double L = rng.uniform(0.0, L_max);
        ++proposals;
        if (proposals > 4000000ULL && static_cast<double>(ens.size()) <
                                          1e-4 * static_cast<double>(proposals))
            throw RejectionStarvation("sample_steady_state: acceptance rate below 1e-4");
        if (r <= 0.0) continue;
        const double E = 0.5 * (w * w + L / (r * r)) + model.potential_at(r);
        const double f = model.f0_of_energy(E);
        if (f <= 0.0) continue;
        if (rng.uniform() * model.f0_sup < f) {
            ens.push_back(r, w, L, f, wgt);
            ens.total_mass = wgt * static_cast<double>(ens.size());
        }
    }
    ens.total_mass = model.M;  // exact: N equal weights summing to M
    return ens;
}

/// One kick-drift-kick leapfrog step of every marker. The second kick uses
/// the field refreshed at the drifted positions, which is also the field of
/// the next step (one radius sort per step). Particles whose pericenter
/// passage would be under-resolved fall back to sub-stepped KDK against the
/// frozen field; radial markers reflect at the origin.
///
/// In frozen-field mode both kicks use the incoming field and each particle's
/// self-exclusion is keyed to `frozen_self_r` (its deposit radius in that
/// field), making the acceleration a fixed function of position and the
/// scheme exactly reversible.
inline SortedField step(ParticleEnsemble& ens, const SortedField& field, double dt,
                        const SimConfig& cfg, double w_scale, double r_box,
                        const std::vector<double>* frozen_self_r = nullptr) {
    std::atomic<bool> blowup{false};
    const std::size_t n = ens.size();
    std::vector<char> needs_kick2(n, 0);

    math::parallel_for(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const double L = ens.L[i];
            const double own_r = cfg.frozen_field
                                     ? (frozen_self_r ? (*frozen_self_r)[i] : -1.0)
                                     : ens.r[i];
            const double own_w = ens.weight[i];
            auto accel = [&](double r) {
                double m = field.mass_interior(r);
                // a shell does not attract itself (own_r < 0 marks an
                // external frozen field with no self-deposit to remove)
                if (own_r >= 0.0 && own_r < r) m -= own_w;
                const double r2 = r * r + cfg.softening * cfg.softening;
                return (L > 0.0 ? L / (r2 * r) : 0.0) - m / r2;
            };
            double r = ens.r[i], w = ens.w[i];
            // allowed sub-step at the current state: limits the kick to a
            // fraction of the velocity scale and, for L > 0, stays below the
            // local centrifugal oscillation time so pericenter dives refine
            // themselves as the particle falls in
            auto h_allowed = [&](double rr, double ww) {
                double h = std::abs(dt);
                const double cap_w = 0.1 * std::abs(ww) + w_scale;
                const double a0 = std::abs(accel(rr));
                if (a0 * h > cap_w) h = cap_w / a0;
                if (L > 0.0) {
                    const double h_orb = 0.1 * rr * rr / std::sqrt(3.0 * L);
                    h = std::fmin(h, h_orb);
                }
                return h;
            };
            const bool single = cfg.fixed_substeps || h_allowed(r, w) >= std::abs(dt);
            if (single && !cfg.frozen_field) {
                // half kick + drift; the closing kick happens against the
                // refreshed field below
                double wh = w + 0.5 * dt * accel(r);
                r += dt * wh;
                if (r <= 0.0) { r = -r; wh = -wh; }
                if (r == 0.0) r = 1e-14 * r_box;
                ens.r[i] = r;
                ens.w[i] = wh;
                needs_kick2[i] = 1;
            } else {
                const double sgn = dt >= 0 ? 1.0 : -1.0;
                double remaining = dt;
                long guard = 0;
                while (sgn * remaining > 0.0) {
                    double h = cfg.fixed_substeps ? remaining
                                                  : sgn * std::fmin(h_allowed(r, w), sgn * remaining);
                    double wh = w + 0.5 * h * accel(r);
                    r += h * wh;
                    if (r <= 0.0) { r = -r; wh = -wh; }
                    if (r == 0.0) r = 1e-14 * r_box;
                    w = wh + 0.5 * h * accel(r);
                    remaining -= h;
                    if (++guard > 200000) { blowup = true; break; }
                }
                ens.r[i] = r;
                ens.w[i] = w;
            }
            if (!std::isfinite(ens.r[i]) || !std::isfinite(ens.w[i]) || ens.r[i] > r_box)
                blowup = true;
        }
    });
    if (blowup) throw StepBlowup("step: a particle left the simulation box");

    SortedField fresh = cfg.frozen_field ? field : field_from_particles(ens);
    math::parallel_for(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            if (!needs_kick2[i]) continue;
            const double r = ens.r[i], L = ens.L[i];
            // mass strictly interior to r never counts the particle itself
            const double m = fresh.mass_interior(r);
            const double r2 = r * r + cfg.softening * cfg.softening;
            const double a = (L > 0.0 ? L / (r2 * r) : 0.0) - m / r2;
            ens.w[i] += 0.5 * dt * a;
            if (!std::isfinite(ens.w[i])) blowup = true;
        }
    });
    if (blowup) throw StepBlowup("step: velocity blowup in the closing kick");
    return fresh;
}

/// characteristic radial oscillation time: twice the half period of the
/// mid-depth orbit E = E0 - W0/2 at the ensemble's median L
inline double dynamical_time(const KingModel& model, const ParticleEnsemble& ens) {
    std::vector<double> L = ens.L;
    std::nth_element(L.begin(), L.begin() + L.size() / 2, L.end());
    const double Lmed = std::fmax(L[L.size() / 2], 1e-8 * model.M * model.R);
    const double E = model.E0 - 0.5 * model.W0;
    const OrbitRecord rec = solve_orbit(model, E, Lmed);
    return 2.0 * rec.time_integral;
}

struct DiagnosticsRow {
    double t = 0;
    double ekin = 0, epot = 0, H = 0, HC = 0;
    double d = 0, field_norm2 = 0;
    std::array<double, CasimirBattery::size> battery{};
};

struct DiagnosticsSeries {
    std::vector<DiagnosticsRow> rows;
    double T_dyn = 0;
    double dt = 0;
    std::size_t steps = 0;
};

/// Full self-consistent evolution: shell-field leapfrog with diagnostics of
/// every conserved functional and of the deviation d(f(t), f0).
/// `on_checkpoint(step_index, t, ens)` fires every checkpoint_stride steps.
inline DiagnosticsSeries run(ParticleEnsemble& ens, const KingModel& model, SimConfig cfg,
                             const std::function<void(std::size_t, double, const ParticleEnsemble&)>&
                                 on_checkpoint = {}) {
    cfg.validate();
    if (cfg.softening >= 1e-3 * model.R)
        throw ConfigError("run: softening must stay below 1e-3 R");
    DiagnosticsSeries out;
    out.T_dyn = dynamical_time(model, ens);
    const double dt = cfg.dt > 0 ? cfg.dt : out.T_dyn / cfg.steps_per_tdyn;
    const double horizon = cfg.horizon > 0 ? cfg.horizon : cfg.tdyn_horizon * out.T_dyn;
    out.dt = dt;
    const double w_scale = cfg.w_scale_fraction * std::sqrt(2.0 * model.W0);
    const double r_box = 50.0 * model.R;

    const PhaseGrid dgrid =
        PhaseGrid::covering(model, 1.15, cfg.dgrid_nr, cfg.dgrid_nw, cfg.dgrid_nl);
    DistanceCalculator dc(model, dgrid, /*cic_reference=*/true);

    auto record = [&](double t, const SortedField& sf) {
        DiagnosticsRow row;
        row.t = t;
        const EnergyReport er = energy(ens, sf);
        row.ekin = er.ekin;
        row.epot = er.epot_pair;
        row.H = er.H;
        double c0 = 0.0;
        for (std::size_t i = 0; i < ens.size(); ++i)
            if (ens.f[i] > 0.0) c0 += ens.weight[i] / ens.f[i] * phi0_casimir(ens.f[i]);
        row.HC = row.H + c0;
        row.field_norm2 = field_norm2_diff(sf, model);
        const PhaseField fhat = deposit_cic(ens, dgrid);
        row.d = dc.evaluate(fhat, row.field_norm2, ens.total_mass).d;
        row.battery = casimir_battery(ens);
        out.rows.push_back(row);
    };

    SortedField sf = field_from_particles(ens);
    record(0.0, sf);

    const std::size_t nsteps = static_cast<std::size_t>(std::ceil(horizon / dt));
    out.steps = nsteps;
    for (std::size_t n = 1; n <= nsteps; ++n) {
        sf = step(ens, sf, dt, cfg, w_scale, r_box);
        const double t = dt * static_cast<double>(n);
        if (n % static_cast<std::size_t>(cfg.output_stride) == 0 || n == nsteps)
            record(t, sf);
        if (cfg.checkpoint_stride > 0 && on_checkpoint &&
            n % static_cast<std::size_t>(cfg.checkpoint_stride) == 0)
            on_checkpoint(n, t, ens);
    }
    return out;
}

} // namespace kinglab

#endif
