#ifndef KINGLAB_STABILITY_HPP
#define KINGLAB_STABILITY_HPP

#include <array>
#include <atomic>
#include <cmath>
#include <vector>

#include "kinglab/errors.hpp"
#include "kinglab/functionals.hpp"
#include "kinglab/king_model.hpp"
#include "kinglab/math/parallel.hpp"
#include "kinglab/math/quadrature.hpp"
#include "kinglab/orbit.hpp"
#include "kinglab/perturbation.hpp"
#include "kinglab/phase_grid.hpp"

namespace kinglab {

/// Interior cutoff {E <= E0 - eps_E, L >= eps_L} on which the orbit bounds
/// are uniform and the g -> h reconstruction is performed.
struct CutoffRegion {
    double eps_E = 0;
    double eps_L = 0;

    static CutoffRegion defaults(const KingModel& model) {
        return {0.05 * model.W0, 1e-2 * model.M * model.R};
    }

    bool contains(double E, double L, double E0) const {
        return E <= E0 - eps_E && L >= eps_L;
    }
};

/// ===================== second-variation quadratic form =====================

/// shell-mass density mu(r) = 4 pi r^2 rho_g(r) = 4 pi^2 int g dw dL of an
/// evaluable field, integrated over the exact local support
/// {w^2/2 + L/(2r^2) <= depth(r)} with Gauss-Legendre rules per axis
template <class G>
double radial_shell_density_exact(const KingModel& model, G&& g, double r) {
    if (r <= 0.0 || r >= model.R) return 0.0;
    const double y = model.E0 - model.potential_at(r);
    if (y <= 0.0) return 0.0;
    const double wm = std::sqrt(2.0 * y);
    const auto& glw = math::gl32();
    const auto& gll = math::gl16();
    const double s = glw.integrate([&](double w) {
        const double lmax = 2.0 * r * r * (y - 0.5 * w * w);
        if (lmax <= 0.0) return 0.0;
        return gll.integrate([&](double L) { return g(r, w, L); }, 0.0, lmax);
    }, -wm, wm);
    return phase_measure * s;
}

struct QuadraticFormReport {
    double first_term = 0;   ///< (1/2) int_{f0>0} g^2 / (-phi0'(E))
    double field_norm2 = 0;  ///< || grad U_g ||_2^2
    double value = 0;        ///< first_term - field_norm2 / (8 pi)
    double outside_fraction = 0;  ///< share of int g^2 falling outside {E <= E0}
};

/// D^2 H_C(f0)[g] for a pointwise evaluable perturbation g supported in the
/// steady-state interior. The weight 1/(-phi0'(E)) = e^{E-E0} <= 1 there.
template <class G>
QuadraticFormReport quadratic_form(const KingModel& model, const PhaseGrid& grid, G&& g,
                                   double support_tol = 1e-8) {
    QuadraticFormReport rep;
    const double E0 = model.E0;
    double inside = 0.0, outside = 0.0, weighted = 0.0;
    {
        const GridWeights wt(grid);
        std::vector<double> acc_in(grid.nr, 0.0), acc_out(grid.nr, 0.0), acc_w(grid.nr, 0.0);
        math::parallel_for(grid.nr, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                const double r = grid.r(i);
                const double u0 = model.potential_at(r);
                const double r2 = r > 0 ? r * r : 1e-300;
                double si = 0, so = 0, sw = 0;
                for (std::size_t j = 0; j < grid.nw; ++j) {
                    const double w = grid.w(j);
                    double li = 0, lo = 0, lw = 0;
                    for (std::size_t k = 0; k < grid.nl; ++k) {
                        const double gv = g(r, w, grid.L(k));
                        if (gv == 0.0) continue;
                        const double g2 = wt.wl[k] * gv * gv;
                        const double E = 0.5 * (w * w + grid.L(k) / r2) + u0;
                        if (E < E0) {
                            li += g2;
                            lw += g2 * std::exp(E - E0);
                        } else {
                            lo += g2;
                        }
                    }
                    si += wt.ww[j] * li;
                    so += wt.ww[j] * lo;
                    sw += wt.ww[j] * lw;
                }
                acc_in[i] = wt.wr[i] * si;
                acc_out[i] = wt.wr[i] * so;
                acc_w[i] = wt.wr[i] * sw;
            }
        });
        for (std::size_t i = 0; i < grid.nr; ++i) {
            inside += acc_in[i];
            outside += acc_out[i];
            weighted += acc_w[i];
        }
    }
    rep.outside_fraction = outside / std::fmax(inside + outside, 1e-300);
    if (rep.outside_fraction > support_tol)
        throw SupportViolation("quadratic_form: g carries mass outside {E <= E0}");
    rep.first_term = 0.5 * phase_measure * weighted;

    // field term through the support-aligned reduction: the box grid cannot
    // track the L-extent of the support at small radii to the 1e-4 contract
    const std::size_t n_r = 257;
    const double dr = model.R / double(n_r - 1);
    std::vector<double> mu(n_r, 0.0);
    math::parallel_for(n_r, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i)
            mu[i] = radial_shell_density_exact(model, g, double(i) * dr);
    });
    const auto m = math::cumulative_integral(mu, dr);
    const auto wq = math::simpson_weights(n_r, dr);
    double fn = 0.0;
    for (std::size_t i = 1; i < n_r; ++i) {
        const double r = double(i) * dr;
        fn += wq[i] * m[i] * m[i] / (r * r);
    }
    fn += m.back() * m.back() / model.R;
    rep.field_norm2 = 4.0 * pi * fn;
    rep.value = rep.first_term - rep.field_norm2 / (8.0 * pi);
    return rep;
}

/// ===================== structural identities =====================

/// U_h'(r) = 4 pi int w phi0'(E) h dv, the radial field derivative induced by
/// the (negated) bracket density; local velocity integral at radius r with
/// dv = (pi/r^2) dw dL.
template <class H>
double bracket_potential_derivative(const KingModel& model, const H& h, double r) {
    if (r <= 0.0 || r >= model.R) return 0.0;
    const double y = model.E0 - model.potential_at(r);
    if (y <= 0.0) return 0.0;
    const double wm = std::sqrt(2.0 * y);
    const auto& glw = math::gl32();
    const auto& gll = math::gl16();
    const double s = glw.integrate([&](double w) {
        const double lmax = 2.0 * r * r * (y - 0.5 * w * w);
        if (lmax <= 0.0) return 0.0;
        return gll.integrate([&](double L) {
            const double eps = y - 0.5 * w * w - 0.5 * L / (r * r);
            // phi0'(E) = -e^{E0 - E} = -e^{eps}
            return -w * std::exp(eps) * h(r, w, L);
        }, 0.0, lmax);
    }, -wm, wm);
    return 4.0 * pi * (pi / (r * r)) * s;
}

/// || grad U ||_2^2 through the velocity-moment route: 4 pi int (U_h')^2 r^2 dr.
template <class H>
double field_norm2_bracket_route(const KingModel& model, const H& h, std::size_t n_r = 257) {
    const auto w = math::simpson_weights(n_r, model.R / double(n_r - 1));
    std::vector<double> vals(n_r, 0.0);
    math::parallel_for(n_r, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const double r = model.R * double(i) / double(n_r - 1);
            const double du = bracket_potential_derivative(model, h, r);
            vals[i] = du * du * r * r;
        }
    });
    double s = 0.0;
    for (std::size_t i = 0; i < n_r; ++i) s += w[i] * vals[i];
    return 4.0 * pi * s;
}

/// -int w^2 phi0'(E) dv at radius r; an integration by parts in w shows this
/// equals rho0(r).
inline double density_moment_lhs(const KingModel& model, double r) {
    if (r <= 0.0 || r >= model.R) return 0.0;
    const double y = model.E0 - model.potential_at(r);
    if (y <= 0.0) return 0.0;
    const double wm = std::sqrt(2.0 * y);
    const auto& glw = math::gl32();
    const auto& gll = math::gl16();
    const double s = glw.integrate([&](double w) {
        const double lmax = 2.0 * r * r * (y - 0.5 * w * w);
        if (lmax <= 0.0) return 0.0;
        return gll.integrate([&](double L) {
            const double eps = y - 0.5 * w * w - 0.5 * L / (r * r);
            return w * w * std::exp(eps);
        }, 0.0, lmax);
    }, -wm, wm);
    return (pi / (r * r)) * s;
}

/// {E, rw} in closed form (the pivot of the bracket decomposition). Uses the mass-route
/// slope m0(r)/r^2, whose interpolant carries exact nodal derivatives, so
/// that numeric differentiation across it resolves U0'' faithfully.
inline double bracket_E_rw(const KingModel& model, double r, double w, double L) {
    return r * model.dpotential_at(r) - L / (r * r) - w * w;
}

/// {E, {E, rw}} evaluated numerically against the closed form
/// -rw (4 pi rho0 + U0'/r) that follows from the Poisson equation.
struct BracketDecompositionCheck {
    double lhs = 0, rhs = 0, rel_err = 0;
};

inline BracketDecompositionCheck check_bracket_decomposition(const KingModel& model, double r,
                                                             double w, double L) {
    BracketDecompositionCheck out;
    const double Er = model.dpotential_at(r) - L / (r * r * r);
    const double hr = 1e-5 * (1.0 + r);
    const double Ar = diff4([&](double x) { return bracket_E_rw(model, x, w, L); }, r, hr);
    const double Aw = -2.0 * w;
    out.lhs = Er * Aw - w * Ar;
    out.rhs = -r * w * (4.0 * pi * model.density_at(r) + model.dpotential_at(r) / r);
    out.rel_err = std::abs(out.lhs - out.rhs) / std::fmax(std::abs(out.rhs), 1e-12);
    return out;
}

/// ===================== Antonov bound =====================

struct AntonovReport {
    double lhs = 0;     ///< D^2 H_C(f0)[{f0, h}]
    double rhs = 0;     ///< the positive lower bound of the estimate
    double margin = 0;  ///< lhs - rhs
    double scale = 0;   ///< larger of the two sides' absolute-value integrals
    double first_term = 0, field_norm2 = 0;
};

/// Checks D^2 H_C(f0)[{f0,h}] >= -1/2 int phi0' [ (rw)^2 {E, h/(rw)}^2 + (U0'/r) h^2 ]
/// for a generator h (odd in w, supported in the interior). Oddness is probed.
/// H provides value/partials plus the regularized mu = h/(rw) with partials.
template <class H>
AntonovReport antonov_bound_check(const KingModel& model, const H& h,
                                  const PhaseGrid& grid) {
    // parity probe
    {
        math::Rng rng(1234);
        for (int i = 0; i < 32; ++i) {
            const double r = rng.uniform(1e-3 * model.R, model.R);
            const double w = rng.uniform(-1.0, 1.0) * std::sqrt(2.0 * model.W0);
            const double L = rng.uniform(0.0, 0.5) * model.M * model.R;
            const double sum = h.value(r, w, L) + h.value(r, -w, L);
            const double mag = std::abs(h.value(r, w, L)) + std::abs(h.value(r, -w, L));
            if (std::abs(sum) > 1e-10 * std::fmax(mag, 1e-30))
                throw ParityViolation("antonov_bound_check: h is not odd in w");
        }
    }
    AntonovReport rep;
    const auto g = bracket_with_f0(model, h);
    const auto qf = quadratic_form(model, grid, g);
    rep.lhs = qf.value;
    rep.first_term = qf.first_term;
    rep.field_norm2 = qf.field_norm2;

    const double E0 = model.E0;
    rep.rhs = 0.5 * phase_integral(grid, [&](double r, double w, double L) {
        if (r <= 0.0) return 0.0;
        const double r2 = r * r;
        const double E = 0.5 * (w * w + L / r2) + model.potential_at(r);
        if (E >= E0) return 0.0;
        double mr, mw;
        h.mu_partials(r, w, L, mr, mw);
        const double Er = model.dpotential_value_at(r) - L / (r2 * r);
        const double bmu = Er * mw - w * mr;     // {E, mu}
        const double hv = h.value(r, w, L);
        const double up_over_r = model.dpotential_value_at(r) / r;
        // -phi0' = e^{E0-E}
        return std::exp(E0 - E) * (r2 * w * w * bmu * bmu + up_over_r * hv * hv);
    });
    rep.scale = std::fmax(qf.first_term + qf.field_norm2 / (8.0 * pi), rep.rhs);
    rep.margin = rep.lhs - rep.rhs;
    return rep;
}

/// ===================== g -> h reconstruction =====================

struct ReconstructionOptions {
    int n_check_E = 12;        ///< orthogonality precheck grid
    int n_check_L = 12;
    double orth_tol = 1e-5;    ///< relative full-orbit residual that raises
    double line_tol = 1e-9;    ///< relative tolerance of the orbit quadratures
};

struct Reconstruction {
    PhaseField h;
    CutoffRegion cutoff;
    double max_orth_residual = 0;  ///< worst relative full-orbit integral seen
};

namespace detail {

/// orbit solve reusing a cached (r_L, psi_min, psi_second) triple for fixed L
template <class Model>
OrbitRecord orbit_from_cache(const Model& model, double E, double L,
                             const std::array<double, 3>& rl) {
    OrbitRecord rec;
    rec.E = E; rec.L = L;
    rec.r_L = rl[0]; rec.psi_min = rl[1]; rec.psi_second = rl[2];
    auto [rm, rp] = turning_points(model, E, L, rec.r_L, rec.psi_min);
    rec.r_minus = rm; rec.r_plus = rp;
    return rec;
}

} // namespace detail

/// Solves {f0, h} = g for h along orbits (the characteristic form of the
/// equation):
///
///   h(r,w,L) = -sign(w) (1/phi0'(E)) int_{r-}^{r} g(s, w(s), L)/w(s) ds,
///
/// zero outside the cutoff region. The solvability (orthogonality) condition
/// -- the vanishing of the full-orbit integral -- is checked on a precheck
/// grid and the worst relative residual reported.
template <class G>
Reconstruction reconstruct_h(const KingModel& model, G&& g, const CutoffRegion& cutoff,
                             const PhaseGrid& grid, const ReconstructionOptions& opt = {}) {
    const double E_top = model.E0 - cutoff.eps_E;
    double L_hi = 0.0;
    for (std::size_t i = 0; i < model.grid_r.size(); ++i) {
        const double r = model.grid_r[i];
        L_hi = std::fmax(L_hi, 2.0 * r * r * (model.E0 - model.grid_u0[i]));
    }

    Reconstruction out{PhaseField(grid), cutoff, 0.0};

    // solvability precheck over the cutoff region
    for (int k = 0; k < opt.n_check_L; ++k) {
        const double L = cutoff.eps_L + (L_hi - cutoff.eps_L) * (k + 0.5) / opt.n_check_L;
        const auto rl = find_r_L(model, L);
        if (rl[1] >= E_top) continue;
        for (int j = 0; j < opt.n_check_E; ++j) {
            const double E = rl[1] + (E_top - rl[1]) * (j + 1.0) / opt.n_check_E;
            OrbitRecord rec = detail::orbit_from_cache(model, E, L, rl);
            rec.time_integral = radial_time_integral(model, rec);
            const double full = orbit_line_integral(model, rec, g, rec.r_plus, opt.line_tol);
            // sample |g| along the orbit for the residual scale
            double gmax = 0.0;
            for (int q = 0; q <= 8; ++q) {
                const double rr = rec.r_minus + (rec.r_plus - rec.r_minus) * q / 8.0;
                const double ww = std::sqrt(std::fmax(
                    2.0 * (E - model.potential_at(rr) - 0.5 * L / (rr * rr)), 0.0));
                gmax = std::fmax(gmax, std::abs(g(rr, ww, L)));
            }
            const double scale = std::fmax(gmax * rec.time_integral, 1e-300);
            const double resid = std::abs(full) / scale;
            out.max_orth_residual = std::fmax(out.max_orth_residual, resid);
            if (resid > opt.orth_tol)
                throw OrthogonalityViolation(
                    "reconstruct_h: full-orbit integral of g does not vanish "
                    "(g is not in the range of the bracket)");
        }
    }

    // per-node reconstruction; L-dependent quantities cached per L slice
    std::vector<std::array<double, 3>> rl_cache(grid.nl, {0, 0, 0});
    std::vector<bool> rl_valid(grid.nl, false);
    for (std::size_t k = 0; k < grid.nl; ++k) {
        const double L = grid.L(k);
        if (L < cutoff.eps_L) continue;
        rl_cache[k] = find_r_L(model, L);
        rl_valid[k] = true;
    }

    math::parallel_for(grid.nr, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const double r = grid.r(i);
            if (r <= 0.0 || r >= model.R) continue;
            const double u0 = model.potential_at(r);
            for (std::size_t k = 0; k < grid.nl; ++k) {
                if (!rl_valid[k]) continue;
                const double L = grid.L(k);
                const double psi_r = u0 + 0.5 * L / (r * r);
                const auto& rl = rl_cache[k];
                // fill the w > 0 half and mirror with the sign flip: oddness
                // holds bitwise by construction
                for (std::size_t j = (grid.nw + 1) / 2; j < grid.nw; ++j) {
                    const double w = grid.w(j);
                    const double E = 0.5 * w * w + psi_r;
                    if (E > E_top || E <= rl[1]) continue;
                    OrbitRecord rec = detail::orbit_from_cache(model, E, L, rl);
                    const double I = orbit_line_integral(model, rec, g, r, opt.line_tol);
                    // -1/phi0'(E) = e^{E - E0}
                    const double val = std::exp(E - model.E0) * I;
                    out.h.at(i, j, k) = val;
                    out.h.at(i, grid.nw - 1 - j, k) = -val;
                }
            }
        }
    });
    return out;
}

/// ===================== weak form of the bracket equation =====================

struct WeakIdentityReport {
    double lhs = 0;       ///< int {f0, psi} h 1_Omega
    double rhs = 0;       ///< -int g 1_Omega psi
    double residual = 0;  ///< |lhs - rhs| / (||h||_2 ||psi||_C1)
    double h_l2 = 0;
    double psi_c1 = 0;
};

/// Verifies int {f0,psi} h 1_Omega = -int g 1_Omega psi for the h defined by
/// the reconstruction integral. The quadrature runs in orbit coordinates
/// (E, L, theta), where the cutoff boundary is exactly resolved and h is
/// available in closed form along each orbit as the cumulative integral of g.
template <class G, class Psi>
WeakIdentityReport weak_identity_check(const KingModel& model, G&& g, const CutoffRegion& cutoff,
                                       Psi&& psi, int nE = 33, int nL = 33, int ntheta = 257) {
    const double E_top = model.E0 - cutoff.eps_E;
    double L_hi = 0.0;
    for (std::size_t i = 0; i < model.grid_r.size(); ++i) {
        const double r = model.grid_r[i];
        L_hi = std::fmax(L_hi, 2.0 * r * r * (model.E0 - model.grid_u0[i]));
    }
    const auto wE = math::simpson_weights(nE, 1.0 / double(nE - 1));
    const auto wL = math::simpson_weights(nL, (L_hi - cutoff.eps_L) / double(nL - 1));
    const auto wT = math::simpson_weights(ntheta, (pi / 2.0) / double(ntheta - 1));

    double lhs = 0, rhs = 0, h2 = 0, psi_c1 = 0;
    for (int kk = 0; kk < nL; ++kk) {
        const double L = cutoff.eps_L + (L_hi - cutoff.eps_L) * kk / double(nL - 1);
        const auto rl = find_r_L(model, L);
        if (rl[1] >= E_top) continue;
        const double Espan = E_top - rl[1];
        double lhs_L = 0, rhs_L = 0, h2_L = 0;
        for (int jj = 0; jj < nE; ++jj) {
            const double tau = 1e-6 + (1.0 - 1e-6) * jj / double(nE - 1);
            const double E = rl[1] + Espan * tau;
            OrbitRecord rec = detail::orbit_from_cache(model, E, L, rl);
            EffectivePotential<KingModel> psi_eff{model, L};
            const double uE = std::sqrt(E - rec.psi_min);
            const double expf = std::exp(E - model.E0);  // -1/phi0'
            // theta ladders on both branches; r runs r- -> r_L -> r+
            double I = 0.0;          // cumulative int g/w ds from r-
            double Jl = 0, Jr = 0, Jh = 0;
            double prev_gjac = 0;
            for (int side = 0; side < 2; ++side) {
                const bool outer = side == 1;
                detail::BranchInverse<KingModel> inv(psi_eff, rec, outer);
                for (int t = 0; t < ntheta; ++t) {
                    // left branch swept from theta = pi/2 (r-) down to 0 (r_L)
                    const double theta = outer ? (pi / 2.0) * t / double(ntheta - 1)
                                               : (pi / 2.0) * (1.0 - t / double(ntheta - 1));
                    const double u = uE * std::sin(theta);
                    const double r = inv(u);
                    const double w = std::sqrt(2.0) * uE * std::cos(theta);
                    double jac;
                    if (u * u < 1e-12 * (std::abs(rec.psi_min) + uE * uE))
                        jac = 1.0 / std::sqrt(rec.psi_second);
                    else
                        jac = std::sqrt(2.0) * u / std::abs(psi_eff.slope(r));
                    const double gv = g(r, w, L);
                    const double gjac = gv * jac;
                    const double dtheta = (pi / 2.0) / double(ntheta - 1);
                    if (t > 0) I += 0.5 * dtheta * (gjac + prev_gjac);
                    prev_gjac = gjac;
                    const double hval = expf * I;  // h at (r, +w); odd continuation below
                    // directional derivative D(psi) = w psi_r + (L/r^3 - U0') psi_w
                    double pr_p, pw_p, pr_m, pw_m;
                    psi.partials(r, w, L, pr_p, pw_p);
                    psi.partials(r, -w, L, pr_m, pw_m);
                    const double coef = L / (r * r * r) - model.dpotential_value_at(r);
                    const double d_p = w * pr_p + coef * pw_p;
                    const double d_m = -w * pr_m + coef * pw_m;
                    // sum over both signs of w of {f0,psi} h / w-measure:
                    // {f0,psi} h = sign(w) D(psi) I  (the phi0' factors cancel)
                    const double lhs_int = (d_p - d_m) * I;
                    const double rhs_int = -gv * (psi(r, w, L) + psi(r, -w, L));
                    const double h2_int = 2.0 * hval * hval;
                    const double wt = wT[t];
                    Jl += wt * lhs_int * jac;
                    Jr += wt * rhs_int * jac;
                    Jh += wt * h2_int * jac;
                    psi_c1 = std::fmax(psi_c1, std::abs(psi(r, w, L)) + std::abs(pr_p) + std::abs(pw_p));
                }
            }
            const double wgt = wE[jj] * Espan;
            lhs_L += wgt * Jl;
            rhs_L += wgt * Jr;
            h2_L += wgt * Jh;
        }
        lhs += wL[kk] * lhs_L;
        rhs += wL[kk] * rhs_L;
        h2 += wL[kk] * h2_L;
    }
    WeakIdentityReport rep;
    rep.lhs = phase_measure * lhs;
    rep.rhs = phase_measure * rhs;
    rep.h_l2 = std::sqrt(std::fmax(phase_measure * h2, 0.0));
    rep.psi_c1 = psi_c1;
    rep.residual = std::abs(rep.lhs - rep.rhs) / std::fmax(rep.h_l2 * rep.psi_c1, 1e-300);
    return rep;
}

} // namespace kinglab

#endif
