#ifndef KINGLAB_ORBIT_HPP
#define KINGLAB_ORBIT_HPP

#include <cmath>
#include <utility>

#include "kinglab/errors.hpp"
#include "kinglab/king_model.hpp"
#include "kinglab/math/quadrature.hpp"
#include "kinglab/math/roots.hpp"

namespace kinglab {

/// absolute root tolerance used for all turning-point style solves;
/// singular integrals degrade as sqrt of the root error, hence the tight value
inline double root_tol(double r) { return 1e-10 * (1.0 + r); }

/// Effective potential Psi_L(r) = U0(r) + L/(2 r^2) for fixed L > 0.
template <class Model>
struct EffectivePotential {
    const Model& model;
    double L;

    double value(double r) const { return model.potential_at(r) + 0.5 * L / (r * r); }
    double slope(double r) const { return model.dpotential_at(r) - L / (r * r * r); }
    /// slope consistent with the value interpolant; required wherever
    /// value() differences near the well bottom are resolved
    double slope_value(double r) const {
        return model.dpotential_value_at(r) - L / (r * r * r);
    }
};

/// Per-(E,L) orbit geometry. Valid whenever psi_min < E < 0.
struct OrbitRecord {
    double E = 0, L = 0;
    double r_minus = 0, r_plus = 0;
    double r_L = 0, psi_min = 0, psi_second = 0;
    double time_integral = 0;
};

/// Locates the unique minimizer of Psi_L as the root of m0(r) - L/r = 0
/// (strictly increasing in r). Returns (r_L, Psi_L(r_L), Psi_L''(r_L)),
/// the curvature evaluated as 4 pi rho0(r_L) + L/r_L^4.
template <class Model>
std::array<double, 3> find_r_L(const Model& model, double L) {
    if (!(L > 0.0)) throw BracketFailure("find_r_L: requires L > 0");
    const double M = model.mass_at(1e300);
    auto g = [&](double r) { return model.mass_at(r) - L / r; };

    double hi = std::fmax(model.R > 0 ? model.R : L / M, L / M);
    int guard = 0;
    while (g(hi) < 0.0) {
        hi *= 2.0;
        if (++guard > 600) throw BracketFailure("find_r_L: no upper bracket");
    }
    double lo = std::fmin(L / M, hi);
    if (g(lo) > 0.0) {
        guard = 0;
        while (g(lo) > 0.0) {
            lo *= 0.5;
            if (++guard > 600) throw BracketFailure("find_r_L: no lower bracket");
        }
    }
    double rL = (g(lo) == 0.0) ? lo : math::brent(g, lo, hi, 1e-2 * root_tol(lo));
    // polish onto the stationary point of the potential-value interpolant so
    // that Psi(r) - psi_min is a clean quadratic of the interpolant near the
    // bottom (the m0(r) - L/r root differs by the interpolation error)
    EffectivePotential<Model> psi{model, L};
    {
        double a = rL * (1.0 - 1e-4), b = rL * (1.0 + 1e-4);
        int guard = 0;
        while (psi.slope_value(a) > 0.0 && ++guard < 60) a *= 0.999;
        guard = 0;
        while (psi.slope_value(b) < 0.0 && ++guard < 60) b *= 1.001;
        if (psi.slope_value(a) <= 0.0 && psi.slope_value(b) >= 0.0)
            rL = math::brent([&](double r) { return psi.slope_value(r); }, a, b,
                             1e-4 * root_tol(rL));
    }
    const double psi_min = psi.value(rL);
    const double psi2 = 4.0 * pi * model.density_at(rL) + L / (rL * rL * rL * rL);
    return {rL, psi_min, psi2};
}

/// Pericenter and apocenter radii: the two roots of Psi_L(r) = E around r_L.
/// Requires a genuine well, psi_min < E < 0.
template <class Model>
std::pair<double, double> turning_points(const Model& model, double E, double L,
                                         double rL, double psi_min) {
    if (!(E < 0.0)) throw NoOrbit("turning_points: E >= 0 (unbound)");
    if (!(E > psi_min)) throw NoOrbit("turning_points: E <= Psi_L(r_L) (no well)");
    EffectivePotential<Model> psi{model, L};
    auto f = [&](double r) { return psi.value(r) - E; };

    // brent is driven two orders below the contract tolerance: the closed-form
    // comparisons are relative, and pericenters can sit well below unit radius
    double in = rL, in_prev = rL;
    int guard = 0;
    while (f(in) < 0.0) {
        in_prev = in;
        in *= 0.5;
        if (++guard > 2000) throw BracketFailure("turning_points: inner bracket failed");
    }
    const double r_minus = math::brent(f, in, in_prev, 1e-2 * root_tol(in_prev));

    double out = rL, out_prev = rL;
    guard = 0;
    while (f(out) < 0.0) {
        out_prev = out;
        out *= 2.0;
        if (++guard > 2000) throw BracketFailure("turning_points: outer bracket failed");
    }
    const double r_plus = math::brent(f, out_prev, out, 1e-2 * root_tol(out));
    return {r_minus, r_plus};
}

namespace detail {

/// Inverse of u = sqrt(Psi_L(r) - psi_min) on one side of the well.
/// `outer` selects the branch: r in [r_L, r_plus] (Psi increasing) or
/// [r_minus, r_L] (Psi decreasing).
template <class Model>
class BranchInverse {
public:
    BranchInverse(const EffectivePotential<Model>& psi, const OrbitRecord& rec, bool outer)
        : psi_(psi), rec_(rec), outer_(outer),
          lo_(outer ? rec.r_L : rec.r_minus), hi_(outer ? rec.r_plus : rec.r_L) {}

    double operator()(double u) const {
        const double uE2 = rec_.E - rec_.psi_min;
        // near the bottom of the well the subtraction Psi - psi_min is pure
        // cancellation; switch to the harmonic expansion of the branch
        if (u * u < 1e-12 * (std::abs(rec_.psi_min) + uE2)) {
            const double dr = u * std::sqrt(2.0 / rec_.psi_second);
            return outer_ ? rec_.r_L + dr : rec_.r_L - dr;
        }
        const double target = rec_.psi_min + u * u;
        auto fdf = [&](double r) {
            return std::pair<double, double>(psi_.value(r) - target, psi_.slope_value(r));
        };
        const double guess = last_ > 0 ? last_ : rec_.r_L + (outer_ ? 1.0 : -1.0) * u * std::sqrt(2.0 / rec_.psi_second);
        last_ = math::newton_bracketed(fdf, lo_, hi_, guess, 1e-4 * root_tol(hi_), outer_);
        return last_;
    }

private:
    const EffectivePotential<Model>& psi_;
    const OrbitRecord& rec_;
    bool outer_;
    double lo_, hi_;
    mutable double last_ = -1.0;
};

} // namespace detail

/// Orbit integrals int field(s, w(s), L) / w(s) ds with w(s) = sqrt(2E - 2 Psi_L(s)),
/// computed per half-orbit through the double substitution
/// u = sqrt(Psi_L - psi_min), u = u_E sin(theta), which removes both the
/// turning-point and the well-bottom singularities. theta runs over
/// [theta_a, theta_b] subset [0, pi/2]. Panel-doubling Gauss-Legendre keeps
/// the evaluations clear of the rounding-noise strips at both ends.
template <class Model, class Field>
double half_orbit_integral(const Model& model, const OrbitRecord& rec, bool outer,
                           Field&& field, double theta_a, double theta_b,
                           double tol, int max_level) {
    EffectivePotential<Model> psi{model, rec.L};
    detail::BranchInverse<Model> inverse(psi, rec, outer);
    const double uE = std::sqrt(rec.E - rec.psi_min);
    auto integrand = [&](double theta) {
        const double u = uE * std::sin(theta);
        const double r = inverse(u);
        const double w = std::sqrt(2.0) * uE * std::cos(theta);
        double jac;
        if (u * u < 1e-12 * (std::abs(rec.psi_min) + uE * uE)) {
            jac = 1.0 / std::sqrt(rec.psi_second);
        } else {
            jac = std::sqrt(2.0) * u / std::abs(psi.slope_value(r));
        }
        return jac * field(r, w, rec.L);
    };
    return math::adaptive_gl(integrand, theta_a, theta_b, tol, max_level);
}

/// Half radial period int_{r-}^{r+} dr / sqrt(2E - 2 Psi_L(r)).
/// Near-circular orbits short-circuit to the harmonic value pi/sqrt(Psi'').
template <class Model>
double radial_time_integral(const Model& model, const OrbitRecord& rec,
                            double rel_tol = 1e-9, int max_level = 8) {
    const double uE2 = rec.E - rec.psi_min;
    // below this depth the subtraction Psi - psi_min is noise-limited and the
    // harmonic value is more accurate than any quadrature of it
    if (uE2 < 1e-6 * (1.0 + std::abs(rec.psi_min)))
        return pi / std::sqrt(rec.psi_second);
    const double scale = pi / std::sqrt(rec.psi_second);
    auto one = [](double, double, double) { return 1.0; };
    const double tol = rel_tol * scale;
    const double half = pi / 2.0;
    return half_orbit_integral(model, rec, false, one, 0.0, half, tol, max_level) +
           half_orbit_integral(model, rec, true, one, 0.0, half, tol, max_level);
}

/// Cumulative orbit line integral int_{r-}^{upper} field(s, w(s), L)/w(s) ds.
template <class Model, class Field>
double orbit_line_integral(const Model& model, const OrbitRecord& rec, Field&& field,
                           double upper, double rel_tol = 1e-9, int max_depth = 7) {
    EffectivePotential<Model> psi{model, rec.L};
    const double uE = std::sqrt(rec.E - rec.psi_min);
    const double half = pi / 2.0;
    double up = std::fmin(std::fmax(upper, rec.r_minus), rec.r_plus);
    // an upper limit within root tolerance of a turning point is the turning
    // point: mapping it through asin would cut a sqrt(root_tol)-wide band off
    // the apex of the substitution
    if (up <= rec.r_minus + 4.0 * root_tol(rec.r_minus)) return 0.0;
    const bool to_apex = up >= rec.r_plus - 4.0 * root_tol(rec.r_plus);
    const double uu = std::sqrt(std::fmax(psi.value(up) - rec.psi_min, 0.0));
    const double theta_u = to_apex ? half : std::asin(std::fmin(uu / uE, 1.0));
    // magnitude of the field along the orbit for the absolute tolerance
    double fscale = 0.0;
    for (int q = 0; q <= 8; ++q) {
        const double r = rec.r_minus + (rec.r_plus - rec.r_minus) * q / 8.0;
        const double wq = std::sqrt(std::fmax(2.0 * (rec.E - psi.value(r)), 0.0));
        fscale = std::fmax(fscale, std::abs(field(r, wq, rec.L)));
    }
    // a vanishing sample set means the orbit lies in the field's zero set
    // (up to rounding dust of compactly supported bumps)
    if (fscale < 1e-18) return 0.0;
    const double tol = rel_tol * fscale * (pi / std::sqrt(rec.psi_second));
    double result = 0.0;
    if (up <= rec.r_L) {
        result = half_orbit_integral(model, rec, false, field, theta_u, half, tol, max_depth);
    } else {
        result = half_orbit_integral(model, rec, false, field, 0.0, half, tol, max_depth) +
                 half_orbit_integral(model, rec, true, field, 0.0, theta_u, tol, max_depth);
    }
    return result;
}

/// Assembles the full orbit record for (E, L).
template <class Model>
OrbitRecord solve_orbit(const Model& model, double E, double L) {
    OrbitRecord rec;
    rec.E = E;
    rec.L = L;
    const auto rl = find_r_L(model, L);
    rec.r_L = rl[0];
    rec.psi_min = rl[1];
    rec.psi_second = rl[2];
    auto [rm, rp] = turning_points(model, E, L, rec.r_L, rec.psi_min);
    rec.r_minus = rm;
    rec.r_plus = rp;
    rec.time_integral = radial_time_integral(model, rec);
    return rec;
}

/// Empirical constants of the uniform orbit bounds over the compact set
/// {E <= E0 - eps_E, L >= eps_L}: C is the largest radial time integral and
/// eta the smallest sampled ratio |Psi_L'| / sqrt(Psi_L - psi_min), with the
/// limit sqrt(2 Psi_L''(r_L)) substituted at the well bottom.
struct OrbitBounds {
    double C = 0;
    double eta = 0;
    int orbits = 0;
};

inline OrbitBounds empirical_orbit_bounds(const KingModel& model, double eps_E, double eps_L,
                                          int nE = 20, int nL = 20) {
    OrbitBounds out;
    out.eta = 1e300;
    double L_max = 0.0;
    for (std::size_t i = 0; i < model.grid_r.size(); ++i) {
        const double r = model.grid_r[i];
        L_max = std::fmax(L_max, 2.0 * r * r * (model.E0 - model.grid_u0[i]));
    }
    const double E_top = model.E0 - eps_E;
    for (int k = 0; k < nL; ++k) {
        const double L = eps_L + (L_max - eps_L) * (k + 0.5) / nL;
        const auto rl = find_r_L(model, L);
        if (rl[1] >= E_top) continue;  // well bottom above the cutoff: no orbits
        for (int j = 0; j < nE; ++j) {
            const double E = rl[1] + (E_top - rl[1]) * (j + 1.0) / nE;
            OrbitRecord rec;
            rec.E = E; rec.L = L;
            rec.r_L = rl[0]; rec.psi_min = rl[1]; rec.psi_second = rl[2];
            auto [rm, rp] = turning_points(model, E, L, rec.r_L, rec.psi_min);
            rec.r_minus = rm; rec.r_plus = rp;
            rec.time_integral = radial_time_integral(model, rec);
            out.C = std::fmax(out.C, rec.time_integral);
            out.eta = std::fmin(out.eta, std::sqrt(2.0 * rec.psi_second));
            EffectivePotential<KingModel> psi{model, L};
            const double uE = std::sqrt(E - rec.psi_min);
            for (int s = 1; s <= 16; ++s) {
                const double theta = (pi / 2.0) * s / 17.0;
                const double u = uE * std::sin(theta);
                for (bool outer : {false, true}) {
                    detail::BranchInverse<KingModel> inv(psi, rec, outer);
                    const double r = inv(u);
                    out.eta = std::fmin(out.eta, std::abs(psi.slope_value(r)) / u);
                }
            }
            ++out.orbits;
        }
    }
    return out;
}

} // namespace kinglab

#endif
