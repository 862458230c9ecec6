#ifndef KINGLAB_KING_MODEL_HPP
#define KINGLAB_KING_MODEL_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "kinglab/errors.hpp"
#include "kinglab/math/interp.hpp"
#include "kinglab/math/ode.hpp"
#include "kinglab/math/roots.hpp"

namespace kinglab {

inline constexpr double pi = 3.14159265358979323846;

/// Spatial density of the isothermal-with-cutoff distribution as a function
/// of the local potential depth w = E0 - U0(r):
///
///   rho(w) = 4*pi*sqrt(2) * integral_0^w (e^{w-eps} - 1) sqrt(eps) d eps,  w > 0
///
/// evaluated through a cancellation-free power series for small and moderate
/// depths and through the erf closed form for large ones.
inline double density_of_depth(double w) {
    if (!(w > 0.0)) return 0.0;
    const double pref = 4.0 * pi * std::sqrt(2.0);
    if (w <= 4.0) {
        // rho = 2*sqrt(2)*pi^{3/2} * w^{5/2} * sum_{k>=0} w^k / Gamma(k+7/2)
        double term = 1.0 / 3.3233509704478426;  // 1/Gamma(7/2)
        double sum = term;
        for (int k = 1; k < 60; ++k) {
            term *= w / (k + 2.5);
            sum += term;
            if (term < 1e-18 * sum) break;
        }
        return 2.0 * std::sqrt(2.0) * std::pow(pi, 1.5) * std::pow(w, 2.5) * sum;
    }
    const double sw = std::sqrt(w);
    return pref * (0.5 * std::sqrt(pi) * std::exp(w) * std::erf(sw) - sw * (1.0 + (2.0 / 3.0) * w));
}

/// d rho / d w; rho'(w) = rho(w) + (8*sqrt(2)*pi/3) w^{3/2}
inline double ddensity_of_depth(double w) {
    if (!(w > 0.0)) return 0.0;
    return density_of_depth(w) + (8.0 * std::sqrt(2.0) * pi / 3.0) * std::pow(w, 1.5);
}

struct KingParameters {
    double w0 = 2.0;              ///< central depth E0 - U0(0), > 0
    double r_max_hint = 100.0;    ///< abort radius for the outward integration
    double ode_tolerance = 1e-10; ///< relative tolerance of the radial ODE
    int grid_size = 2001;         ///< number of radial grid nodes on [0, R]

    void validate() const {
        if (!(w0 > 0.0)) throw ConfigError("KingParameters: w0 must be > 0");
        if (!(ode_tolerance > 0.0)) throw ConfigError("KingParameters: ode_tolerance must be > 0");
        if (grid_size < 100) throw ConfigError("KingParameters: grid_size must be >= 100");
        if (!(r_max_hint > 0.0)) throw ConfigError("KingParameters: r_max_hint must be > 0");
    }
};

/// Frozen steady state: radial profiles of the potential, spatial density and
/// enclosed mass on [0, R], with the exact Kepler branch outside the support.
/// Immutable after construction; safe for concurrent reads.
class KingModel {
public:
    // grid data (public for export)
    std::vector<double> grid_r, grid_u0, grid_rho0, grid_m0;
    double E0 = 0;      ///< cutoff energy, U0(R) = E0 = -M/R
    double R = 0;       ///< support radius
    double M = 0;       ///< total mass
    double W0 = 0;      ///< central depth
    double f0_sup = 0;  ///< sup of the distribution, e^{W0} - 1
    double C0 = 0;      ///< convexity constant 1/(2 + 2 f0_sup)

    double potential_at(double r) const {
        if (r >= R) return -M / r;
        return u_interp_(r);
    }

    /// radial derivative of the potential, m0(r)/r^2
    double dpotential_at(double r) const {
        if (r <= 0.0) return 0.0;
        if (r >= R) return M / (r * r);
        return m_interp_(r) / (r * r);
    }

    /// derivative of the potential *interpolant* itself; differs from
    /// m0(r)/r^2 by the interpolation error and is the consistent slope for
    /// root solves against potential_at values (well bottoms, turning points)
    double dpotential_value_at(double r) const {
        if (r <= 0.0) return 0.0;
        if (r >= R) return M / (r * r);
        return u_interp_.derivative(r);
    }

    double mass_at(double r) const {
        if (r <= 0.0) return 0.0;
        if (r >= R) return M;
        double m = m_interp_(r);
        return m > 0.0 ? m : 0.0;
    }

    double density_at(double r) const {
        if (r < 0.0 || r >= R) return 0.0;
        double d = rho_interp_(r);
        return d > 0.0 ? d : 0.0;
    }

    /// local depth E0 - U0(r) (zero outside the support)
    double depth_at(double r) const {
        if (r >= R) return 0.0;
        double w = E0 - u_interp_(r);
        return w > 0.0 ? w : 0.0;
    }

    /// steady-state distribution phi0(E) = (e^{E0-E} - 1)_+
    double f0_of_energy(double E) const {
        return E < E0 ? std::expm1(E0 - E) : 0.0;
    }

    /// phi0'(E) = -e^{E0-E} on {E < E0}, zero beyond the cutoff
    double df0_of_energy(double E) const {
        return E < E0 ? -std::exp(E0 - E) : 0.0;
    }

    friend KingModel build_king(const KingParameters& params);

private:
    math::MonotoneCubic u_interp_, rho_interp_, m_interp_;
};

/// particle energy E = (w^2 + L/r^2)/2 + U0(r) in reduced coordinates
template <class Model>
double particle_energy(const Model& model, double r, double w, double L) {
    const double r2 = r > 0 ? r * r : 1e-300;
    return 0.5 * (w * w + L / r2) + model.potential_at(r);
}

/// Point-mass profile with the same evaluation surface as KingModel.
/// Test stub only: all orbit formulas have Kepler closed forms against it.
struct PointMassModel {
    double M = 1.0;
    double R = 0.0;  // no extended support
    double potential_at(double r) const { return -M / r; }
    double dpotential_at(double r) const { return M / (r * r); }
    double dpotential_value_at(double r) const { return M / (r * r); }
    double mass_at(double) const { return M; }
    double density_at(double) const { return 0.0; }
};

/// Solves the semilinear Poisson equation for the King ansatz as a radial ODE
/// in the depth variable y(r) = E0 - U0(r):
///
///   y' = q / r^2,   q' = -4 pi r^2 rho(y),   y(0) = W0, q(0) = 0,
///
/// where q = -m(r). Integration proceeds outward from a Taylor seed at the
/// regular center until the depth vanishes at r = R; then M = m(R) and
/// E0 = -M/R fix the potential normalization U0(inf) = 0.
inline KingModel build_king(const KingParameters& params) {
    params.validate();
    using St = math::State<2>;
    const double w0 = params.w0;
    const double rho_c = density_of_depth(w0);
    const double a2 = -(2.0 * pi / 3.0) * rho_c;
    const double a4 = (2.0 * pi * pi / 15.0) * rho_c * ddensity_of_depth(w0);

    // Taylor seed just off the coordinate singularity
    const double r_scale = std::sqrt(w0 / rho_c);
    const double r_seed = 1e-6 * r_scale;
    auto taylor_y = [&](double r) { return w0 + a2 * r * r + a4 * r * r * r * r; };
    auto taylor_q = [&](double r) { return 2.0 * a2 * r * r * r + 4.0 * a4 * r * r * r * r * r; };

    auto rhs = [](double r, const St& s) -> St {
        const double y = s[0], q = s[1];
        return {q / (r * r), -4.0 * pi * r * r * density_of_depth(y)};
    };

    const double rtol = std::fmin(params.ode_tolerance * 1e-2, 1e-10);
    const double atol = rtol * w0;

    // first pass: locate the support radius
    std::vector<math::OdeStep<2>> steps;
    bool hit = math::integrate_dp45<2>(rhs, r_seed, {taylor_y(r_seed), taylor_q(r_seed)},
                                       params.r_max_hint, rtol, atol, params.r_max_hint, steps,
                                       [](double, const St& s) { return s[0] <= 0.0; });
    if (!hit)
        throw DepthNeverVanishes("build_king: depth still positive at r_max_hint = " +
                                 std::to_string(params.r_max_hint));
    double R_rough = steps.back().t1;

    // second pass: bounded step size for clean dense output
    steps.clear();
    const double h_max = R_rough / 512.0;
    hit = math::integrate_dp45<2>(rhs, r_seed, {taylor_y(r_seed), taylor_q(r_seed)},
                                  params.r_max_hint, rtol, atol, h_max, steps,
                                  [](double, const St& s) { return s[0] <= 0.0; });
    if (!hit) throw DepthNeverVanishes("build_king: event lost on refinement pass");

    // locate R on the final step by Hermite root, then polish with short
    // RK sub-steps and Newton on the exact flow (y' = q/r^2 is available)
    const auto& last = steps.back();
    double R = math::brent([&](double r) { return last.eval(0, r); }, last.t0, last.t1,
                           1e-15 * last.t1);
    {
        std::vector<math::OdeStep<2>> polish;
        for (int it = 0; it < 3; ++it) {
            polish.clear();
            St ys = {last.eval(0, last.t0), last.eval(1, last.t0)};
            math::integrate_dp45<2>(rhs, last.t0, {last.y0[0], last.y0[1]}, R, rtol * 1e-2,
                                    atol * 1e-2, (R - last.t0), polish,
                                    [](double, const St&) { return false; });
            const St end = polish.empty() ? ys : polish.back().y1;
            const double yR = end[0], dyR = end[1] / (R * R);
            const double dr = -yR / dyR;
            R += dr;
            if (std::abs(dr) < 1e-14 * R) break;
        }
    }

    // sample the solution on the output grid through the stored dense steps
    const std::size_t n = static_cast<std::size_t>(params.grid_size);
    std::vector<double> gr(n), gy(n), gq(n);
    const double dr_grid = R / static_cast<double>(n - 1);
    std::size_t is = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = static_cast<double>(i) * dr_grid;
        gr[i] = r;
        if (r <= r_seed) {
            gy[i] = taylor_y(r);
            gq[i] = taylor_q(r);
            continue;
        }
        while (is + 1 < steps.size() && steps[is].t1 < r) ++is;
        const auto& st = steps[is];
        const double rc = std::fmin(r, st.t1);
        gy[i] = st.eval(0, rc);
        gq[i] = st.eval(1, rc);
    }
    gy[n - 1] = 0.0;  // exact by construction of R

    const double M = -gq[n - 1];
    const double E0 = -M / R;

    KingModel model;
    model.W0 = w0;
    model.R = R;
    model.M = M;
    model.E0 = E0;
    model.f0_sup = std::expm1(w0);
    model.C0 = 1.0 / (2.0 + 2.0 * model.f0_sup);
    model.grid_r = gr;
    model.grid_u0.resize(n);
    model.grid_rho0.resize(n);
    model.grid_m0.resize(n);
    std::vector<double> du(n), drho(n), dm(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = gr[i], y = std::fmax(gy[i], 0.0), m = -gq[i];
        model.grid_u0[i] = E0 - y;
        model.grid_rho0[i] = density_of_depth(y);
        model.grid_m0[i] = std::fmax(m, 0.0);
        du[i] = (r > 0) ? m / (r * r) : 0.0;
        dm[i] = 4.0 * pi * r * r * model.grid_rho0[i];
        drho[i] = -ddensity_of_depth(y) * du[i];
    }
    // strict monotonicity of the potential (equivalently: depth decreasing)
    for (std::size_t i = 0; i + 1 < n; ++i)
        if (!(model.grid_u0[i] < model.grid_u0[i + 1]))
            throw NonMonotonePotential("build_king: potential profile not strictly increasing near r = " +
                                       std::to_string(gr[i]));

    model.u_interp_ = math::MonotoneCubic(0.0, dr_grid, model.grid_u0, du);
    model.m_interp_ = math::MonotoneCubic(0.0, dr_grid, model.grid_m0, dm);
    model.rho_interp_ = math::MonotoneCubic(0.0, dr_grid, model.grid_rho0, drho);
    return model;
}

} // namespace kinglab

#endif
