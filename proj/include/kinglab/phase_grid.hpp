#ifndef KINGLAB_PHASE_GRID_HPP
#define KINGLAB_PHASE_GRID_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "kinglab/errors.hpp"
#include "kinglab/king_model.hpp"
#include "kinglab/math/parallel.hpp"
#include "kinglab/math/quadrature.hpp"

namespace kinglab {

/// Full phase-space measure in reduced coordinates: dx dv = measure * dr dw dL
/// with w running over the whole real line. (The value is 4 pi^2; the often
/// quoted 8 pi^2 refers to the half-range w > 0 of even integrands.)
inline constexpr double phase_measure = 4.0 * pi * pi;

/// Reduced velocity-space measure at fixed radius: dv = (pi / r^2) dw dL.
inline double velocity_measure(double r) { return pi / (r * r); }

/// Tensor grid over (r, w, L) covering the steady-state support plus margin.
/// Nodes include the box boundaries; node counts should be odd so the
/// composite Simpson weights are exact. The L axis is quadratically
/// clustered toward L = 0 (uniform in zeta = sqrt(L/L_max)): the physical
/// support shrinks like L <= 2 r^2 (E0 - U0) at small radii and a uniform
/// L grid cannot resolve it there.
struct PhaseGrid {
    std::size_t nr = 129, nw = 129, nl = 65;
    double r_max = 1, w_max = 1, L_max = 1;

    static PhaseGrid covering(const KingModel& model, double margin = 1.15,
                              std::size_t nr = 129, std::size_t nw = 129, std::size_t nl = 65) {
        PhaseGrid g;
        g.nr = nr; g.nw = nw; g.nl = nl;
        g.r_max = margin * model.R;
        g.w_max = margin * std::sqrt(2.0 * model.W0);
        double lmax = 0.0;
        for (std::size_t i = 0; i < model.grid_r.size(); ++i) {
            const double r = model.grid_r[i];
            lmax = std::fmax(lmax, 2.0 * r * r * (model.E0 - model.grid_u0[i]));
        }
        g.L_max = margin * lmax;
        return g;
    }

    double dr() const { return r_max / double(nr - 1); }
    double dw() const { return 2.0 * w_max / double(nw - 1); }
    double dzeta() const { return 1.0 / double(nl - 1); }
    double r(std::size_t i) const { return double(i) * dr(); }
    /// exactly antisymmetric node values: w(nw-1-j) == -w(j) bitwise
    double w(std::size_t j) const {
        return dw() * (double(j) - 0.5 * double(nw - 1));
    }
    double zeta(std::size_t k) const { return double(k) * dzeta(); }
    double L(std::size_t k) const { const double z = zeta(k); return L_max * z * z; }
    /// measure volume of the k-th node's control cell along L
    double l_cell_volume(std::size_t k) const {
        const double zlo = std::fmax(zeta(k) - 0.5 * dzeta(), 0.0);
        const double zhi = std::fmin(zeta(k) + 0.5 * dzeta(), 1.0);
        return L_max * (zhi * zhi - zlo * zlo);
    }
    std::size_t size() const { return nr * nw * nl; }
    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
        return (i * nw + j) * nl + k;
    }
};

/// Scalar field on reduced phase space, sampled on a PhaseGrid.
struct PhaseField {
    PhaseGrid grid;
    std::vector<double> values;

    explicit PhaseField(const PhaseGrid& g) : grid(g), values(g.size(), 0.0) {}

    double& at(std::size_t i, std::size_t j, std::size_t k) { return values[grid.index(i, j, k)]; }
    double at(std::size_t i, std::size_t j, std::size_t k) const { return values[grid.index(i, j, k)]; }

    /// trilinear interpolation (clamped to the box; linear in (r, w, zeta))
    double operator()(double r, double w, double L) const {
        auto cell = [](double x, double dx, std::size_t n) {
            double u = x / dx;
            if (u < 0) u = 0;
            if (u > double(n - 1)) u = double(n - 1);
            std::size_t i = std::size_t(u);
            if (i >= n - 1) i = n - 2;
            return std::pair<std::size_t, double>(i, u - double(i));
        };
        const double zeta = std::sqrt(std::fmax(L, 0.0) / grid.L_max);
        auto [i, a] = cell(r, grid.dr(), grid.nr);
        auto [j, b] = cell(w + grid.w_max, grid.dw(), grid.nw);
        auto [k, c] = cell(zeta, grid.dzeta(), grid.nl);
        double v = 0.0;
        for (int di = 0; di < 2; ++di)
            for (int dj = 0; dj < 2; ++dj)
                for (int dk = 0; dk < 2; ++dk) {
                    const double wgt = (di ? a : 1 - a) * (dj ? b : 1 - b) * (dk ? c : 1 - c);
                    v += wgt * at(i + di, j + dj, k + dk);
                }
        return v;
    }
};

/// Samples a pointwise evaluable (r,w,L) -> double onto a grid, in parallel.
template <class F>
PhaseField sample_phase_field(const PhaseGrid& g, F&& f) {
    PhaseField out(g);
    math::parallel_for(g.nr, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i)
            for (std::size_t j = 0; j < g.nw; ++j)
                for (std::size_t k = 0; k < g.nl; ++k)
                    out.at(i, j, k) = f(g.r(i), g.w(j), g.L(k));
    });
    return out;
}

/// Composite Simpson weights along each axis of the grid; the L-axis weights
/// absorb the clustering Jacobian dL = 2 L_max zeta dzeta.
struct GridWeights {
    std::vector<double> wr, ww, wl;
    explicit GridWeights(const PhaseGrid& g)
        : wr(math::simpson_weights(g.nr, g.dr())),
          ww(math::simpson_weights(g.nw, g.dw())),
          wl(math::simpson_weights(g.nl, g.dzeta())) {
        for (std::size_t k = 0; k < g.nl; ++k) wl[k] *= 2.0 * g.L_max * g.zeta(k);
    }
};

/// integral of f(r,w,L) over the box against the full measure dx dv
template <class F>
double phase_integral(const PhaseGrid& g, F&& f) {
    const GridWeights wt(g);
    const double v = math::parallel_sum(g.nr, [&](std::size_t i) {
        double si = 0.0;
        for (std::size_t j = 0; j < g.nw; ++j) {
            double sj = 0.0;
            for (std::size_t k = 0; k < g.nl; ++k)
                sj += wt.wl[k] * f(g.r(i), g.w(j), g.L(k));
            si += wt.ww[j] * sj;
        }
        return wt.wr[i] * si;
    });
    return phase_measure * v;
}

/// integral of a sampled field (optionally transformed pointwise) over dx dv
template <class Transform>
double phase_integral(const PhaseField& f, Transform&& t) {
    const PhaseGrid& g = f.grid;
    const GridWeights wt(g);
    const double v = math::parallel_sum(g.nr, [&](std::size_t i) {
        double si = 0.0;
        for (std::size_t j = 0; j < g.nw; ++j) {
            double sj = 0.0;
            for (std::size_t k = 0; k < g.nl; ++k)
                sj += wt.wl[k] * t(f.at(i, j, k), g.r(i), g.w(j), g.L(k));
            si += wt.ww[j] * sj;
        }
        return wt.wr[i] * si;
    });
    return phase_measure * v;
}

/// Radial shell-mass density mu(r_i) = 4 pi r^2 rho(r_i) of an evaluable,
/// mu(r) = measure * int f dw dL, so that m(r) = int_0^r mu.
template <class F>
std::vector<double> radial_shell_density(const PhaseGrid& g, F&& f) {
    const GridWeights wt(g);
    std::vector<double> mu(g.nr, 0.0);
    math::parallel_for(g.nr, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < g.nw; ++j) {
                double sj = 0.0;
                for (std::size_t k = 0; k < g.nl; ++k)
                    sj += wt.wl[k] * f(g.r(i), g.w(j), g.L(k));
                s += wt.ww[j] * sj;
            }
            mu[i] = phase_measure * s;
        }
    });
    return mu;
}

/// || grad U ||_2^2 of the field induced by a radial shell density sampled on
/// the grid: 4 pi int m(r)^2 / r^2 dr plus the analytic exterior tail.
inline double field_norm2_from_shell_density(const PhaseGrid& g, const std::vector<double>& mu) {
    const std::vector<double> m = math::cumulative_integral(mu, g.dr());
    std::vector<double> integrand(g.nr, 0.0);
    for (std::size_t i = 1; i < g.nr; ++i) {
        const double r = g.r(i);
        integrand[i] = m[i] * m[i] / (r * r);
    }
    const auto w = math::simpson_weights(g.nr, g.dr());
    double s = 0.0;
    for (std::size_t i = 0; i < g.nr; ++i) s += w[i] * integrand[i];
    const double m_tot = m.back();
    s += m_tot * m_tot / g.r_max;
    return 4.0 * pi * s;
}

} // namespace kinglab

#endif
